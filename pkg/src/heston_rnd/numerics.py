"""Special functions, semi-infinite adaptive quadrature and bracketed root finding.

The special functions are thin, domain-checked wrappers over ``scipy.special``.
The quadrature is a vectorised adaptive Gauss-Kronrod (7/15) rule applied on
expanding panels ``[lower, lower + w], [lower + w, lower + 2w], ...`` with the
tail cut off once panel contributions become negligible.  Integrands receive a
1-d array of nodes and may return an array whose *last* axis matches the nodes,
so a whole strike grid can be integrated in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special

__all__ = [
    "BracketError",
    "ConvergenceError",
    "QuadratureSpec",
    "brent_root",
    "integrate_interval",
    "integrate_semi_infinite",
    "ln_gamma",
    "log_norm_cdf",
    "norm_cdf",
    "norm_pdf",
    "reg_gamma_lower",
    "reg_gamma_upper",
]


class ConvergenceError(RuntimeError):
    """An iterative routine ran out of budget before meeting its tolerance."""


class BracketError(ValueError):
    """The supplied interval does not bracket a sign change."""


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    max_panels: int = 64
    tail_cutoff: float = 1e-12

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError(f"abs_tol must be positive, got {self.abs_tol}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if int(self.max_panels) < 1:
            raise ValueError(f"max_panels must be >= 1, got {self.max_panels}")
        if not self.tail_cutoff > 0:
            raise ValueError(f"tail_cutoff must be positive, got {self.tail_cutoff}")


DEFAULT_SPEC = QuadratureSpec()


# ---------------------------------------------------------------------------
# special functions


def norm_cdf(x):
    """Standard normal cdf."""
    return special.ndtr(x)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return out[()] if out.ndim == 0 else out


def log_norm_cdf(x):
    """``log Phi(x)``, accurate far into the lower tail."""
    return special.log_ndtr(x)


def ln_gamma(a):
    """``log Gamma(a)`` for ``a > 0``."""
    if np.any(np.asarray(a) <= 0):
        raise ValueError("ln_gamma requires a > 0")
    return special.gammaln(a)


def _check_gamma_args(a, x):
    if np.any(np.asarray(a) <= 0):
        raise ValueError("incomplete gamma requires a > 0")
    if np.any(np.asarray(x) < 0):
        raise ValueError("incomplete gamma requires x >= 0")


def reg_gamma_lower(a, x):
    """Regularised lower incomplete gamma ``P(a, x) = gamma(a, x) / Gamma(a)``."""
    _check_gamma_args(a, x)
    return special.gammainc(a, x)


def reg_gamma_upper(a, x):
    """``Q(a, x) = 1 - P(a, x)`` evaluated without cancellation."""
    _check_gamma_args(a, x)
    return special.gammaincc(a, x)


# ---------------------------------------------------------------------------
# quadrature

# Gauss-Kronrod 15-point nodes on [-1, 1]; the 7-point Gauss rule sits on the
# odd-indexed Kronrod abscissae.
_XK_HALF = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK_HALF = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG_HALF = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_XK = np.concatenate([-_XK_HALF[:-1], _XK_HALF[::-1]])
_WK = np.concatenate([_WK_HALF[:-1], _WK_HALF[::-1]])
_WG = np.zeros(15)
_WG[1::2] = np.concatenate([_WG_HALF[:-1], _WG_HALF[::-1]])

_MAX_INTERVALS = 4096


def _gk_adaptive(f, a, b, abs_tol, rel_tol):
    """Adaptive GK15 on a finite interval; returns (integral, error estimate)."""
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    total = None
    err_total = 0.0
    length = b - a
    n_done = 0
    while lo.size:
        centre = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        x = (centre[:, None] + half[:, None] * _XK[None, :]).ravel()
        fx = np.asarray(f(x))
        fx = fx.reshape(fx.shape[:-1] + (lo.size, 15))
        kron = (fx @ _WK) * half
        gauss = (fx @ _WG) * half
        diff = np.abs(kron - gauss)
        err = diff.reshape(-1, lo.size).max(axis=0) if diff.ndim > 1 else diff
        mag = np.abs(kron).reshape(-1, lo.size).max(axis=0) if kron.ndim > 1 else np.abs(kron)
        share = (hi - lo) / length
        ok = (err <= abs_tol * share) | (err <= rel_tol * mag)
        # intervals shrunk to rounding level are accepted as they stand
        ok |= half <= 64 * np.finfo(float).eps * np.maximum(np.abs(centre), 1.0)
        accepted = kron[..., ok].sum(axis=-1)
        total = accepted if total is None else total + accepted
        err_total += float(err[ok].sum())
        n_done += int(ok.sum())
        lo_r, hi_r = lo[~ok], hi[~ok]
        if n_done + 2 * lo_r.size > _MAX_INTERVALS:
            raise ConvergenceError(
                f"adaptive quadrature on [{a}, {b}] exceeded {_MAX_INTERVALS} subintervals"
            )
        mid = 0.5 * (lo_r + hi_r)
        lo = np.concatenate([lo_r, mid])
        hi = np.concatenate([mid, hi_r])
    return total, err_total


def integrate_interval(f: Callable, a: float, b: float, abs_tol: float = 1e-10,
                       rel_tol: float = 1e-10):
    """Integrate ``f`` over the finite interval ``[a, b]`` adaptively."""
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("integrate_interval needs finite limits")
    if a == b:
        probe = np.asarray(f(np.array([a])))
        return np.zeros(probe.shape[:-1])[()] if probe.ndim > 1 else 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    value, _ = _gk_adaptive(f, a, b, abs_tol, rel_tol)
    value = sign * value
    return value[()] if np.ndim(value) == 0 else value


def integrate_semi_infinite(f: Callable, lower: float, spec: QuadratureSpec = DEFAULT_SPEC,
                            panel_width: float = 8.0):
    """Integrate ``f`` over ``[lower, inf)`` on expanding panels.

    Each panel is integrated adaptively to a share of ``spec.abs_tol`` (or to
    ``spec.rel_tol`` relative to the running total).  Integration stops once two
    consecutive panels contribute less than ``spec.tail_cutoff`` in absolute
    value; two are required so that one accidental cancellation in an
    oscillating integrand does not end the sweep.  Raises ``ConvergenceError``
    if ``spec.max_panels`` panels are used up first.
    """
    if panel_width <= 0:
        raise ValueError("panel_width must be positive")
    panel_tol = spec.abs_tol / 8.0
    total = None
    quiet = 0
    for k in range(int(spec.max_panels)):
        a = lower + k * panel_width
        b = a + panel_width
        scale = 0.0 if total is None else float(np.max(np.abs(total)))
        part, _ = _gk_adaptive(f, a, b, max(panel_tol, spec.rel_tol * scale / 8.0),
                               spec.rel_tol)
        total = part if total is None else total + part
        if float(np.max(np.abs(part))) < spec.tail_cutoff:
            quiet += 1
            if quiet >= 2:
                return total[()] if np.ndim(total) == 0 else total
        else:
            quiet = 0
    raise ConvergenceError(
        f"integrand not negligible after {spec.max_panels} panels of width {panel_width}"
    )


# ---------------------------------------------------------------------------
# root finding


def brent_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10,
               max_iter: int = 200) -> float:
    """Root of ``f`` inside ``[lo, hi]`` by Brent's method."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return float(lo)
    if f_hi == 0.0:
        return float(hi)
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={f_lo!r}, {f_hi!r}")
    try:
        root, info = optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                                     maxiter=max_iter, full_output=True, disp=False)
    except RuntimeError as exc:  # pragma: no cover - brentq raises only with disp=True
        raise ConvergenceError(str(exc)) from exc
    if not info.converged:
        raise ConvergenceError(f"brent_root: {info.flag} after {info.iterations} iterations")
    return float(root)
