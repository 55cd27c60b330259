"""Closed-form scale-family risk-neutral densities.

Each family is reparametrised to a standardized variable ``U`` with mean one
and a single dispersion parameter ``nu`` (``nu = sigma*sqrt(t)``).  Pricing
uses only the cdf ``Q1``, the truncated mean ``Delta1(s) = E[U; U > s]`` and the
forward scale ``mu = S*exp((r - q)*t)``:

    C(K) = S e^{-qt} Delta1(K/mu) - K e^{-rt} (1 - Q1(K/mu)) = e^{-rt} mu c1(K/mu)

with ``c1(s) = Delta1(s) - s*(1 - Q1(s)) = E[(U - s)^+]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .heston import MarketContext
from .numerics import (
    BracketError,
    brent_root,
    integrate_interval,
    ln_gamma,
    log_norm_cdf,
    norm_cdf,
    norm_pdf,
    reg_gamma_lower,
    reg_gamma_upper,
)

__all__ = [
    "FamilyKind",
    "MomentInfeasibleError",
    "ScaledRND",
    "ShapeSolveError",
    "StandardizedRND",
    "c1",
    "call_price",
    "cdf1",
    "make_standardized",
    "moments",
    "solve_shape",
    "truncated_mean1",
]


class FamilyKind(str, enum.Enum):
    LOGNORMAL = "lognormal"
    GAMMA = "gamma"
    INVERSE_GAUSSIAN = "invgauss"
    WEIBULL = "weibull"
    INVERSE_WEIBULL = "invweibull"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    FamilyKind.LOGNORMAL: "LogNormal",
    FamilyKind.GAMMA: "Gamma",
    FamilyKind.INVERSE_GAUSSIAN: "InvGaussian",
    FamilyKind.WEIBULL: "Weibull",
    FamilyKind.INVERSE_WEIBULL: "InvWeibull",
}


class ShapeSolveError(ValueError):
    """No Weibull / inverse-Weibull shape matches the requested ``nu``."""


class MomentInfeasibleError(ValueError):
    """Skewness or kurtosis does not exist for the requested ``nu``."""


# ---------------------------------------------------------------------------
# Weibull-type shape equations

WEIBULL_BRACKET = (0.5, 500.0)
INV_WEIBULL_BRACKET = (2.0 + 1e-6, 500.0)
INV_WEIBULL_MOMENT_BRACKET = (4.0 + 1e-6, 500.0)


def _h(j, xi):
    """``Gamma(1 + j/xi)``; negative ``xi`` gives the inverse-Weibull ``Gamma(1 - j/|xi|)``."""
    return math.exp(ln_gamma(1.0 + j / xi))


def _shape_residual(xi, nu, inverse):
    sign = -1.0 if inverse else 1.0
    log_ratio = ln_gamma(1.0 + sign * 2.0 / xi) - 2.0 * ln_gamma(1.0 + sign * 1.0 / xi)
    return log_ratio - math.log1p(nu * nu)


def solve_shape(kind: FamilyKind, nu: float, for_moments: bool = False) -> float:
    """Shape ``xi`` with ``h2/h1^2 = 1 + nu^2`` for the (inverse) Weibull family."""
    kind = FamilyKind(kind)
    if kind is FamilyKind.WEIBULL:
        lo, hi = WEIBULL_BRACKET
        inverse = False
    elif kind is FamilyKind.INVERSE_WEIBULL:
        lo, hi = INV_WEIBULL_MOMENT_BRACKET if for_moments else INV_WEIBULL_BRACKET
        inverse = True
    else:
        raise ValueError(f"{kind.value} has no shape equation")
    try:
        return brent_root(lambda xi: _shape_residual(xi, nu, inverse), lo, hi, tol=1e-12)
    except BracketError as exc:
        if inverse:
            need = 4 if for_moments else 2
            raise ShapeSolveError(
                f"no inverse-Weibull shape xi > {need} has variance {nu}^2 with mean one"
            ) from exc
        raise ShapeSolveError(f"Weibull shape for nu={nu} lies outside {WEIBULL_BRACKET}") from exc


# ---------------------------------------------------------------------------
# standardized family


@dataclass(frozen=True)
class StandardizedRND:
    """Mean-one distribution from one of the five families.

    ``shape`` is ``nu`` for the log-normal, ``a = 1/nu^2`` for the gamma,
    ``lambda = 1/nu^2`` for the inverse Gaussian and the solved ``xi`` for the
    Weibull-type families.  ``scale1`` is the scale that pins the mean at one:
    ``1/a`` for the gamma, ``1/h1(xi)`` for Weibull, ``1/h1(-xi)`` for inverse
    Weibull and ``1`` otherwise.
    """

    kind: FamilyKind
    nu: float
    shape: float
    scale1: float

    @property
    def variance(self) -> float:
        if self.kind is FamilyKind.LOGNORMAL:
            return math.expm1(self.nu ** 2)
        return self.nu ** 2

    # -- density -----------------------------------------------------------

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        kind, nu = self.kind, self.nu
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            pos = np.where(u > 0, u, 1.0)
            if kind is FamilyKind.LOGNORMAL:
                out = norm_pdf((np.log(pos) + 0.5 * nu * nu) / nu) / (pos * nu)
            elif kind is FamilyKind.GAMMA:
                a = self.shape
                out = np.exp(math.log(a) + (a - 1.0) * np.log(a * pos) - a * pos - ln_gamma(a))
            elif kind is FamilyKind.INVERSE_GAUSSIAN:
                out = norm_pdf((pos - 1.0) / (nu * np.sqrt(pos))) / (nu * pos ** 1.5)
            elif kind is FamilyKind.WEIBULL:
                xi, lam = self.shape, self.scale1
                z = (pos / lam) ** xi
                out = xi / pos * z * np.exp(-z)
            else:
                xi, alpha = self.shape, self.scale1
                z = (alpha / pos) ** xi
                out = xi / pos * z * np.exp(-z)
        out = np.where(u > 0, np.nan_to_num(out, nan=0.0, posinf=0.0), 0.0)
        return out[()] if out.ndim == 0 else out

    def cdf(self, u):
        """``Q1(u) = P(U <= u)``."""
        u = np.asarray(u, dtype=float)
        kind, nu = self.kind, self.nu
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            pos = np.where(u > 0, u, 1.0)
            if kind is FamilyKind.LOGNORMAL:
                out = norm_cdf((np.log(pos) + 0.5 * nu * nu) / nu)
            elif kind is FamilyKind.GAMMA:
                out = reg_gamma_lower(self.shape, self.shape * pos)
            elif kind is FamilyKind.INVERSE_GAUSSIAN:
                root = nu * np.sqrt(pos)
                out = (norm_cdf((pos - 1.0) / root)
                       + np.exp(2.0 / nu ** 2 + log_norm_cdf(-(pos + 1.0) / root)))
            elif kind is FamilyKind.WEIBULL:
                out = -np.expm1(-((pos / self.scale1) ** self.shape))
            else:
                out = np.exp(-((self.scale1 / pos) ** self.shape))
        out = np.clip(np.where(u > 0, out, 0.0), 0.0, 1.0)
        return out[()] if out.ndim == 0 else out

    def sf(self, u):
        """``1 - Q1(u)`` computed directly in the upper tail."""
        u = np.asarray(u, dtype=float)
        kind, nu = self.kind, self.nu
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            pos = np.where(u > 0, u, 1.0)
            if kind is FamilyKind.LOGNORMAL:
                out = norm_cdf(-(np.log(pos) + 0.5 * nu * nu) / nu)
            elif kind is FamilyKind.GAMMA:
                out = reg_gamma_upper(self.shape, self.shape * pos)
            elif kind is FamilyKind.INVERSE_GAUSSIAN:
                root = nu * np.sqrt(pos)
                out = (norm_cdf(-(pos - 1.0) / root)
                       - np.exp(2.0 / nu ** 2 + log_norm_cdf(-(pos + 1.0) / root)))
            elif kind is FamilyKind.WEIBULL:
                out = np.exp(-((pos / self.scale1) ** self.shape))
            else:
                out = -np.expm1(-((self.scale1 / pos) ** self.shape))
        out = np.clip(np.where(u > 0, out, 1.0), 0.0, 1.0)
        return out[()] if out.ndim == 0 else out

    # -- pricing functionals -------------------------------------------------

    def truncated_mean(self, s):
        """``Delta1(s) = E[U; U > s]``."""
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < 0):
            raise ValueError("truncated mean needs s >= 0")
        kind, nu = self.kind, self.nu
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            pos = np.where(s_arr > 0, s_arr, 1.0)
            if kind is FamilyKind.LOGNORMAL:
                out = norm_cdf((0.5 * nu * nu - np.log(pos)) / nu)
            elif kind is FamilyKind.GAMMA:
                out = reg_gamma_upper(self.shape + 1.0, self.shape * pos)
            elif kind is FamilyKind.WEIBULL:
                xi = self.shape
                out = reg_gamma_upper(1.0 + 1.0 / xi, (pos / self.scale1) ** xi)
            elif kind is FamilyKind.INVERSE_WEIBULL:
                # U = alpha * Y^(-1/xi) with Y ~ Exp(1): E[U; U > s] = P(1 - 1/xi, (alpha/s)^xi)
                xi = self.shape
                out = reg_gamma_lower(1.0 - 1.0 / xi, (self.scale1 / pos) ** xi)
            else:
                out = np.vectorize(self._ig_truncated_mean, otypes=[float])(pos)
        out = np.clip(np.where(s_arr > 0, out, 1.0), 0.0, 1.0)
        return out[()] if out.ndim == 0 else out

    def _ig_truncated_mean(self, s: float) -> float:
        # u = s + w/(1 - w) maps [s, inf) onto [0, 1)
        def integrand(w):
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                gap = 1.0 - w
                u = s + w / gap
                vals = u * self.pdf(u) / (gap * gap)
            return np.nan_to_num(vals, nan=0.0, posinf=0.0)

        return float(integrate_interval(integrand, 0.0, 1.0, abs_tol=1e-13, rel_tol=1e-12))

    def c1(self, s):
        """Undiscounted standardized call ``E[(U - s)^+]``."""
        s = np.asarray(s, dtype=float)
        out = self.truncated_mean(s) - s * self.sf(s)
        out = np.maximum(out, np.maximum(1.0 - s, 0.0))
        return out[()] if np.ndim(out) == 0 else out


def make_standardized(kind: FamilyKind, nu: float, for_moments: bool = False) -> StandardizedRND:
    """Mean-one member of ``kind`` with dispersion ``nu``.

    ``for_moments`` restricts the inverse-Weibull shape to ``xi > 4`` so that
    skewness and kurtosis exist.
    """
    kind = FamilyKind(kind)
    if not (nu > 0 and math.isfinite(nu)):
        raise ValueError(f"nu must be positive, got {nu}")
    if kind is FamilyKind.LOGNORMAL:
        return StandardizedRND(kind, nu, nu, 1.0)
    if kind is FamilyKind.GAMMA:
        a = 1.0 / nu ** 2
        return StandardizedRND(kind, nu, a, 1.0 / a)
    if kind is FamilyKind.INVERSE_GAUSSIAN:
        return StandardizedRND(kind, nu, 1.0 / nu ** 2, 1.0)
    xi = solve_shape(kind, nu, for_moments=for_moments)
    if kind is FamilyKind.WEIBULL:
        return StandardizedRND(kind, nu, xi, 1.0 / _h(1, xi))
    return StandardizedRND(kind, nu, xi, 1.0 / _h(1, -xi))


def cdf1(std: StandardizedRND, u):
    return std.cdf(u)


def truncated_mean1(std: StandardizedRND, s):
    return std.truncated_mean(s)


def c1(std: StandardizedRND, s):
    return std.c1(s)


@dataclass(frozen=True)
class ScaledRND:
    """``X = mu*U``; the distribution of ``S_T`` when ``mu`` is the forward."""

    std: StandardizedRND
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    def cdf(self, x):
        return self.std.cdf(np.asarray(x, dtype=float) / self.mu)

    def pdf(self, x):
        return self.std.pdf(np.asarray(x, dtype=float) / self.mu) / self.mu

    def truncated_mean(self, s):
        """``Delta_mu(s) = Delta1(s/mu)``."""
        return self.std.truncated_mean(np.asarray(s, dtype=float) / self.mu)

    def undiscounted_call(self, s):
        """``c_mu(s) = mu*c1(s/mu)``."""
        return self.mu * self.std.c1(np.asarray(s, dtype=float) / self.mu)


def call_price(std: StandardizedRND, ctx: MarketContext, strike):
    """European call under the scale-family RND with forward scale ``ctx.mu``."""
    strike = np.asarray(strike, dtype=float)
    if np.any(strike <= 0):
        raise ValueError("strike must be positive")
    if std.kind is FamilyKind.LOGNORMAL:
        # straight from log-moneyness: forming K/mu first costs an extra
        # rounding that deep out of the money calls amplify
        nu = std.nu
        log_s = np.log(strike / ctx.spot) - (ctx.rate - ctx.dividend) * ctx.tau
        delta1 = norm_cdf((0.5 * nu * nu - log_s) / nu)
        tail = norm_cdf(-(log_s + 0.5 * nu * nu) / nu)
    else:
        s = strike / ctx.mu
        delta1, tail = std.truncated_mean(s), std.sf(s)
    price = ctx.carry_spot * delta1 - strike * ctx.discount * tail
    price = np.maximum(price, np.maximum(ctx.carry_spot - strike * ctx.discount, 0.0))
    return price[()] if np.ndim(price) == 0 else price


# ---------------------------------------------------------------------------
# skewness / excess kurtosis


def _weibull_type_moments(xi):
    h1, h2, h3, h4 = (_h(j, xi) for j in (1, 2, 3, 4))
    var = h2 - h1 * h1
    skew = (h3 - 3.0 * h2 * h1 + 2.0 * h1 ** 3) / var ** 1.5
    kurt = (h4 - 4.0 * h3 * h1 + 6.0 * h2 * h1 * h1 - 3.0 * h1 ** 4) / var ** 2
    return skew, kurt - 3.0


def moments(kind: FamilyKind, nu: float) -> tuple[float, float]:
    """(skewness, excess kurtosis) of the standardized family."""
    kind = FamilyKind(kind)
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    if kind is FamilyKind.GAMMA:
        return 2.0 * nu, 6.0 * nu * nu
    if kind is FamilyKind.INVERSE_GAUSSIAN:
        return 3.0 * nu, 15.0 * nu * nu
    if kind is FamilyKind.LOGNORMAL:
        e = math.exp(nu * nu)
        return (e + 2.0) * math.sqrt(e - 1.0), e ** 4 + 2.0 * e ** 3 + 3.0 * e ** 2 - 6.0
    if kind is FamilyKind.WEIBULL:
        return _weibull_type_moments(solve_shape(kind, nu))
    try:
        xi = solve_shape(kind, nu, for_moments=True)
    except ShapeSolveError as exc:
        raise MomentInfeasibleError(
            f"inverse-Weibull skewness/kurtosis need xi > 4; nu={nu} is too large"
        ) from exc
    return _weibull_type_moments(-xi)
