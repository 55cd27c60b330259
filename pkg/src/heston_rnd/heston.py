"""Heston characteristic functions, semi-closed-form calls, delta and the RND.

Conventions
-----------
``j = 1, 2`` index Heston's two in-the-money probabilities.  With
``u1 = 1/2, u2 = -1/2, b1 = kappa - rho*eta, b2 = kappa, a = kappa*theta`` and
``beta = b_j - i*rho*eta*w`` the characteristic function of ``log S_T`` is

    psi_j(w) = exp(B_j + D_j*v0 + i*w*(log S + (r - q)*tau))

where ``B_j, D_j`` use the negative root ``d = -sqrt(...)`` (the "little trap"
form), so the principal complex logarithm stays continuous in ``w``.

Everything downstream works in the standardized variable ``S* = S_T / mu`` with
``mu = S*exp((r - q)*tau)``; the standardized characteristic function is
``exp(B_j + D_j*v0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    QuadratureSpec,
    integrate_interval,
    integrate_semi_infinite,
    norm_cdf,
)

__all__ = [
    "CharFnOverflowError",
    "HestonParams",
    "MarketContext",
    "NegativeDensityError",
    "black_scholes_call",
    "call_price",
    "char_fn",
    "delta",
    "feller_ratio",
    "prob_in_money",
    "rnd_cdf",
    "rnd_density",
    "rnd_moments",
    "rnd_support",
]

OMEGA_MIN = 1e-8
# Low v0 with strong correlation leaves only linear (not Gaussian) decay in
# omega; the ODAX set needs omega ~ 550, i.e. about 70 panels of width 8.
HESTON_SPEC = QuadratureSpec(max_panels=256)
# exp() overflows just above 709
_EXPONENT_BOUND = 700.0
_NEGATIVE_DENSITY_TOL = 1e-9


class CharFnOverflowError(OverflowError):
    """The characteristic-function exponent left the representable range."""


class NegativeDensityError(ArithmeticError):
    """Fourier inversion produced a clearly negative density."""


@dataclass(frozen=True)
class HestonParams:
    kappa: float
    theta: float
    eta: float
    rho: float
    v0: float

    def __post_init__(self):
        for name in ("kappa", "theta", "eta", "rho", "v0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.v0 < 0:
            raise ValueError(f"v0 must be non-negative, got {self.v0}")

    @property
    def feller_ratio(self) -> float:
        return feller_ratio(self)


@dataclass(frozen=True)
class MarketContext:
    spot: float
    rate: float
    tau: float
    dividend: float = 0.0

    def __post_init__(self):
        if not self.spot > 0:
            raise ValueError(f"spot must be positive, got {self.spot}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not (math.isfinite(self.rate) and math.isfinite(self.dividend)):
            raise ValueError("rate and dividend must be finite")

    @classmethod
    def from_days(cls, spot, rate, days, dividend=0.0, basis=365.0):
        return cls(spot=spot, rate=rate, tau=days / basis, dividend=dividend)

    @property
    def mu(self) -> float:
        """Forward scale ``S*exp((r - q)*tau)``, the risk-neutral mean of ``S_T``."""
        return self.spot * math.exp((self.rate - self.dividend) * self.tau)

    @property
    def discount(self) -> float:
        return math.exp(-self.rate * self.tau)

    @property
    def carry_spot(self) -> float:
        """Dividend-adjusted spot ``S*exp(-q*tau)``."""
        return self.spot * math.exp(-self.dividend * self.tau)

    def scaled(self, alpha: float) -> "MarketContext":
        return MarketContext(self.spot * alpha, self.rate, self.tau, self.dividend)


def feller_ratio(params: HestonParams) -> float:
    """``kappa*theta/eta**2``; above 1 the variance never touches zero."""
    return params.kappa * params.theta / params.eta ** 2


# ---------------------------------------------------------------------------
# characteristic function


def _log1p_complex(z):
    # numpy's complex log1p is log(1 + z) and drops the small real part
    x, y = z.real, z.imag
    return 0.5 * np.log1p(x * (2.0 + x) + y * y) + 1j * np.arctan2(y, 1.0 + x)


def _log_cf_std(j, omega, params: HestonParams, tau: float):
    """``B_j + D_j*v0`` for (possibly complex) ``omega``."""
    if j not in (1, 2):
        raise ValueError(f"j must be 1 or 2, got {j}")
    kappa, theta, eta, rho = params.kappa, params.theta, params.eta, params.rho
    u = 0.5 if j == 1 else -0.5
    b = kappa - rho * eta if j == 1 else kappa
    w = np.asarray(omega, dtype=complex)
    beta = b - 1j * rho * eta * w
    q = 2j * u * w - w * w
    d = np.sqrt(beta * beta - eta * eta * q)
    # beta - d = eta^2 q / (beta + d): no cancellation as eta -> 0
    s = beta + d
    g = eta * eta * q / (s * s)
    e = np.exp(-d * tau)
    one_minus_e = -np.expm1(-d * tau)
    D = q / s * one_minus_e / (1.0 - g * e)
    # log((1 - g e)/(1 - g)) = log1p(g (1 - e)/(1 - g)), and g / eta^2 = q / s^2
    scaled_log = _log1p_complex(g * one_minus_e / (1.0 - g)) / (eta * eta)
    B = kappa * theta * (q / s * tau - 2.0 * scaled_log)
    out = B + D * params.v0
    if np.any(out.real > _EXPONENT_BOUND) or not np.all(np.isfinite(out)):
        raise CharFnOverflowError(
            f"characteristic-function exponent out of range for {params}"
        )
    return out


def char_fn(j: int, omega, params: HestonParams, ctx: MarketContext):
    """``psi_j(omega)``: characteristic function of ``log S_T`` under measure ``j``."""
    shift = math.log(ctx.spot) + (ctx.rate - ctx.dividend) * ctx.tau
    return np.exp(_log_cf_std(j, omega, params, ctx.tau) + 1j * np.asarray(omega) * shift)


# ---------------------------------------------------------------------------
# probabilities and prices


def _probabilities(js, log_moneyness, params, tau, spec):
    """P_j for every j in ``js`` and every ``log(K/mu)``; shape (len(js), m)."""
    y = np.atleast_1d(np.asarray(log_moneyness, dtype=float))

    def integrand(w):
        rows = []
        for j in js:
            cf = np.exp(_log_cf_std(j, w, params, tau))
            rows.append((np.exp(-1j * np.outer(y, w)) * (cf / (1j * w))).real)
        return np.stack(rows)

    integral = integrate_semi_infinite(integrand, OMEGA_MIN, spec)
    # the integrand has a finite limit at 0; add the skipped sliver [0, OMEGA_MIN]
    integral = integral + OMEGA_MIN * integrand(np.array([OMEGA_MIN]))[..., 0]
    return np.clip(0.5 + np.reshape(integral, (len(js), y.size)) / math.pi, 0.0, 1.0)


def _unwrap(values, like):
    return float(values[0]) if np.ndim(like) == 0 else values.reshape(np.shape(like))


def prob_in_money(j: int, strike, params: HestonParams, ctx: MarketContext,
                  spec: QuadratureSpec = HESTON_SPEC):
    """Heston's ``P_j`` at ``strike`` (scalar or array).

    ``P_2`` is the risk-neutral probability ``Q(S_T > K)``; ``P_1`` is the same
    event under the share measure.
    """
    strike_arr = np.asarray(strike, dtype=float)
    if np.any(strike_arr <= 0):
        raise ValueError("strike must be positive")
    p = _probabilities((j,), np.log(strike_arr / ctx.mu), params, ctx.tau, spec)[0]
    return _unwrap(p, strike)


def call_price(strike, params: HestonParams, ctx: MarketContext,
               spec: QuadratureSpec = HESTON_SPEC):
    """European call ``S e^{-qt} P_1 - K e^{-rt} P_2`` (scalar or array of strikes).

    Written as ``S e^{-qt} (P_1 - (K/mu) P_2)`` so that the price depends on
    strike and spot only through moneyness.
    """
    strike_arr = np.asarray(strike, dtype=float)
    if np.any(strike_arr <= 0):
        raise ValueError("strike must be positive")
    m = (strike_arr / ctx.mu).ravel()
    p1, p2 = _probabilities((1, 2), np.log(m), params, ctx.tau, spec)
    price = ctx.carry_spot * (p1 - m * p2)
    floor = np.maximum(ctx.carry_spot * (1.0 - m), 0.0)
    price = np.clip(price, floor, ctx.carry_spot)
    return _unwrap(price, strike)


def delta(strike, params: HestonParams, ctx: MarketContext,
          spec: QuadratureSpec = HESTON_SPEC):
    """``dC/dS``, equal to ``e^{-qt} P_1`` (just ``P_1`` without dividends)."""
    return math.exp(-ctx.dividend * ctx.tau) * np.asarray(prob_in_money(1, strike, params, ctx, spec))[()]


def black_scholes_call(spot, strike, rate, tau, sigma, dividend=0.0):
    """Black-Scholes-Merton call with continuous dividend yield."""
    spot = np.asarray(spot, dtype=float)
    strike = np.asarray(strike, dtype=float)
    vol = sigma * np.sqrt(tau)
    d1 = (np.log(spot / strike) + (rate - dividend + 0.5 * sigma * sigma) * tau) / vol
    d2 = d1 - vol
    out = (spot * np.exp(-dividend * tau) * norm_cdf(d1)
           - strike * np.exp(-rate * tau) * norm_cdf(d2))
    return out[()] if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# risk-neutral density of S* = S_T / mu


def rnd_density(u, j: int, params: HestonParams, ctx: MarketContext,
                spec: QuadratureSpec = HESTON_SPEC):
    """Density of ``S* = S_T/mu`` under measure ``j`` by Fourier inversion.

    For ``j = 2`` this is the risk-neutral density.  The quadrature controls the
    log-price density ``u * p(u)``, so the residue check applies there: values in
    ``(-1e-9, 0)`` are clamped to zero, anything more negative raises
    ``NegativeDensityError``.
    """
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u_arr <= 0):
        raise ValueError("rnd_density is defined for u > 0")
    y = np.log(u_arr)

    def integrand(w):
        cf = np.exp(_log_cf_std(j, w, params, ctx.tau))
        return (np.exp(-1j * np.outer(y, w)) * cf).real

    log_dens = np.reshape(integrate_semi_infinite(integrand, 0.0, spec), y.shape) / math.pi
    if np.any(log_dens < -_NEGATIVE_DENSITY_TOL):
        worst = int(np.argmin(log_dens))
        raise NegativeDensityError(
            f"log-price density {log_dens[worst]:.3e} at u={u_arr[worst]:.6g}; "
            "quadrature failed or parameters are pathological"
        )
    return _unwrap(np.maximum(log_dens, 0.0) / u_arr, u)


def rnd_cdf(u, params: HestonParams, ctx: MarketContext,
            spec: QuadratureSpec = HESTON_SPEC):
    """Risk-neutral cdf of ``S*``: ``1 - P_2`` at strike ``u*mu``."""
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u_arr <= 0):
        raise ValueError("rnd_cdf is defined for u > 0")
    p2 = _probabilities((2,), np.log(u_arr), params, ctx.tau, spec)[0]
    return _unwrap(1.0 - p2, u)


def rnd_support(params: HestonParams, ctx: MarketContext, width: float = 14.0):
    """Interval of ``S*`` outside which the RND carries negligible mass.

    ``width`` standard deviations of log-price either side of zero, using the
    expected integrated variance as the scale.
    """
    k_tau = params.kappa * ctx.tau
    weight = -math.expm1(-k_tau) / k_tau
    total_var = params.theta * ctx.tau + (params.v0 - params.theta) * ctx.tau * weight
    half = width * math.sqrt(max(total_var, 1e-10))
    return math.exp(-half), math.exp(half)


def rnd_moments(params: HestonParams, ctx: MarketContext,
                spec: QuadratureSpec = HESTON_SPEC):
    """Mass, mean, standard deviation, skewness and excess kurtosis of the RND of ``S*``.

    Moments are integrated numerically from ``rnd_density`` over
    ``rnd_support``.
    """
    lower, upper = rnd_support(params, ctx)

    def integrand(u):
        d = rnd_density(u, 2, params, ctx, spec)
        return np.stack([d, u * d, u * u * d, u ** 3 * d, u ** 4 * d])

    m0, m1, m2, m3, m4 = integrate_interval(integrand, lower, upper, abs_tol=1e-10, rel_tol=1e-10)
    mean = m1 / m0
    c2 = m2 / m0 - mean ** 2
    c3 = m3 / m0 - 3 * mean * m2 / m0 + 2 * mean ** 3
    c4 = m4 / m0 - 4 * mean * m3 / m0 + 6 * mean ** 2 * m2 / m0 - 3 * mean ** 4
    sd = math.sqrt(c2)
    return {
        "mass": float(m0),
        "mean": float(mean),
        "sd": sd,
        "skewness": float(c3 / sd ** 3),
        "excess_kurtosis": float(c4 / c2 ** 2 - 3.0),
    }
