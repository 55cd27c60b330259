"""Fitting Heston parameters and scale-family dispersions to a call chain.

The Heston fit runs Nelder-Mead on ``(log kappa, log theta, log eta,
atanh rho)`` so every simplex vertex maps to admissible parameters.  The
Black-Scholes volatility fit is one-dimensional: a coarse log-spaced scan
followed by a bounded Brent refinement.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from . import heston
from .heston import HestonParams, MarketContext, black_scholes_call
from .numerics import QuadratureSpec
from .scale_rnd import FamilyKind, make_standardized
from .scale_rnd import call_price as family_call_price

__all__ = [
    "CalibResult",
    "ComparisonTable",
    "OptionChain",
    "OptionQuote",
    "calibrate_heston",
    "compare_models",
    "fit_bs_iv",
    "mse",
]

log = logging.getLogger(__name__)

# Objective value for parameter vectors the pricer cannot handle.
_PENALTY = 1e6
# Transformed coordinates are clipped here before mapping back; exp(8) ~ 3000.
_LOG_BOUND = 8.0
_ATANH_BOUND = 6.0


@dataclass(frozen=True)
class OptionQuote:
    strike: float
    mid: float

    def __post_init__(self):
        if not (self.strike > 0 and math.isfinite(self.strike)):
            raise ValueError(f"strike must be positive, got {self.strike}")
        if not (self.mid >= 0 and math.isfinite(self.mid)):
            raise ValueError(f"mid must be non-negative, got {self.mid} at strike {self.strike}")

    @classmethod
    def from_bid_ask(cls, strike: float, bid: float, ask: float) -> "OptionQuote":
        if ask < bid:
            raise ValueError(f"ask {ask} below bid {bid} at strike {strike}")
        return cls(strike, 0.5 * (bid + ask))


@dataclass(frozen=True)
class OptionChain:
    quotes: tuple[OptionQuote, ...]
    ctx: MarketContext
    v0_hint: float

    def __post_init__(self):
        quotes = tuple(self.quotes)
        object.__setattr__(self, "quotes", quotes)
        if not quotes:
            raise ValueError("an option chain needs at least one quote")
        if not self.v0_hint > 0:
            raise ValueError(f"v0_hint must be positive, got {self.v0_hint}")
        for prev, cur in zip(quotes, quotes[1:]):
            if not cur.strike > prev.strike:
                raise ValueError(
                    f"strikes must be strictly increasing: {cur.strike} follows {prev.strike}"
                )
        mids = np.array([q.mid for q in quotes])
        rises = np.flatnonzero(np.diff(mids) > 1e-9)
        if rises.size:
            k = quotes[rises[0] + 1].strike
            warnings.warn(f"call mid rises with strike at K={k}", stacklevel=3)

    @property
    def strikes(self) -> np.ndarray:
        return np.array([q.strike for q in self.quotes])

    @property
    def mids(self) -> np.ndarray:
        return np.array([q.mid for q in self.quotes])

    def __len__(self):
        return len(self.quotes)


@dataclass(frozen=True)
class CalibResult:
    params: HestonParams
    mse: float
    iterations: int
    converged: bool
    underdetermined: bool = False


def mse(model_prices, chain) -> float:
    """Mean squared pricing error against ``chain`` (an OptionChain or array of mids)."""
    market = chain.mids if isinstance(chain, OptionChain) else np.asarray(chain, dtype=float)
    model = np.asarray(model_prices, dtype=float)
    if model.shape != market.shape:
        raise ValueError(f"length mismatch: {model.size} model prices for {market.size} quotes")
    return float(np.mean((model - market) ** 2))


# ---------------------------------------------------------------------------
# Heston


def _to_free(p: HestonParams, fit_v0: bool) -> np.ndarray:
    x = [math.log(p.kappa), math.log(p.theta), math.log(p.eta), math.atanh(p.rho)]
    if fit_v0:
        x.append(math.log(p.v0))
    return np.array(x)


def _from_free(x, v0: float, fit_v0: bool) -> HestonParams:
    lk, lt, le = np.clip(x[:3], -_LOG_BOUND, _LOG_BOUND)
    rho = math.tanh(float(np.clip(x[3], -_ATANH_BOUND, _ATANH_BOUND)))
    if fit_v0:
        v0 = math.exp(float(np.clip(x[4], -_LOG_BOUND, _LOG_BOUND)))
    return HestonParams(math.exp(lk), math.exp(lt), math.exp(le), rho, v0)


def calibrate_heston(chain: OptionChain, init: HestonParams,
                     spec: QuadratureSpec = heston.HESTON_SPEC, max_iter: int = 2000,
                     fit_v0: bool = False, fatol: float = 1e-10) -> CalibResult:
    """Least-squares Heston fit by Nelder-Mead.

    ``v0`` stays at ``init.v0`` unless ``fit_v0`` is set.  The simplex stops
    once its objective spread drops below ``fatol`` or after ``max_iter``
    iterations; ``converged`` is False in the latter case.  The returned MSE is
    recomputed from the returned parameters.
    """
    strikes, ctx = chain.strikes, chain.ctx
    n_free = 5 if fit_v0 else 4

    def objective(x):
        try:
            p = _from_free(x, init.v0, fit_v0)
            prices = heston.call_price(strikes, p, ctx, spec)
        except (ValueError, ArithmeticError, RuntimeError):
            return _PENALTY
        value = mse(prices, chain)
        return value if math.isfinite(value) else _PENALTY

    x0 = _to_free(init, fit_v0)
    # unit-scale start in the free coordinates; scipy's default 5% nudge is
    # almost nothing for rho = 0
    simplex = np.vstack([x0] + [x0 + 0.5 * np.eye(n_free)[i] for i in range(n_free)])
    res = optimize.minimize(
        objective, x0, method="Nelder-Mead",
        options={"initial_simplex": simplex, "maxiter": max_iter, "maxfev": 4 * max_iter,
                 "xatol": np.inf, "fatol": fatol, "adaptive": False},
    )
    best = res.x if res.fun <= objective(x0) else x0
    params = _from_free(best, init.v0, fit_v0)
    final = mse(heston.call_price(strikes, params, ctx, spec), chain)
    if not res.success:
        log.warning("Heston calibration stopped without converging: %s", res.message)
    return CalibResult(params=params, mse=final, iterations=int(res.nit),
                       converged=bool(res.success), underdetermined=len(chain) < n_free)


# ---------------------------------------------------------------------------
# Black-Scholes volatility


def fit_bs_iv(chain: OptionChain, lo: float = 1e-3, hi: float = 5.0) -> float:
    """Single Black-Scholes volatility minimising the chain MSE."""
    ctx = chain.ctx
    strikes = chain.strikes

    def objective(sigma):
        prices = black_scholes_call(ctx.spot, strikes, ctx.rate, ctx.tau, sigma, ctx.dividend)
        return mse(prices, chain)

    grid = np.geomspace(lo, hi, 241)
    values = np.array([objective(s) for s in grid])
    i = int(np.argmin(values))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(objective, bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-12, "maxiter": 500})
    if not res.success:
        raise RuntimeError(f"volatility fit failed: {res.message}")
    return float(res.x) if res.fun <= values[i] else float(grid[i])


# ---------------------------------------------------------------------------
# model comparison


@dataclass(frozen=True, eq=False)
class ComparisonTable:
    """Per-strike model prices next to market mids, with one MSE per model."""

    strikes: np.ndarray
    market: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    mse: dict[str, float] = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return list(self.columns)

    def rows(self, price_decimals: int = 3, mse_decimals: int = 6) -> list[list[str]]:
        """Row 1: ``MSE,,<mse per model>``; row 2: ``strike,market,<labels>``; then prices."""
        out = [["MSE", ""] + [f"{self.mse[k]:.{mse_decimals}f}" for k in self.columns],
               ["strike", "market"] + self.labels]
        for i, k in enumerate(self.strikes):
            row = [f"{k:g}", f"{self.market[i]:.{price_decimals}f}"]
            row += [f"{col[i]:.{price_decimals}f}" for col in self.columns.values()]
            out.append(row)
        return out

    def write_csv(self, path, price_decimals: int = 3, mse_decimals: int = 6) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows(price_decimals, mse_decimals))

    @classmethod
    def read_csv(cls, path) -> "ComparisonTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2 or rows[0][0] != "MSE" or rows[1][:2] != ["strike", "market"]:
            raise ValueError(f"{path}: not a comparison table")
        labels = rows[1][2:]
        body = np.array([[float(v) for v in r] for r in rows[2:]], dtype=float).reshape(-1, 2 + len(labels))
        columns = {lab: body[:, 2 + j] for j, lab in enumerate(labels)}
        mses = {lab: float(v) for lab, v in zip(labels, rows[0][2:])}
        return cls(body[:, 0], body[:, 1], columns, mses)


def compare_models(chain: OptionChain, theta_hat: HestonParams, nu_hat: float,
                   kinds: Sequence[FamilyKind] = (), bs_sigma: float | None = None,
                   spec: QuadratureSpec = heston.HESTON_SPEC) -> ComparisonTable:
    """Price the chain under Heston, each scale family at ``nu_hat`` and optionally
    Black-Scholes at ``bs_sigma``; collect prices and MSEs per model."""
    ctx, strikes = chain.ctx, chain.strikes
    columns: dict[str, np.ndarray] = {
        "Heston": np.atleast_1d(heston.call_price(strikes, theta_hat, ctx, spec)),
    }
    for kind in kinds:
        kind = FamilyKind(kind)
        std = make_standardized(kind, nu_hat)
        columns[kind.label] = np.atleast_1d(family_call_price(std, ctx, strikes))
    if bs_sigma is not None:
        columns["BS"] = np.atleast_1d(
            black_scholes_call(ctx.spot, strikes, ctx.rate, ctx.tau, bs_sigma, ctx.dividend)
        )
    mses = {label: mse(col, chain) for label, col in columns.items()}
    return ComparisonTable(strikes, chain.mids, columns, mses)
