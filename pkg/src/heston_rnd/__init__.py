"""Heston option pricing, risk-neutral densities and closed-form scale-family RNDs."""

from .heston import (
    HestonParams,
    MarketContext,
    black_scholes_call,
    call_price,
    delta,
    feller_ratio,
    rnd_cdf,
    rnd_density,
    rnd_moments,
)
from .scale_rnd import FamilyKind, StandardizedRND, make_standardized, solve_shape

__all__ = [
    "FamilyKind",
    "HestonParams",
    "MarketContext",
    "StandardizedRND",
    "black_scholes_call",
    "call_price",
    "delta",
    "feller_ratio",
    "make_standardized",
    "rnd_cdf",
    "rnd_density",
    "rnd_moments",
    "solve_shape",
]

__version__ = "0.1.0"
