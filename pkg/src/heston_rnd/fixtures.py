"""Reference parameter sets and the bundled AMD option chain.

Each preset pairs calibrated Heston parameters with the market context they
were quoted in.  The S&P set has no quoted spot; everything it is used for
works in the standardized variable, so a nominal spot of 100 is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .heston import HestonParams, MarketContext

__all__ = [
    "AMD",
    "AMD_CALIBRATION_START",
    "AMD_CHAIN_FILE",
    "AMD_SIGMA_BS",
    "AMD_TABLE_MSE",
    "ODAX",
    "PRESETS",
    "Preset",
    "SP500",
    "SP500_POSITIVE_RHO",
    "amd_chain",
    "amd_chain_path",
]


@dataclass(frozen=True)
class Preset:
    name: str
    params: HestonParams
    ctx: MarketContext


AMD = Preset(
    "amd",
    HestonParams(kappa=1.38164142, theta=1.06637168, eta=1.72832698, rho=0.07768964, v0=0.25),
    MarketContext.from_days(spot=91.71, rate=0.0016, days=47),
)

SP500 = Preset(
    "sp500",
    HestonParams(kappa=1.15, theta=0.04 / 1.15, eta=0.39, rho=-0.64, v0=0.04),
    MarketContext.from_days(spot=100.0, rate=0.02, days=56),
)

SP500_POSITIVE_RHO = Preset(
    "sp500-posrho",
    HestonParams(kappa=1.15, theta=0.04 / 1.15, eta=0.39, rho=0.64, v0=0.04),
    MarketContext.from_days(spot=100.0, rate=0.02, days=56),
)

ODAX = Preset(
    "odax",
    HestonParams(kappa=1.22136, theta=0.06442, eta=0.55993, rho=-0.66255, v0=0.02497),
    MarketContext.from_days(spot=7962.31, rate=0.00207, days=64),
)

PRESETS = {p.name: p for p in (AMD, SP500, SP500_POSITIVE_RHO, ODAX)}

# Starting point (kappa, theta, eta, rho) for the AMD fit, with v0 held at 0.25.
AMD_CALIBRATION_START = HestonParams(kappa=2.0, theta=0.5, eta=0.6, rho=0.0, v0=0.25)
# Black-Scholes volatility fitted to the AMD chain and the model MSEs quoted
# alongside it, keyed by column label.
AMD_SIGMA_BS = 0.550085
AMD_TABLE_MSE = {
    "Heston": 0.004410,
    "Gamma": 0.032725,
    "InvGaussian": 0.018126,
    "BS": 0.016748,
}

AMD_CHAIN_FILE = "amd_20210219.csv"


def amd_chain_path():
    return resources.files("heston_rnd") / "data" / AMD_CHAIN_FILE


def amd_chain():
    """The 39-strike AMD call chain (strike, mid) with its market context."""
    from .cli import ingest_chain

    with resources.as_file(amd_chain_path()) as path:
        return ingest_chain(path)
