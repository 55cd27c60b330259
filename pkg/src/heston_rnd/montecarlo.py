"""Monte-Carlo simulation of the Heston system.

The variance is stepped with either a reflected Milstein scheme or Alfonsi's
drift-implicit square-root scheme; the log of the standardized spot
``S* = S_T/mu`` uses a left-point Euler step.  Every path draws its normals
from its own Philox stream keyed by ``(seed, path index)``, so results do not
depend on how paths are batched or how many workers run them.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .heston import HestonParams, MarketContext, feller_ratio

__all__ = [
    "DiscretizationError",
    "SampleSet",
    "SampleSummary",
    "Scheme",
    "SimConfig",
    "alfonsi_step",
    "default_steps",
    "milstein_reflect_step",
    "read_samples_csv",
    "resolve_scheme",
    "simulate",
    "summary",
    "write_samples_csv",
]

log = logging.getLogger(__name__)

_BLOCK = 1024


class DiscretizationError(ArithmeticError):
    """The implicit variance step has no real solution for these parameters."""


class Scheme(str, enum.Enum):
    AUTO = "auto"
    MILSTEIN_REFLECT = "milstein"
    ALFONSI_IMPLICIT = "alfonsi"


def default_steps(tau: float) -> int:
    return max(math.ceil(250.0 * tau), 50)


@dataclass(frozen=True)
class SimConfig:
    paths: int = 10_000
    steps: int | None = None
    seed: int = 0
    scheme: Scheme = Scheme.AUTO
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True, eq=False)
class SampleSet:
    s_star: np.ndarray
    v_t: np.ndarray
    config: SimConfig
    scheme: Scheme = Scheme.MILSTEIN_REFLECT
    steps: int = 0

    def __len__(self):
        return self.s_star.size


def milstein_reflect_step(v, dt, z, params: HestonParams):
    """``|v + k(th - v)dt + eta sqrt(v dt) z + eta^2/4 (z^2 - 1) dt|``."""
    v = np.asarray(v, dtype=float)
    out = np.abs(
        v
        + params.kappa * (params.theta - v) * dt
        + params.eta * np.sqrt(v * dt) * z
        + 0.25 * params.eta ** 2 * (np.asarray(z) ** 2 - 1.0) * dt
    )
    return out[()] if out.ndim == 0 else out


def alfonsi_step(v, dt, z, params: HestonParams):
    """Drift-implicit step for ``Y = sqrt(V)``; returns ``Y_{k+1}^2``.

    Solves ``(1 + k dt/2) Y^2 - (Y_k + eta dW/2) Y - (k th - eta^2/4) dt/2 = 0``
    for its non-negative root.  Needs ``4 k th >= eta^2`` for a real root in
    general; raises ``DiscretizationError`` when the discriminant is negative.
    """
    v = np.asarray(v, dtype=float)
    kappa, eta = params.kappa, params.eta
    a = 1.0 + 0.5 * kappa * dt
    b = np.sqrt(v) + 0.5 * eta * math.sqrt(dt) * np.asarray(z)
    c = 0.5 * (kappa * params.theta - 0.25 * eta * eta) * dt
    disc = b * b + 4.0 * a * c
    if np.any(disc < 0):
        raise DiscretizationError(
            "implicit square-root step has no real root; use the reflected Milstein scheme"
        )
    y = (b + np.sqrt(disc)) / (2.0 * a)
    out = y * y
    return out[()] if out.ndim == 0 else out


def resolve_scheme(params: HestonParams, scheme: Scheme = Scheme.AUTO) -> Scheme:
    """Concrete scheme: ``AUTO`` picks Alfonsi when the Feller ratio exceeds one.

    An explicit Alfonsi request with ``4 kappa theta < eta^2`` falls back to the
    reflected Milstein scheme, since the implicit step can lose its real root.
    """
    scheme = Scheme(scheme)
    if scheme is Scheme.AUTO:
        return Scheme.ALFONSI_IMPLICIT if feller_ratio(params) > 1.0 else Scheme.MILSTEIN_REFLECT
    if scheme is Scheme.ALFONSI_IMPLICIT and 4.0 * params.kappa * params.theta < params.eta ** 2:
        log.warning("Alfonsi scheme invalid for these parameters; using reflected Milstein")
        return Scheme.MILSTEIN_REFLECT
    return scheme


def _path_normals(seed: int, first: int, count: int, steps: int) -> np.ndarray:
    """Normals of shape (count, steps, 2); row i comes from stream (seed, first + i)."""
    out = np.empty((count, steps, 2))
    for i in range(count):
        seq = np.random.SeedSequence(seed, spawn_key=(first + i,))
        out[i] = np.random.Generator(np.random.Philox(seq)).standard_normal((steps, 2))
    return out


def _simulate_block(params, ctx, scheme, seed, first, count, steps):
    dt = ctx.tau / steps
    normals = _path_normals(seed, first, count, steps)
    rho = params.rho
    rho_bar = math.sqrt(max(1.0 - rho * rho, 0.0))
    step = alfonsi_step if scheme is Scheme.ALFONSI_IMPLICIT else milstein_reflect_step
    v = np.full(count, params.v0, dtype=float)
    x = np.zeros(count)
    for k in range(steps):
        z_v = normals[:, k, 0]
        z_s = rho * z_v + rho_bar * normals[:, k, 1]
        x += -0.5 * v * dt + np.sqrt(v * dt) * z_s
        v = step(v, dt, z_v, params)
    return np.exp(x), v


def simulate(params: HestonParams, ctx: MarketContext, cfg: SimConfig = SimConfig()) -> SampleSet:
    """Simulate ``cfg.paths`` terminal pairs ``(S*, V_T)`` over ``[0, ctx.tau]``."""
    scheme = resolve_scheme(params, cfg.scheme)
    steps = cfg.steps or default_steps(ctx.tau)
    blocks = [(first, min(_BLOCK, cfg.paths - first)) for first in range(0, cfg.paths, _BLOCK)]

    def run(block):
        return _simulate_block(params, ctx, scheme, cfg.seed, block[0], block[1], steps)

    if cfg.workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(b) for b in blocks]
    s_star = np.concatenate([r[0] for r in results])
    v_t = np.concatenate([r[1] for r in results])
    return SampleSet(s_star=s_star, v_t=v_t, config=cfg, scheme=scheme, steps=steps)


# ---------------------------------------------------------------------------
# statistics and export


@dataclass(frozen=True, eq=False)
class SampleSummary:
    n: int
    mean: float
    sd: float
    skewness: float
    excess_kurtosis: float
    hist_counts: np.ndarray = field(repr=False)
    hist_edges: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "sd": self.sd,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "histogram": {
                "counts": self.hist_counts.tolist(),
                "edges": self.hist_edges.tolist(),
            },
        }


def summary(samples, bins: int = 50) -> SampleSummary:
    """Mean, sd (n-1 divisor), skewness, excess kurtosis and histogram of ``S*``.

    Accepts a ``SampleSet`` or any 1-d array.  A constant sample has sd 0 and
    undefined shape statistics, reported as NaN.
    """
    x = np.asarray(samples.s_star if isinstance(samples, SampleSet) else samples, dtype=float)
    if x.size == 0:
        raise ValueError("summary of an empty sample")
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev ** 2))
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if m2 > 0:
        skew = float(np.mean(dev ** 3) / m2 ** 1.5)
        kurt = float(np.mean(dev ** 4) / m2 ** 2 - 3.0)
    else:
        skew = kurt = float("nan")
    counts, edges = np.histogram(x, bins=bins)
    return SampleSummary(x.size, mean, sd, skew, kurt, counts, edges)


def write_samples_csv(samples: SampleSet, path, digits: int = 6) -> None:
    fmt = f"{{:.{digits}g}}"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["s_star", "v_t"])
        for s, v in zip(samples.s_star, samples.v_t):
            writer.writerow([fmt.format(s), fmt.format(v)])


def read_samples_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["s_star", "v_t"]:
            raise ValueError(f"{path}: expected header s_star,v_t, got {header}")
        rows = [(float(a), float(b)) for a, b in reader]
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]
