"""Command-line front end: ``heston-rnd {price,rnd,simulate,calibrate,compare}``.

Model inputs come from a preset (``--preset``), overridden by a ``key=value``
config file (``--config``), overridden in turn by ``--param name=value`` flags
and explicit options.  Floats are written with 6 significant digits, except the
comparison table, which keeps 3 decimals for prices.

Exit status: 0 on success, 2 for usage errors, 1 when a computation fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fixtures, heston, montecarlo, scale_rnd
from .calibration import (
    OptionChain,
    OptionQuote,
    calibrate_heston,
    compare_models,
    fit_bs_iv,
)
from .heston import HestonParams, MarketContext
from .numerics import ConvergenceError

__all__ = ["ChainFormatError", "RunConfig", "UsageError", "ingest_chain", "main", "run"]

log = logging.getLogger(__name__)

COMMANDS = ("price", "rnd", "simulate", "calibrate", "compare")
MODELS = ("heston", "bs") + tuple(k.value for k in scale_rnd.FamilyKind)
HESTON_KEYS = ("kappa", "theta", "eta", "rho", "v0")
MARKET_KEYS = ("spot", "rate", "dividend", "tau", "days")
SEED_ENV = "HESTON_RND_SEED"


class UsageError(ValueError):
    """Bad command-line input; maps to exit status 2."""


class ChainFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


# ---------------------------------------------------------------------------
# chain files


def ingest_chain(path, default_v0: float = 0.04) -> OptionChain:
    """Read a call chain file.

    Layout: ``#key=value`` metadata lines (``spot``, ``rate``, ``tau_days``
    required; ``dividend`` and ``v0`` optional), other ``#`` lines are comments,
    then a header ``strike,mid`` or ``strike,bid,ask`` and one row per strike.
    """
    path = Path(path)
    meta: dict[str, tuple[float, int]] = {}
    quotes: list[OptionQuote] = []
    columns = None
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    try:
                        meta[key.strip().lower()] = (float(value), lineno)
                    except ValueError:
                        raise ChainFormatError(path, lineno, f"bad metadata value {value!r}") from None
                continue
            cells = [c.strip() for c in next(csv.reader([line]))]
            if columns is None:
                columns = [c.lower() for c in cells]
                if columns not in (["strike", "mid"], ["strike", "bid", "ask"]):
                    raise ChainFormatError(
                        path, lineno, f"expected header strike,mid or strike,bid,ask; got {line!r}"
                    )
                continue
            if len(cells) != len(columns):
                raise ChainFormatError(path, lineno, f"expected {len(columns)} fields, got {len(cells)}")
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise ChainFormatError(path, lineno, f"non-numeric field in {line!r}") from None
            try:
                if len(values) == 2:
                    quote = OptionQuote(*values)
                else:
                    quote = OptionQuote.from_bid_ask(*values)
            except ValueError as exc:
                raise ChainFormatError(path, lineno, str(exc)) from None
            if quotes and not quote.strike > quotes[-1].strike:
                raise ChainFormatError(
                    path, lineno,
                    f"strike {quote.strike:g} does not exceed previous strike {quotes[-1].strike:g}",
                )
            quotes.append(quote)
    if columns is None or not quotes:
        raise ChainFormatError(path, 0, "no quotes found")
    for key in ("spot", "rate", "tau_days"):
        if key not in meta:
            raise ChainFormatError(path, 0, f"missing #{key}= metadata line")
    try:
        ctx = MarketContext.from_days(
            spot=meta["spot"][0], rate=meta["rate"][0], days=meta["tau_days"][0],
            dividend=meta.get("dividend", (0.0, 0))[0],
        )
    except ValueError as exc:
        raise ChainFormatError(path, meta["spot"][1], str(exc)) from None
    v0 = meta.get("v0", (default_v0, 0))[0]
    return OptionChain(tuple(quotes), ctx, v0)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    command: str
    chain: Path | None = None
    model: str = "heston"
    preset: str | None = None
    params: dict[str, float] = field(default_factory=dict)
    strikes: tuple[float, ...] = ()
    nu: float | None = None
    sigma: float | None = None
    kinds: tuple[str, ...] = ("gamma", "invgauss")
    u_min: float = 0.4
    u_max: float = 1.6
    points: int = 601
    paths: int = 10_000
    steps: int | None = None
    seed: int = 0
    scheme: str = "auto"
    workers: int = 1
    bins: int = 50
    fit_v0: bool = False
    max_iter: int = 2000
    output: Path | None = None
    summary_path: Path | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.model not in MODELS:
            raise UsageError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.preset is not None and self.preset not in fixtures.PRESETS:
            raise UsageError(f"unknown preset {self.preset!r}; choose from {', '.join(fixtures.PRESETS)}")
        for name in self.params:
            if name not in HESTON_KEYS + MARKET_KEYS:
                raise UsageError(f"unknown parameter {name!r}")
        for kind in self.kinds:
            try:
                scale_rnd.FamilyKind(kind)
            except ValueError:
                raise UsageError(f"unknown family {kind!r}") from None
        if self.chain is not None and not Path(self.chain).is_file():
            raise UsageError(f"chain file not found: {self.chain}")
        if self.points < 2 or not 0 < self.u_min < self.u_max:
            raise UsageError("rnd grid needs 0 < u_min < u_max and at least 2 points")


def _parse_assignment(text: str, where: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise UsageError(f"{where}: expected name=value, got {text!r}")
    return key.strip().lower().replace("-", "_"), value.strip()


def _read_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            key, value = _parse_assignment(line, f"{path}:{lineno}")
            out[key] = value
    return out


def _to_float(name, value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{name}: not a number: {value!r}") from None


def _to_int(name, value) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise UsageError(f"{name}: not an integer: {value!r}") from None


_FLOAT_OPTS = ("nu", "sigma", "u_min", "u_max")
_INT_OPTS = ("points", "paths", "steps", "seed", "workers", "bins", "max_iter")


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge config file, environment and flags (flags win) into a RunConfig."""
    merged: dict[str, object] = {}
    params: dict[str, float] = {}
    if os.environ.get(SEED_ENV):
        merged["seed"] = _to_int(SEED_ENV, os.environ[SEED_ENV])
    if args.config:
        for key, value in _read_config_file(args.config).items():
            if key in HESTON_KEYS + MARKET_KEYS:
                params[key] = _to_float(key, value)
            else:
                merged[key] = value
    for text in args.param or ():
        key, value = _parse_assignment(text, "--param")
        params[key] = _to_float(key, value)
    for key, value in vars(args).items():
        if key in ("param", "config", "command") or value is None:
            continue
        merged[key] = value

    known = set(RunConfig.__dataclass_fields__)
    unknown = set(merged) - known
    if unknown:
        raise UsageError(f"unknown option(s): {', '.join(sorted(unknown))}")
    for key in _FLOAT_OPTS:
        if key in merged:
            merged[key] = _to_float(key, merged[key])
    for key in _INT_OPTS:
        if key in merged:
            merged[key] = _to_int(key, merged[key])
    if "strikes" in merged:
        raw = merged["strikes"]
        items = raw.split(",") if isinstance(raw, str) else raw
        merged["strikes"] = tuple(_to_float("strike", s) for s in items)
    if "kinds" in merged and isinstance(merged["kinds"], str):
        merged["kinds"] = tuple(k.strip() for k in merged["kinds"].split(",") if k.strip())
    if isinstance(merged.get("fit_v0"), str):
        merged["fit_v0"] = merged["fit_v0"].lower() in ("1", "true", "yes", "on")
    for key in ("chain", "output", "summary_path"):
        if key in merged:
            merged[key] = Path(merged[key])
    return RunConfig(command=args.command, params=params, **merged)


def _resolve_model(cfg: RunConfig, chain: OptionChain | None = None) -> tuple[HestonParams, MarketContext]:
    preset = fixtures.PRESETS[cfg.preset or "amd"]
    params, ctx = preset.params, preset.ctx
    if chain is not None:
        ctx = chain.ctx
        if cfg.preset is None:
            params = replace(params, v0=chain.v0_hint)
    p = cfg.params
    try:
        params = replace(params, **{k: p[k] for k in HESTON_KEYS if k in p})
        tau = p["tau"] if "tau" in p else p["days"] / 365.0 if "days" in p else ctx.tau
        ctx = MarketContext(
            spot=p.get("spot", ctx.spot), rate=p.get("rate", ctx.rate),
            tau=tau, dividend=p.get("dividend", ctx.dividend),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return params, ctx


def _load_chain(cfg: RunConfig) -> OptionChain:
    if cfg.chain is not None:
        return ingest_chain(cfg.chain)
    return fixtures.amd_chain()


# ---------------------------------------------------------------------------
# commands


def _g(x: float) -> str:
    return f"{x:.6g}"


def _round6(x):
    if isinstance(x, float):
        return float(_g(x)) if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _round6(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round6(v) for v in x]
    return x


def _open_out(path: Path | None):
    if path is None:
        return _Stdout()
    return open(path, "w", encoding="utf-8", newline="")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()


def _family_nu(cfg: RunConfig, ctx: MarketContext) -> float:
    if cfg.nu is not None:
        return cfg.nu
    if cfg.sigma is not None:
        return cfg.sigma * math.sqrt(ctx.tau)
    raise UsageError(f"model {cfg.model} needs --nu or --sigma")


def _cmd_price(cfg: RunConfig) -> None:
    params, ctx = _resolve_model(cfg)
    if not cfg.strikes:
        raise UsageError("price needs at least one --strike")
    strikes = np.array(cfg.strikes)
    if np.any(strikes <= 0):
        raise UsageError("strikes must be positive")
    if cfg.model == "heston":
        prices = heston.call_price(strikes, params, ctx)
    elif cfg.model == "bs":
        if cfg.sigma is None:
            raise UsageError("model bs needs --sigma")
        prices = heston.black_scholes_call(ctx.spot, strikes, ctx.rate, ctx.tau, cfg.sigma, ctx.dividend)
    else:
        std = scale_rnd.make_standardized(cfg.model, _family_nu(cfg, ctx))
        prices = scale_rnd.call_price(std, ctx, strikes)
    prices = np.atleast_1d(prices)
    with _open_out(cfg.output) as out:
        if prices.size == 1:
            out.write(_g(float(prices[0])) + "\n")
        else:
            out.write("strike,price\n")
            for k, c in zip(strikes, prices):
                out.write(f"{_g(k)},{_g(c)}\n")


def _cmd_rnd(cfg: RunConfig) -> None:
    params, ctx = _resolve_model(cfg)
    u = np.linspace(cfg.u_min, cfg.u_max, cfg.points)
    if cfg.model == "heston":
        dens = heston.rnd_density(u, 2, params, ctx)
    elif cfg.model == "bs":
        if cfg.sigma is None:
            raise UsageError("model bs needs --sigma")
        std = scale_rnd.make_standardized("lognormal", cfg.sigma * math.sqrt(ctx.tau))
        dens = std.pdf(u)
    else:
        dens = scale_rnd.make_standardized(cfg.model, _family_nu(cfg, ctx)).pdf(u)
    with _open_out(cfg.output) as out:
        out.write("u,density\n")
        for a, b in zip(u, np.atleast_1d(dens)):
            out.write(f"{_g(a)},{_g(b)}\n")


def _cmd_simulate(cfg: RunConfig) -> None:
    params, ctx = _resolve_model(cfg)
    try:
        sim_cfg = montecarlo.SimConfig(paths=cfg.paths, steps=cfg.steps, seed=cfg.seed,
                                       scheme=cfg.scheme, workers=cfg.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    samples = montecarlo.simulate(params, ctx, sim_cfg)
    stats = montecarlo.summary(samples, bins=cfg.bins).to_dict()
    stats["scheme"] = samples.scheme.value
    stats["steps"] = samples.steps
    stats["seed"] = cfg.seed
    stats["feller_ratio"] = heston.feller_ratio(params)
    text = json.dumps(_round6(stats), indent=2, sort_keys=True) + "\n"
    if cfg.output is None:
        sys.stdout.write(text)
        return
    montecarlo.write_samples_csv(samples, cfg.output)
    summary_path = cfg.summary_path or cfg.output.with_suffix(".json")
    summary_path.write_text(text, encoding="utf-8")


def _cmd_calibrate(cfg: RunConfig) -> None:
    chain = _load_chain(cfg)
    start = fixtures.AMD_CALIBRATION_START
    init = replace(start, v0=chain.v0_hint)
    try:
        init = replace(init, **{k: cfg.params[k] for k in HESTON_KEYS if k in cfg.params})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = calibrate_heston(chain, init, max_iter=cfg.max_iter, fit_v0=cfg.fit_v0)
    p = res.params
    doc = {
        "kappa": p.kappa, "theta": p.theta, "eta": p.eta, "rho": p.rho, "v0": p.v0,
        "mse": res.mse, "iterations": res.iterations, "converged": res.converged,
        "underdetermined": res.underdetermined, "feller_ratio": p.feller_ratio,
    }
    with _open_out(cfg.output) as out:
        out.write(json.dumps(_round6(doc), indent=2) + "\n")


def _cmd_compare(cfg: RunConfig) -> None:
    chain = _load_chain(cfg)
    params, _ = _resolve_model(cfg, chain)
    sigma = cfg.sigma if cfg.sigma is not None else fit_bs_iv(chain)
    nu = cfg.nu if cfg.nu is not None else sigma * math.sqrt(chain.ctx.tau)
    table = compare_models(chain, params, nu, cfg.kinds, bs_sigma=sigma)
    if cfg.output is not None:
        table.write_csv(cfg.output)
        return
    csv.writer(sys.stdout, lineterminator="\n").writerows(table.rows())


_HANDLERS = {
    "price": _cmd_price,
    "rnd": _cmd_rnd,
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "compare": _cmd_compare,
}


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    try:
        _HANDLERS[config.command](config)
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 0
    except UsageError as exc:
        print(f"heston-rnd: {exc}", file=sys.stderr)
        return 2
    except (ChainFormatError, OSError) as exc:
        print(f"heston-rnd: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ConvergenceError, RuntimeError, ValueError) as exc:
        print(f"heston-rnd: computation failed: {exc}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=sorted(fixtures.PRESETS),
                        help="starting parameter set (default: amd)")
    common.add_argument("--param", action="append", metavar="NAME=VALUE",
                        help="override kappa, theta, eta, rho, v0, spot, rate, dividend, tau or days")
    common.add_argument("--config", metavar="FILE", help="key=value defaults; flags take precedence")
    common.add_argument("-o", "--output", metavar="FILE")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", choices=MODELS)
    model.add_argument("--nu", type=float, help="dispersion of a scale family (sigma*sqrt(t))")
    model.add_argument("--sigma", type=float, help="Black-Scholes volatility")

    chain = argparse.ArgumentParser(add_help=False)
    chain.add_argument("--chain", metavar="FILE", help="chain file (default: bundled AMD chain)")

    p = argparse.ArgumentParser(prog="heston-rnd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("price", parents=[common, model], help="price European calls")
    sp.add_argument("--strike", dest="strikes", type=float, action="append", metavar="K")

    sp = sub.add_parser("rnd", parents=[common, model], help="density of S_T/mu on a grid")
    sp.add_argument("--u-min", type=float)
    sp.add_argument("--u-max", type=float)
    sp.add_argument("--points", type=int)

    sp = sub.add_parser("simulate", parents=[common], help="Monte-Carlo samples of (S*, V_T)")
    sp.add_argument("--paths", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int, help=f"default: ${SEED_ENV} or 0")
    sp.add_argument("--scheme", choices=[s.value for s in montecarlo.Scheme])
    sp.add_argument("--workers", type=int)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--summary", dest="summary_path", metavar="FILE",
                    help="summary JSON (default: OUTPUT with .json suffix)")

    sp = sub.add_parser("calibrate", parents=[common, chain], help="fit Heston parameters to a chain")
    sp.add_argument("--fit-v0", action="store_const", const=True)
    sp.add_argument("--max-iter", type=int)

    sp = sub.add_parser("compare", parents=[common, chain, model],
                        help="Heston vs scale-family prices on a chain")
    sp.add_argument("--kinds", help="comma-separated families (default: gamma,invgauss)")
    return p


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"heston-rnd: warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    del args.verbose
    try:
        cfg = build_config(args)
    except UsageError as exc:
        print(f"heston-rnd: {exc}", file=sys.stderr)
        return 2
    with warnings.catch_warnings():
        warnings.showwarning = _show_warning
        return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
