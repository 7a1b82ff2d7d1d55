"""Command-line interface.

Settings come from built-in defaults, then an optional ``key=value`` config
file, then command-line flags (flags win). Exit codes: 0 success, 2 invalid
configuration or input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import depth as dp
from .distributions import load_sample, sample_mixture, sample_uniform, sample_vmf, VonMisesFisher
from .exceptions import DomainError, NumericalError, SingularityError
from .experiments import (
    MSE_EPS_GRID,
    SCALE_ALPHAS,
    run_kappa_scale_curves,
    run_mse_experiment,
    run_outlier_experiment,
    scale_curves_csv,
)
from .geometry import unit_vector
from .maps import EntropicMapContext, map_F_eps, map_Q_eps
from .seeding import subseed
from .solver import PotentialEstimate, SolverConfig, fit
from .tabular import csv_text, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("simulate", "fit", "map", "contours", "signs", "depth", "scale-curve",
            "experiment-mse", "experiment-outliers")


class ConfigError(ValueError):
    pass


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _ints(text) -> tuple[int, ...]:
    return tuple(int(v) for v in _floats(text))


def _vec(text) -> tuple[float, float, float]:
    v = _floats(text)
    if len(v) != 3:
        raise ConfigError(f"expected three comma-separated numbers, got {text!r}")
    return v


@dataclass(frozen=True)
class RunConfig:
    epsilon: float = 0.1
    band_limit: int = 24
    gamma: float = 3.0
    alpha: float = 0.51
    n_iters: int = 20000
    batch: int = 1
    seed: int = 0
    n_uniform: int = 4096
    input: str | None = None
    output: str = "."
    format: str = "auto"
    potential: str | None = None
    # simulate
    law: str = "vmf"
    n: int = 2000
    kappa: float = 10.0
    mean: tuple = (0.0, 0.0, 1.0)
    # map
    direction: str = "Q"
    # contours / signs / depth / scale curves
    tau: tuple = dp.DEFAULT_TAUS
    n_points: int = 200
    n_signs: int = 8
    query: str | None = None
    alphas: tuple = SCALE_ALPHAS
    # experiments
    eps_grid: tuple = MSE_EPS_GRID
    repeats: int = 10
    n_test: int = 500
    workers: int = 1
    counts: tuple = (5, 20, 50)
    kappas: tuple = (1.0, 2.0, 5.0, 15.0)

    def __post_init__(self):
        checks = [
            (self.epsilon > 0, "epsilon must be > 0"),
            (self.band_limit >= 1, "band_limit must be >= 1"),
            (self.gamma > 0, "gamma must be > 0"),
            (0.5 < self.alpha < 1.0, "alpha must lie in (1/2, 1)"),
            (self.n_iters >= 0, "n_iters must be >= 0"),
            (self.batch >= 1, "batch must be >= 1"),
            (self.n_uniform >= 1, "n_uniform must be >= 1"),
            (self.format in ("auto", "xyz", "lonlat"), "format must be auto, xyz or lonlat"),
            (self.law in ("vmf", "uniform", "mixture"), "law must be vmf, uniform or mixture"),
            (self.n >= 1, "n must be >= 1"),
            (self.kappa >= 0, "kappa must be >= 0"),
            (self.direction in ("Q", "F"), "direction must be Q or F"),
            (all(0 <= t <= 1 for t in self.tau), "tau values must lie in [0, 1]"),
            (self.n_points >= 3, "n_points must be >= 3"),
            (self.n_signs >= 1, "n_signs must be >= 1"),
            (all(0 <= a <= 1 for a in self.alphas), "alphas must lie in [0, 1]"),
            (all(e > 0 for e in self.eps_grid), "eps_grid values must be > 0"),
            (self.repeats >= 1 and self.n_test >= 1 and self.workers >= 1,
             "repeats, n_test and workers must be >= 1"),
            (all(c >= 0 for c in self.counts), "counts must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        if np.linalg.norm(self.mean) == 0:
            raise ConfigError("mean must be nonzero")

    def solver(self) -> SolverConfig:
        return SolverConfig(epsilon=self.epsilon, band_limit=self.band_limit, gamma=self.gamma,
                            alpha=self.alpha, n_iters=self.n_iters, batch=self.batch, seed=self.seed)


_CONVERTERS = {
    "epsilon": float, "band_limit": int, "gamma": float, "alpha": float, "n_iters": int, "batch": int,
    "seed": int, "n_uniform": int, "input": str, "output": str, "format": str, "potential": str,
    "law": str, "n": int, "kappa": float, "mean": _vec, "direction": str, "tau": _floats,
    "n_points": int, "n_signs": int, "query": str, "alphas": _floats, "eps_grid": _floats,
    "repeats": int, "n_test": int, "workers": int, "counts": _ints, "kappas": _floats,
}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def _convert(key: str, value):
    try:
        return _CONVERTERS[key](value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spherequant",
        description="Regularized Monge-Kantorovich quantiles, ranks and depth on the sphere.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file; flags override it")
    for key in _CONVERTERS:
        flag = "--" + key.replace("_", "-")
        common.add_argument(flag, dest=key, default=None, type=str)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "simulate": "draw a synthetic sample (vmf, uniform or mixture)",
        "fit": "fit the dual potential to --input",
        "map": "apply the quantile (Q) or distribution (F) map to --query points",
        "contours": "quantile contours for each --tau",
        "signs": "sign curves through equally spaced signs",
        "depth": "directional depth of --query points (default: the input sample)",
        "scale-curve": "scale curve over --alphas",
        "experiment-mse": "map accuracy against closed forms over --eps-grid",
        "experiment-outliers": "scale curves under planted outliers",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        try:
            values.update(parse_config_text(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    for key in _CONVERTERS:
        raw = getattr(args, key, None)
        if raw is not None:
            values[key] = _convert(key, raw)
    try:
        return RunConfig(**values)
    except (DomainError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# commands


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.output)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _need_input(cfg: RunConfig) -> np.ndarray:
    if not cfg.input:
        raise ConfigError("--input is required")
    return load_sample(cfg.input, cfg.format).points


def _potential_stem(cfg: RunConfig) -> Path:
    return Path(cfg.potential) if cfg.potential else Path(cfg.output) / "potential"


def _context(cfg: RunConfig):
    data = _need_input(cfg)
    stem = _potential_stem(cfg)
    try:
        pot = PotentialEstimate.load(stem)
    except OSError as exc:
        raise ConfigError(f"cannot read potential {stem}: {exc}") from exc
    ctx = EntropicMapContext.build(pot, data, n_uniform=cfg.n_uniform, seed=cfg.seed)
    return ctx, data


def cmd_simulate(cfg: RunConfig) -> Path:
    seed = subseed(cfg.seed, "data")
    if cfg.law == "uniform":
        s = sample_uniform(cfg.n, seed)
    elif cfg.law == "vmf":
        s = sample_vmf(unit_vector(np.asarray(cfg.mean) / np.linalg.norm(cfg.mean)), cfg.kappa, cfg.n, seed)
    else:
        mu = np.asarray(cfg.mean) / np.linalg.norm(cfg.mean)
        comps = [(0.5, VonMisesFisher(mu, cfg.kappa)), (0.5, VonMisesFisher(-mu, cfg.kappa))]
        s = sample_mixture(comps, cfg.n, seed)
    path = _out(cfg, "sample.csv")
    s.to_csv(path)
    return path


def cmd_fit(cfg: RunConfig) -> Path:
    data = _need_input(cfg)
    pot = fit(data, cfg.solver())
    stem = _potential_stem(cfg)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path, _ = pot.save(stem)
    return csv_path


def cmd_map(cfg: RunConfig) -> Path:
    ctx, data = _context(cfg)
    pts = load_sample(cfg.query, cfg.format).points if cfg.query else data
    out = map_Q_eps(ctx, pts) if cfg.direction == "Q" else map_F_eps(ctx, pts)
    path = _out(cfg, f"mapped_{cfg.direction}.csv")
    path.write_text(csv_text(["qx", "qy", "qz"], out))
    return path


def cmd_contours(cfg: RunConfig) -> Path:
    ctx, data = _context(cfg)
    pole = dp.estimate_pole(ctx, data)
    contours = [dp.quantile_contour(ctx, t, pole, cfg.n_points).to_dict() for t in cfg.tau]
    path = _out(cfg, "contours.json")
    write_json(path, contours)
    return path


def cmd_signs(cfg: RunConfig) -> Path:
    ctx, data = _context(cfg)
    pole = dp.estimate_pole(ctx, data)
    ref = dp.reference_contour(0.5, pole, max(cfg.n_signs, 3)).points[: cfg.n_signs]
    curves = [dp.sign_curve(ctx, s, pole, cfg.n_points).to_dict() for s in ref]
    path = _out(cfg, "signs.json")
    write_json(path, curves)
    return path


def cmd_depth(cfg: RunConfig) -> Path:
    ctx, data = _context(cfg)
    pole = dp.estimate_pole(ctx, data)
    pts = load_sample(cfg.query, cfg.format).points if cfg.query else data
    path = _out(cfg, "depth.csv")
    dp.mk_depth(ctx, pts, pole).to_csv(path)
    return path


def cmd_scale_curve(cfg: RunConfig) -> Path:
    ctx, data = _context(cfg)
    pole = dp.estimate_pole(ctx, data)
    u = sample_uniform(cfg.n_uniform, seed=subseed(cfg.seed, "test")).points
    path = _out(cfg, "scale_curve.csv")
    dp.scale_curve(ctx, cfg.alphas, u, pole).to_csv(path)
    return path


def cmd_experiment_mse(cfg: RunConfig) -> Path:
    path = _out(cfg, "mse.csv")
    run_mse_experiment(kappa=cfg.kappa, n=cfg.n, eps_grid=cfg.eps_grid, repeats=cfg.repeats,
                       config=cfg.solver(), n_test=cfg.n_test, n_uniform=cfg.n_uniform,
                       output=path, workers=cfg.workers)
    return path


def cmd_experiment_outliers(cfg: RunConfig) -> Path:
    curves = run_outlier_experiment(cfg.counts, n=cfg.n, alphas=cfg.alphas, config=cfg.solver(),
                                    n_uniform=cfg.n_uniform, kappa=cfg.kappa)
    path = _out(cfg, "outliers.csv")
    path.write_text(scale_curves_csv(curves, "outliers"))
    return path


HANDLERS = {
    "simulate": cmd_simulate, "fit": cmd_fit, "map": cmd_map, "contours": cmd_contours,
    "signs": cmd_signs, "depth": cmd_depth, "scale-curve": cmd_scale_curve,
    "experiment-mse": cmd_experiment_mse, "experiment-outliers": cmd_experiment_outliers,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        path = HANDLERS[args.command](cfg)
    except (NumericalError, SingularityError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
