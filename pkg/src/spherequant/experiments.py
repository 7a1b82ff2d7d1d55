"""Canned simulation studies: map accuracy against closed forms and scale curves."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .depth import ScaleCurve, estimate_pole, scale_curve
from .distributions import RotInvariantLaw, closed_form_Q, sample_uniform, sample_vmf
from .exceptions import DomainError
from .geometry import E2, E3, cost, unit_vector
from .maps import DEFAULT_N_UNIFORM, EntropicMapContext, map_Q_eps
from .seeding import subseed
from .solver import SolverConfig, fit
from .tabular import csv_text, fmt

MSE_EPS_GRID = (0.01, 0.03, 0.05, 0.09, 0.15, 0.2)
SCALE_ALPHAS = tuple(np.round(np.arange(0.05, 1.0, 0.05), 2))


def fit_context(data, config: SolverConfig, n_uniform: int = DEFAULT_N_UNIFORM) -> EntropicMapContext:
    """Fit a potential on ``data`` and wrap it with a uniform sample from the config seed."""
    potential = fit(data, config)
    return EntropicMapContext.build(potential, data, n_uniform=n_uniform, seed=config.seed)


def map_mse(reference_Q, estimated_Q) -> float:
    """Mean transport cost between two sets of image points."""
    return float(np.mean(cost(np.asarray(reference_Q), np.asarray(estimated_Q))))


@dataclass(frozen=True)
class MSEJob:
    epsilon: float
    repeat: int
    kappa: float
    n: int
    n_test: int
    n_uniform: int
    config: SolverConfig


def _mse_job(job: MSEJob) -> float:
    seed = job.config.seed
    law = RotInvariantLaw.vmf(E3, job.kappa)
    data = sample_vmf(E3, job.kappa, job.n, seed=subseed(seed, "data", job.repeat)).points
    cfg = replace(job.config, epsilon=job.epsilon, seed=subseed(seed, "solver", job.repeat))
    ctx = fit_context(data, cfg, job.n_uniform)
    x = sample_uniform(job.n_test, seed=subseed(seed, "test", job.repeat)).points
    return map_mse(closed_form_Q(law, x), map_Q_eps(ctx, x))


def run_mse_experiment(kappa: float = 10.0, n: int = 500, eps_grid=MSE_EPS_GRID, repeats: int = 10,
                       config: SolverConfig | None = None, n_test: int = 500,
                       n_uniform: int = DEFAULT_N_UNIFORM, output=None, workers: int = 1) -> str:
    """Map accuracy R_n against the closed-form quantile map of a vMF law.

    One data set per repeat is shared across the epsilon grid. Rows
    ``epsilon,repeat,mse`` come out in (epsilon, repeat) order; with an
    ``output`` path each row is flushed as soon as it is known.
    """
    if repeats < 1 or n < 1 or n_test < 1:
        raise DomainError("repeats, n and n_test must be >= 1")
    if any(e <= 0 for e in eps_grid):
        raise DomainError("epsilon values must be > 0")
    config = config or SolverConfig()
    jobs = [MSEJob(float(e), r, kappa, n, n_test, n_uniform, config) for e in eps_grid for r in range(repeats)]
    header = "epsilon,repeat,mse\n"
    lines = [header]
    fh = open(output, "w") if output is not None else None
    try:
        if fh:
            fh.write(header)
            fh.flush()
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_mse_job, jobs)
                for job, mse in zip(jobs, results):
                    lines.append(_emit(fh, job, mse))
        else:
            for job in jobs:
                lines.append(_emit(fh, job, _mse_job(job)))
    finally:
        if fh:
            fh.close()
    return "".join(lines)


def _emit(fh, job: MSEJob, mse: float) -> str:
    line = f"{fmt(job.epsilon)},{job.repeat},{fmt(mse)}\n"
    if fh:
        fh.write(line)
        fh.flush()
    return line


def parse_mse_table(text: str) -> dict[float, np.ndarray]:
    """Group an mse CSV by epsilon."""
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    out: dict[float, list] = {}
    for e, _, m in rows:
        out.setdefault(float(e), []).append(float(m))
    return {e: np.array(v) for e, v in out.items()}


def has_interior_minimum(values) -> bool:
    """True when the smallest entry is neither the first nor the last."""
    k = int(np.argmin(values))
    return 0 < k < len(values) - 1


def outlier_sample(n: int, n_outliers: int, seed: int, kappa: float = 15.0, mean=E2,
                   outlier_center=E3, outlier_kappa: float = 200.0) -> np.ndarray:
    """``n - n_outliers`` vMF points around ``mean`` plus a tight cluster near ``outlier_center``.

    The inliers are a prefix of one fixed draw of ``n`` points, so samples
    with different outlier counts share their common part.
    """
    if not 0 <= n_outliers <= n:
        raise DomainError("n_outliers must lie in [0, n]")
    inl = sample_vmf(unit_vector(mean), kappa, n, seed=subseed(seed, "data")).points[: n - n_outliers]
    if n_outliers == 0:
        return inl
    out = sample_vmf(unit_vector(outlier_center), outlier_kappa, n_outliers,
                     seed=subseed(seed, "outliers")).points
    return np.concatenate([inl, out])


def fitted_scale_curve(data, config: SolverConfig, alphas=SCALE_ALPHAS,
                       n_uniform: int = DEFAULT_N_UNIFORM) -> ScaleCurve:
    """Scale curve of a fitted context, with the pole from the sample Frechet median."""
    ctx = fit_context(data, config, n_uniform)
    pole = estimate_pole(ctx, data)
    u = sample_uniform(n_uniform, seed=subseed(config.seed, "test")).points
    return scale_curve(ctx, alphas, u, pole)


def run_kappa_scale_curves(kappas=(1.0, 2.0, 5.0, 15.0), n: int = 500, alphas=SCALE_ALPHAS,
                           config: SolverConfig | None = None, n_uniform: int = DEFAULT_N_UNIFORM,
                           mean=E3) -> dict[float, ScaleCurve]:
    """Scale curves of vMF samples with varying concentration."""
    config = config or SolverConfig()
    out = {}
    for k in kappas:
        data = sample_vmf(unit_vector(mean), k, n, seed=subseed(config.seed, "data")).points
        out[float(k)] = fitted_scale_curve(data, config, alphas, n_uniform)
    return out


def run_outlier_experiment(counts=(5, 20, 50), n: int = 500, alphas=SCALE_ALPHAS,
                           config: SolverConfig | None = None, n_uniform: int = DEFAULT_N_UNIFORM,
                           kappa: float = 15.0) -> dict[int, ScaleCurve]:
    """Scale curves of a vMF sample about e2 contaminated near e3."""
    config = config or SolverConfig()
    out = {}
    for c in counts:
        data = outlier_sample(n, int(c), config.seed, kappa=kappa)
        out[int(c)] = fitted_scale_curve(data, config, alphas, n_uniform)
    return out


def scale_curves_csv(curves: dict, key: str) -> str:
    """Long-format table ``<key>,alpha,volume``."""
    rows = [(k, a, v) for k, c in curves.items() for a, v in zip(c.alphas, c.volumes)]
    return csv_text([key, "alpha", "volume"], rows)
