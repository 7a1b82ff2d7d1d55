"""Semi-dual entropic OT from the uniform law on S^2 to a target law.

The dual potential u is parameterized by real spherical-harmonic
coefficients and fitted by stochastic gradient descent on

    H(u) = E_X[ -u^{c,eps}(X) ],
    u^{c,eps}(y) = -eps log  integral exp((u(x) - c(x, y)) / eps) dmu(x),

where mu is the uniform probability measure. All integrals against mu use
the Gauss-Legendre grid of the potential's band limit.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .exceptions import DomainError, NumericalError
from .geometry import normalize
from .harmonics import (
    HarmonicCoeffs,
    QuadratureGrid,
    analyze_values,
    degree_order,
    grid_spec,
    synthesize_values,
)
from .seeding import substream

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.1
    band_limit: int = 24
    gamma: float = 3.0
    alpha: float = 0.51
    n_iters: int = 20000
    batch: int = 1
    seed: int = 0
    trace_every: int = 100

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.5 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (1/2, 1), got {self.alpha}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be > 0, got {self.gamma}")
        if self.band_limit < 1:
            raise DomainError(f"band_limit must be >= 1, got {self.band_limit}")
        if self.n_iters < 0 or self.batch < 1 or self.trace_every < 1:
            raise DomainError("n_iters must be >= 0, batch and trace_every >= 1")


@dataclass(frozen=True)
class PotentialEstimate:
    """Fitted dual potential; the (0, 0) coefficient is pinned to zero."""

    coeffs: HarmonicCoeffs
    epsilon: float
    objective_trace: tuple[float, ...] = ()
    iterations: int = 0
    config: SolverConfig | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.coeffs.values[0] != 0.0:
            v = self.coeffs.values.copy()
            v[0] = 0.0
            object.__setattr__(self, "coeffs", HarmonicCoeffs(self.coeffs.band_limit, v))

    @property
    def band_limit(self) -> int:
        return self.coeffs.band_limit

    @classmethod
    def zero(cls, band_limit: int, epsilon: float) -> "PotentialEstimate":
        return cls(HarmonicCoeffs.zeros(band_limit), epsilon)

    def grid_values(self) -> np.ndarray:
        return synthesize_values(self.band_limit, self.coeffs.values)

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` (coefficients) and ``<stem>.json`` (metadata)."""
        stem = Path(stem)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        self.coeffs.to_csv(csv_path)
        cfg = self.config or SolverConfig(epsilon=self.epsilon, band_limit=self.band_limit)
        sidecar = {
            "epsilon": self.epsilon,
            "band_limit": self.band_limit,
            "gamma": cfg.gamma,
            "alpha": cfg.alpha,
            "batch": cfg.batch,
            "n_iters": cfg.n_iters,
            "iterations": self.iterations,
            "seed": cfg.seed,
            "objective_trace": list(self.objective_trace),
        }
        sidecar.update(self.meta)
        json_path.write_text(json.dumps(sidecar, indent=2) + "\n")
        return csv_path, json_path

    @classmethod
    def load(cls, stem) -> "PotentialEstimate":
        stem = Path(stem)
        coeffs = HarmonicCoeffs.from_csv(stem.with_suffix(".csv"))
        side = json.loads(stem.with_suffix(".json").read_text())
        if side["band_limit"] != coeffs.band_limit:
            raise DomainError("sidecar band_limit does not match coefficient table")
        cfg = SolverConfig(
            epsilon=side["epsilon"], band_limit=side["band_limit"], gamma=side["gamma"],
            alpha=side["alpha"], batch=side.get("batch", 1), n_iters=side.get("n_iters", side["iterations"]),
            seed=side["seed"],
        )
        known = {"epsilon", "band_limit", "gamma", "alpha", "batch", "n_iters", "iterations", "seed", "objective_trace"}
        meta = {k: v for k, v in side.items() if k not in known}
        return cls(coeffs, side["epsilon"], tuple(side["objective_trace"]), side["iterations"], cfg, meta)


def weight_sequence(band_limit: int) -> HarmonicCoeffs:
    """Step weights 1/(l^2 + m^2), with the pinned (0, 0) entry set to 0."""
    if band_limit < 1:
        raise DomainError("weight_sequence needs band_limit >= 1")
    ls, ms = degree_order(band_limit)
    denom = (ls ** 2 + ms ** 2).astype(float)
    w = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0)
    return HarmonicCoeffs(band_limit, w)


def _log_mu_weights(band_limit: int) -> np.ndarray:
    return np.log(grid_spec(band_limit).mu_weights).ravel()


def _grid_cost(band_limit: int, y: np.ndarray) -> np.ndarray:
    """Cost matrix between grid nodes (rows) and points ``y`` (columns)."""
    pts = grid_spec(band_limit).points.reshape(-1, 3)
    return 0.5 * np.arccos(np.clip(pts @ y.T, -1.0, 1.0)) ** 2


def smooth_conjugate_values(band_limit: int, u_grid: np.ndarray, y, eps: float) -> np.ndarray:
    """u^{c,eps}(y) for grid values ``u_grid`` of the potential; ``y`` is ``(k, 3)``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    expo = (u_grid.ravel()[:, None] - _grid_cost(band_limit, y)) / eps
    return -eps * logsumexp(expo + _log_mu_weights(band_limit)[:, None], axis=0)


def smooth_conjugate_grid(u_coeffs: HarmonicCoeffs, y, eps: float):
    """Entropic c-transform of the series ``u_coeffs`` at ``y`` by grid quadrature."""
    if not eps > 0:
        raise DomainError(f"epsilon must be > 0, got {eps}")
    y = np.asarray(y, dtype=float)
    out = smooth_conjugate_values(u_coeffs.band_limit, synthesize_values(u_coeffs.band_limit, u_coeffs.values), y, eps)
    return out[0] if y.ndim == 1 else out


def _g_values(band_limit: int, u_grid: np.ndarray, x_obs: np.ndarray, eps: float):
    """Normalized plan densities at grid nodes for each observation; also -u^{c,eps}(x)."""
    expo = (u_grid.ravel()[:, None] - _grid_cost(band_limit, x_obs)) / eps
    lse = logsumexp(expo + _log_mu_weights(band_limit)[:, None], axis=0)
    g = np.exp(expo - lse)
    return g, eps * lse


def g_on_grid(u_coeffs: HarmonicCoeffs, x_obs, eps: float) -> QuadratureGrid:
    """Density exp((u - c(., x))/eps) normalized to unit mean under mu, on the grid."""
    if not eps > 0:
        raise DomainError(f"epsilon must be > 0, got {eps}")
    L = u_coeffs.band_limit
    x = np.atleast_2d(np.asarray(x_obs, dtype=float))
    g, _ = _g_values(L, synthesize_values(L, u_coeffs.values), x, eps)
    return QuadratureGrid(L, g[:, 0].reshape(grid_spec(L).shape))


def objective_gradient(u_coeffs: HarmonicCoeffs, x_obs, eps: float) -> HarmonicCoeffs:
    """Partial derivatives of u -> -u^{c,eps}(x_obs) in the coefficients.

    Equal to the harmonic coefficients of g against mu, i.e. the sigma-integral
    coefficients divided by 4 pi.
    """
    g = g_on_grid(u_coeffs, x_obs, eps)
    return HarmonicCoeffs(u_coeffs.band_limit, analyze_values(g.band_limit, g.values) / FOUR_PI)


def _batch_step(coeffs: np.ndarray, band_limit: int, x_batch: np.ndarray, eps: float,
                step: float, weights: np.ndarray, index: int):
    shape = grid_spec(band_limit).shape
    u_grid = synthesize_values(band_limit, coeffs)
    g, h = _g_values(band_limit, u_grid, x_batch, eps)
    gbar = analyze_values(band_limit, g.mean(axis=1).reshape(shape)) / FOUR_PI
    if not np.all(np.isfinite(gbar)):
        raise NumericalError(f"non-finite gradient at iterate {index}")
    new = coeffs - step * weights * gbar
    new[0] = 0.0
    return new, h


def sgd_step(state: PotentialEstimate, x_obs, step: float, weights: HarmonicCoeffs,
             index: int = 0) -> PotentialEstimate:
    """One weighted stochastic gradient step on the coefficients.

    ``x_obs`` may be one point or a batch ``(b, 3)``; batch gradients are averaged.
    """
    if weights.band_limit != state.band_limit:
        raise DomainError("weights and potential have different band limits")
    x = np.atleast_2d(np.asarray(x_obs, dtype=float))
    new, _ = _batch_step(state.coeffs.values, state.band_limit, x, state.epsilon, step, weights.values, index)
    return PotentialEstimate(HarmonicCoeffs(state.band_limit, new), state.epsilon,
                             state.objective_trace, state.iterations + 1, state.config, state.meta)


def _data_stream(data: np.ndarray, rng: np.random.Generator):
    """Endless pass over ``data`` with a fresh permutation per epoch."""
    n = len(data)
    while True:
        for i in rng.permutation(n):
            yield data[i]


def fit(data, config: SolverConfig, init: PotentialEstimate | None = None,
        callback=None) -> PotentialEstimate:
    """Run the stochastic algorithm over a finite sample.

    The sample is cycled with per-epoch reshuffling drawn from the ``solver``
    sub-stream of ``config.seed``. Steps are ``gamma * n**-alpha``. Every
    ``trace_every`` iterations the mean of -u^{c,eps}(X_n) over the trailing
    window is appended to the objective trace.
    """
    x = np.asarray(data, dtype=float).reshape(-1, 3)
    if len(x) == 0:
        raise DomainError("fit needs a nonempty sample")
    L, eps = config.band_limit, config.epsilon
    rng = substream(config.seed, "solver")
    stream = _data_stream(x, rng)
    weights = weight_sequence(L).values
    coeffs = np.zeros((L + 1) ** 2) if init is None else init.coeffs.values.copy()
    if init is not None and init.band_limit != L:
        raise DomainError("initial potential band limit differs from config")
    trace, window = [], []
    for n in range(1, config.n_iters + 1):
        batch = np.array([next(stream) for _ in range(config.batch)])
        step = config.gamma * n ** (-config.alpha)
        coeffs, h = _batch_step(coeffs, L, batch, eps, step, weights, n)
        window.append(float(h.mean()))
        if n % config.trace_every == 0:
            trace.append(float(np.mean(window)))
            window.clear()
        if callback is not None:
            callback(n, coeffs)
    return PotentialEstimate(HarmonicCoeffs(L, coeffs), eps, tuple(trace), config.n_iters, config)


# ---------------------------------------------------------------------------
# semi-discrete Sinkhorn oracle and diagnostics


@dataclass(frozen=True)
class SinkhornResult:
    u: QuadratureGrid
    v: np.ndarray
    sweeps: int
    residual: float


def sinkhorn_semidiscrete_oracle(sample, eps: float, band_limit: int, tol: float = 1e-8,
                                 max_sweeps: int = 100_000) -> SinkhornResult:
    """Alternating smooth conjugates between the grid approximation of mu and
    the empirical measure of ``sample``.

    Returns the potential on grid nodes centered to quadrature mean 0 and the
    matching conjugate values on the sample points.
    """
    if not eps > 0:
        raise DomainError(f"epsilon must be > 0, got {eps}")
    y = np.asarray(sample, dtype=float).reshape(-1, 3)
    if len(y) == 0:
        raise DomainError("sample must be nonempty")
    spec = grid_spec(band_limit)
    cost = _grid_cost(band_limit, y)
    logw = _log_mu_weights(band_limit)
    log_nu = -math.log(len(y))
    u = np.zeros(cost.shape[0])
    residual = math.inf
    for sweep in range(1, max_sweeps + 1):
        v = -eps * logsumexp((u[:, None] - cost) / eps + logw[:, None], axis=0)
        u_new = -eps * logsumexp((v[None, :] - cost) / eps + log_nu, axis=1)
        residual = float(np.max(np.abs(u_new - u)))
        u = u_new
        if residual < tol:
            break
    else:
        raise NumericalError(f"Sinkhorn did not converge in {max_sweeps} sweeps (residual {residual:.3e})")
    v = -eps * logsumexp((u[:, None] - cost) / eps + logw[:, None], axis=0)
    mean = float(np.exp(logw) @ u)
    return SinkhornResult(QuadratureGrid(band_limit, (u - mean).reshape(spec.shape)), v + mean, sweep, residual)


def empirical_conjugate(values_at_points: np.ndarray, points: np.ndarray, y, eps: float) -> np.ndarray:
    """Soft c-transform against the empirical measure of ``points``:
    -eps log (1/n) sum_j exp((v_j - c(y, X_j))/eps)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    cost = 0.5 * np.arccos(np.clip(y @ points.T, -1.0, 1.0)) ** 2
    return -eps * logsumexp((values_at_points[None, :] - cost) / eps - math.log(len(points)), axis=1)


def fixed_point_defect(potential: PotentialEstimate, sample) -> float:
    """sup over grid nodes of |u - (u^{c,eps})^{c,eps}|, first conjugate against
    mu (quadrature), second against the empirical measure of ``sample``."""
    L, eps = potential.band_limit, potential.epsilon
    y = np.asarray(sample, dtype=float).reshape(-1, 3)
    u_grid = potential.grid_values()
    v = smooth_conjugate_values(L, u_grid, y, eps)
    uu = empirical_conjugate(v, y, grid_spec(L).points.reshape(-1, 3), eps)
    return float(np.max(np.abs(u_grid.ravel() - uu)))


def semidual_objective(potential: PotentialEstimate, sample) -> float:
    """Empirical H(u) = mean of -u^{c,eps} over ``sample`` (lower is better)."""
    y = np.asarray(sample, dtype=float).reshape(-1, 3)
    return float(-np.mean(smooth_conjugate_values(potential.band_limit, potential.grid_values(), y,
                                                  potential.epsilon)))
