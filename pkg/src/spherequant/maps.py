"""Regularized MK quantile and distribution maps built from a fitted potential.

Both maps are softmax-weighted averages of log vectors followed by the
exponential map. The quantile map averages over the target sample X_j,
weighted by the empirical conjugate of the potential; the distribution map
averages over a uniform sample U_i, weighted by the potential itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .distributions import sample_uniform
from .exceptions import DomainError, NumericalError, SingularityError
from .geometry import exp_map, tangent_project
from .harmonics import HarmonicCoeffs, eval_series, grid_spec
from .seeding import subseed
from .solver import PotentialEstimate

ANTIPODE_DROP = 1e-6
DEFAULT_N_UNIFORM = 4096
_CHUNK = 256


def _cost_matrix(x: np.ndarray, y: np.ndarray):
    """Dot products, geodesic distances and costs between rows of x and y."""
    t = np.clip(x @ y.T, -1.0, 1.0)
    d = np.arccos(t)
    return t, d, 0.5 * d * d


def cost_derivatives(x, z):
    """First and second Cartesian derivatives in ``x`` of c(x, z) = arccos(<x, z>)^2 / 2.

    The derivatives are those of this extension of c to R^3. Its Hessian is
    ``(1 - d t / s) / s^2 z z^T`` with t = <x, z>, s = sqrt(1 - t^2); the
    form ``D^2 c - <Dc, x> I`` that adds ``d t / s`` on the diagonal is what
    enters the Riemannian Hessian (see :func:`~spherequant.geometry.riemannian_hessian`).
    Near z = x the limits d/s -> 1 and (1 - d t/s)/s^2 -> 1/3 + 2 s^2/15 are used.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    t = np.sum(x * z, axis=-1)
    if np.any(t <= -1.0 + 1e-12):
        raise SingularityError("cost derivatives are singular at antipodal points")
    t = np.minimum(t, 1.0)
    # 1 - t is exact here, so s and d are accurate functions of t
    s = np.sqrt((1.0 - t) * (1.0 + t))
    d = np.arccos(t)
    small = s < 1e-4
    s_safe = np.where(small, 1.0, s)
    ratio = np.where(small, 1.0 + s * s / 6.0, d / s_safe)
    curv = np.where(small, 1.0 / 3.0 + 2.0 * s * s / 15.0, (1.0 - d * t / s_safe) / s_safe ** 2)
    grad = -ratio[..., None] * z
    hess = curv[..., None, None] * z[..., :, None] * z[..., None, :]
    return grad, hess


def _log_weights(log_weights, n: int) -> np.ndarray:
    if log_weights is None:
        return np.full(n, -math.log(n))
    lw = np.asarray(log_weights, dtype=float)
    if lw.shape != (n,):
        raise DomainError(f"expected {n} log-weights, got shape {lw.shape}")
    return lw - logsumexp(lw)


def empirical_c_transform(potential_values, uniform_points, z, eps: float, log_weights=None) -> np.ndarray:
    """Monte-Carlo conjugate: -eps log (1/N) sum_i exp((u(U_i) - c(U_i, z))/eps).

    ``log_weights`` replaces the 1/N masses by arbitrary normalized ones.
    """
    u_pts = np.asarray(uniform_points, dtype=float).reshape(-1, 3)
    if len(u_pts) == 0:
        raise DomainError("need at least one uniform point")
    vals = np.broadcast_to(np.asarray(potential_values, dtype=float), (len(u_pts),))
    lw = _log_weights(log_weights, len(u_pts))
    scalar = np.ndim(z) == 1
    z = np.atleast_2d(np.asarray(z, dtype=float))
    out = np.empty(len(z))
    for a in range(0, len(z), _CHUNK):
        _, _, c = _cost_matrix(z[a:a + _CHUNK], u_pts)
        out[a:a + _CHUNK] = -eps * logsumexp((vals[None, :] - c) / eps + lw[None, :], axis=1)
    return out[0] if scalar else out


@dataclass(frozen=True)
class EntropicMapContext:
    """Fitted potential with the target and uniform samples and their cached conjugates."""

    potential: PotentialEstimate
    target: np.ndarray
    uniform: np.ndarray
    u_at_uniform: np.ndarray
    v_at_target: np.ndarray
    target_log_weights: np.ndarray
    uniform_log_weights: np.ndarray

    @property
    def epsilon(self) -> float:
        return self.potential.epsilon

    @classmethod
    def build(cls, potential: PotentialEstimate, target, uniform=None, *, n_uniform: int = DEFAULT_N_UNIFORM,
              seed: int = 0, target_log_weights=None, uniform_log_weights=None) -> "EntropicMapContext":
        """Cache u at the uniform points and its empirical conjugate at the targets.

        Without ``uniform``, ``n_uniform`` points are drawn from the ``uniform``
        sub-stream of ``seed``. Optional log-weights turn either sample into a
        weighted atomic measure (quadrature nodes, for instance).
        """
        x = np.array(target, dtype=float).reshape(-1, 3)
        if uniform is None:
            if n_uniform < 1:
                raise DomainError("n_uniform must be >= 1")
            uniform = sample_uniform(n_uniform, seed=subseed(seed, "uniform")).points
        u = np.array(uniform, dtype=float).reshape(-1, 3)
        if len(x) == 0 or len(u) == 0:
            raise DomainError("target and uniform samples must be nonempty")
        lw_x = _log_weights(target_log_weights, len(x))
        lw_u = _log_weights(uniform_log_weights, len(u))
        u_vals = eval_series(potential.coeffs, u)
        v_vals = empirical_c_transform(u_vals, u, x, potential.epsilon, lw_u)
        if not (np.all(np.isfinite(u_vals)) and np.all(np.isfinite(v_vals))):
            raise NumericalError("non-finite cached conjugate values")
        for arr in (x, u, u_vals, v_vals, lw_x, lw_u):
            arr.setflags(write=False)
        return cls(potential, x, u, u_vals, v_vals, lw_x, lw_u)

    @classmethod
    def exact_uniform(cls, band_limit: int, epsilon: float) -> "EntropicMapContext":
        """Context for nu = mu with u = 0, both measures carried by quadrature nodes."""
        spec = grid_spec(band_limit)
        pts = spec.points.reshape(-1, 3)
        lw = np.log(np.broadcast_to(spec.mu_weights, spec.shape).ravel())
        return cls.build(PotentialEstimate.zero(band_limit, epsilon), pts, pts,
                         target_log_weights=lw, uniform_log_weights=lw)

    @property
    def n_target(self) -> int:
        return len(self.target)

    @property
    def n_uniform(self) -> int:
        return len(self.uniform)


@dataclass(frozen=True)
class MapResult:
    points: np.ndarray
    weights_sum: np.ndarray
    dropped: int
    tangent_norm_max: float


def _weighted_log_average(q, atoms, scores, lw, eps):
    """For each query row, softmax over atoms of (score - c)/eps + log-weight,
    then the weighted mean of Log_q(atom). Near-antipodal atoms are dropped."""
    t, d, c = _cost_matrix(q, atoms)
    logits = (scores[None, :] - c) / eps + lw[None, :]
    anti = d > math.pi - ANTIPODE_DROP
    dropped = int(anti.sum())
    if dropped:
        logits = np.where(anti, -np.inf, logits)
        if np.any(np.all(anti, axis=1)):
            bad = q[np.all(anti, axis=1)][0]
            raise SingularityError(f"all atoms are antipodal to query point {bad.tolist()}")
    w = softmax(logits, axis=1)
    s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    small = d < 1e-8
    ratio = np.where(small, 1.0, d / np.where(small | (s == 0), 1.0, s))
    ratio = np.where(anti, 0.0, ratio)
    # Log_q(a) = (d / s) (a - t q)
    coef = w * ratio
    avg = coef @ atoms - np.sum(coef * t, axis=1)[:, None] * q
    return avg, w, dropped


def _apply_map(q, atoms, scores, lw, eps):
    q = np.atleast_2d(np.asarray(q, dtype=float))
    out = np.empty_like(q)
    wsum = np.empty(len(q))
    dropped, tmax = 0, 0.0
    for a in range(0, len(q), _CHUNK):
        avg, w, dr = _weighted_log_average(q[a:a + _CHUNK], atoms, scores, lw, eps)
        out[a:a + _CHUNK] = exp_map(q[a:a + _CHUNK], avg)
        wsum[a:a + _CHUNK] = w.sum(axis=1)
        dropped += dr
        tmax = max(tmax, float(np.max(np.linalg.norm(avg, axis=1))))
    return MapResult(out, wsum, dropped, tmax)


def map_Q_eps(ctx: EntropicMapContext, x, full: bool = False):
    """Empirical regularized quantile map."""
    res = _apply_map(x, ctx.target, ctx.v_at_target, ctx.target_log_weights, ctx.epsilon)
    if full:
        return res
    return res.points[0] if np.ndim(x) == 1 else res.points


def map_F_eps(ctx: EntropicMapContext, z, full: bool = False):
    """Empirical regularized distribution map."""
    res = _apply_map(z, ctx.uniform, ctx.u_at_uniform, ctx.uniform_log_weights, ctx.epsilon)
    if full:
        return res
    return res.points[0] if np.ndim(z) == 1 else res.points


def quantile_weights(ctx: EntropicMapContext, x) -> np.ndarray:
    """Softmax weights over the target sample, one row per query point."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, _, c = _cost_matrix(x, ctx.target)
    return softmax((ctx.v_at_target[None, :] - c) / ctx.epsilon + ctx.target_log_weights, axis=1)


def distribution_weights(ctx: EntropicMapContext, z) -> np.ndarray:
    """Softmax weights over the uniform sample, one row per query point."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    _, _, c = _cost_matrix(z, ctx.uniform)
    return softmax((ctx.u_at_uniform[None, :] - c) / ctx.epsilon + ctx.uniform_log_weights, axis=1)


def g_eps_density(ctx: EntropicMapContext, x, z, consistent: bool = False) -> np.ndarray:
    """Plan density exp((u(x) - c(x, z) + u^{c,eps}(z))/eps) with respect to mu x nu.

    ``u(x)`` comes from the fitted series, or with ``consistent=True`` from
    the conjugate of the cached target values, in which case the density
    integrates to one against the target measure for every x.
    Returns an array of shape (len(x), len(z)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    eps = ctx.epsilon
    if consistent:
        ux = empirical_c_transform(ctx.v_at_target, ctx.target, x, eps, ctx.target_log_weights)
    else:
        ux = eval_series(ctx.potential.coeffs, x)
    vz = empirical_c_transform(ctx.u_at_uniform, ctx.uniform, z, eps, ctx.uniform_log_weights)
    _, _, c = _cost_matrix(x, z)
    return np.exp((ux[:, None] - c + vz[None, :]) / eps)


def _closed_form_grad(q, atoms, scores, lw, eps):
    out = np.empty_like(q)
    for a in range(0, len(q), _CHUNK):
        qa = q[a:a + _CHUNK]
        _, _, c = _cost_matrix(qa, atoms)
        w = softmax((scores[None, :] - c) / eps + lw[None, :], axis=1)
        grad_c, _ = cost_derivatives(qa[:, None, :], atoms[None, :, :])
        out[a:a + _CHUNK] = np.einsum("qk,qkd->qd", w, grad_c)
    return out


def grad_u_eps_closed_form(ctx: EntropicMapContext, x) -> np.ndarray:
    """Cartesian gradient of the potential as the plan-weighted average of
    cost gradients over the target sample. Its tangent part is minus the
    tangent average used by :func:`map_Q_eps`."""
    q = np.atleast_2d(np.asarray(x, dtype=float))
    out = _closed_form_grad(q, ctx.target, ctx.v_at_target, ctx.target_log_weights, ctx.epsilon)
    return out[0] if np.ndim(x) == 1 else out


def grad_u_ceps_closed_form(ctx: EntropicMapContext, z) -> np.ndarray:
    """Gradient of the conjugate potential, weighted over the uniform sample."""
    q = np.atleast_2d(np.asarray(z, dtype=float))
    out = _closed_form_grad(q, ctx.uniform, ctx.u_at_uniform, ctx.uniform_log_weights, ctx.epsilon)
    return out[0] if np.ndim(z) == 1 else out


def hessian_u_eps(ctx: EntropicMapContext, x) -> np.ndarray:
    """Cartesian Hessian of the potential,
    sum_k w_k (D^2 c_k - Dc_k Dc_k^T / eps) + Du Du^T / eps,
    with w the quantile-map weights and Du the closed-form gradient."""
    q = np.atleast_2d(np.asarray(x, dtype=float))
    eps = ctx.epsilon
    out = np.empty((len(q), 3, 3))
    for a in range(0, len(q), _CHUNK):
        qa = q[a:a + _CHUNK]
        _, _, c = _cost_matrix(qa, ctx.target)
        w = softmax((ctx.v_at_target[None, :] - c) / eps + ctx.target_log_weights, axis=1)
        gc, hc = cost_derivatives(qa[:, None, :], ctx.target[None, :, :])
        du = np.einsum("qk,qkd->qd", w, gc)
        second = np.einsum("qk,qkij->qij", w, hc) - np.einsum("qk,qki,qkj->qij", w, gc, gc) / eps
        out[a:a + _CHUNK] = second + du[:, :, None] * du[:, None, :] / eps
    return out[0] if np.ndim(x) == 1 else out


def series_gradient(potential: PotentialEstimate, x) -> np.ndarray:
    """Surface gradient of the fitted series (tangent part of its Cartesian gradient)."""
    x = np.asarray(x, dtype=float)
    _, g = eval_series(potential.coeffs, x, with_gradient=True)
    return tangent_project(x, g)


def interpolate_potentials(p1: PotentialEstimate, p2: PotentialEstimate, t: float) -> PotentialEstimate:
    """Coefficient-wise blend ``t * p1 + (1 - t) * p2``."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    if p1.band_limit != p2.band_limit or p1.epsilon != p2.epsilon:
        raise DomainError("interpolated potentials need equal band limits and epsilon")
    v = t * p1.coeffs.values + (1.0 - t) * p2.coeffs.values
    return PotentialEstimate(HarmonicCoeffs(p1.band_limit, v), p1.epsilon)


def pushforward_defect(ctx: EntropicMapContext, reference, n_directions: int = 32, seed: int = 0) -> float:
    """Sliced Kolmogorov-Smirnov distance between Q(reference) and the target sample.

    A diagnostic only: entropic maps do not push mu exactly onto nu. Assumes
    an unweighted target.
    """
    dirs = sample_uniform(n_directions, seed=seed).points
    q = map_Q_eps(ctx, np.asarray(reference, dtype=float).reshape(-1, 3))
    worst = 0.0
    for v in dirs:
        a, b = np.sort(q @ v), np.sort(ctx.target @ v)
        grid = np.concatenate([a, b])
        fa = np.searchsorted(a, grid, side="right") / len(a)
        fb = np.searchsorted(b, grid, side="right") / len(b)
        worst = max(worst, float(np.max(np.abs(fa - fb))))
    return worst
