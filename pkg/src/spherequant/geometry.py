"""Differential geometry of the unit sphere S^2 embedded in R^3.

Points are arrays of shape ``(..., 3)`` with unit norm. Tangent vectors are
arrays of the same shape, orthogonal to the base point they are attached to;
the base point is always passed explicitly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, SingularityError

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

UNIT_ATOL = 1e-12
ANTIPODE_ATOL = 1e-12
SMALL_ANGLE = 1e-8


def unit_vector(x, atol: float = UNIT_ATOL) -> np.ndarray:
    """Validate that ``x`` holds unit vectors and return it as a float array."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (3,):
        raise DomainError(f"expected trailing dimension 3, got shape {x.shape}")
    norms = np.linalg.norm(x, axis=-1)
    bad = np.abs(norms - 1.0) > atol
    if np.any(bad):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise DomainError(f"not unit-norm (max deviation {worst:.3e})")
    return x


def normalize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _dot(x, y) -> np.ndarray:
    return np.sum(x * y, axis=-1)


def from_spherical(theta, phi) -> np.ndarray:
    """Map colatitude ``theta`` in [0, pi] and longitude ``phi`` in [-pi, pi] to S^2."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any((theta < 0) | (theta > np.pi)):
        raise DomainError("colatitude must lie in [0, pi]")
    if np.any((phi < -np.pi) | (phi > np.pi)):
        raise DomainError("longitude must lie in [-pi, pi]")
    st = np.sin(theta)
    return np.stack([np.cos(phi) * st, np.sin(phi) * st, np.cos(theta)], axis=-1)


def to_spherical(x) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`from_spherical`; longitude is 0 at the poles."""
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x[..., 0], x[..., 1])
    theta = np.arctan2(rho, x[..., 2])
    phi = np.where(rho > 0, np.arctan2(x[..., 1], x[..., 0]), 0.0)
    return theta, phi


def geodesic_distance(x, y) -> np.ndarray:
    return np.arccos(np.clip(_dot(x, y), -1.0, 1.0))


def cost(x, y) -> np.ndarray:
    """Half squared geodesic distance."""
    return 0.5 * geodesic_distance(x, y) ** 2


def tangent_project(x, xi) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return xi - _dot(xi, x)[..., None] * x


def projector(x) -> np.ndarray:
    """Matrix ``I - x x^T`` of the tangent projection at ``x``."""
    x = np.asarray(x, dtype=float)
    return np.eye(3) - x[..., :, None] * x[..., None, :]


def exp_map(x, v) -> np.ndarray:
    """Exponential map at ``x`` applied to the tangent vector ``v``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    small = nv < 1e-12
    safe = np.where(small, 1.0, nv)
    out = np.cos(nv) * x + np.sin(nv) * v / safe
    out = np.where(small, x + v, out)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def _log_parts(x, z):
    """Return (rho_x z, sin d, cos d) with sin d computed from the projection."""
    t = _dot(x, z)
    w = z - t[..., None] * x
    s = np.linalg.norm(w, axis=-1)
    return w, s, t


def log_map(x, z) -> np.ndarray:
    """Inverse of the exponential map at ``x``; undefined at the antipode of ``x``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    w, s, t = _log_parts(x, z)
    anti = t <= -1.0 + ANTIPODE_ATOL
    if np.any(anti):
        idx = np.argwhere(np.atleast_1d(anti))[0]
        xb, zb = np.broadcast_arrays(x, z)
        xi = np.atleast_2d(xb)[idx[0]] if xb.ndim > 1 else xb
        zi = np.atleast_2d(zb)[idx[0]] if zb.ndim > 1 else zb
        raise SingularityError(f"log map undefined for antipodal pair x={xi.tolist()}, z={zi.tolist()}")
    d = np.arctan2(s, t)
    small = d < SMALL_ANGLE
    scale = np.where(small, 1.0, d / np.where(small, 1.0, s))
    return scale[..., None] * w


def riemannian_gradient(x, euclid_grad) -> np.ndarray:
    return tangent_project(x, euclid_grad)


def riemannian_hessian(x, euclid_grad, euclid_hess) -> np.ndarray:
    """Riemannian Hessian as a 3x3 operator acting on the tangent plane at ``x``.

    Computed as ``P (D^2 f - <Df, x> I) P`` with ``P = I - x x^T``; the right
    projection makes the result a symmetric matrix that annihilates ``x``.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(euclid_grad, dtype=float)
    h = np.asarray(euclid_hess, dtype=float)
    p = projector(x)
    inner = h - _dot(g, x)[..., None, None] * np.eye(3)
    return p @ inner @ p


def rodrigues_rotation(src, dst) -> np.ndarray:
    """Rotation matrix sending unit vector ``src`` onto ``dst``.

    For antipodal inputs the rotation is by pi about the normalized tangent
    projection of e1 at ``src`` (e2 when that projection degenerates).
    """
    a = np.asarray(src, dtype=float)
    b = np.asarray(dst, dtype=float)
    c = float(np.dot(a, b))
    axis = np.cross(a, b)
    s = float(np.linalg.norm(axis))
    if c <= -1.0 + 1e-12 or (s < 1e-12 and c < 0):
        k = tangent_project(a, E1)
        if np.linalg.norm(k) < 1e-6:
            k = tangent_project(a, E2)
        k = k / np.linalg.norm(k)
        return 2.0 * np.outer(k, k) - np.eye(3)
    if s < 1e-15:
        return np.eye(3)
    k = axis / s
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    theta = np.arctan2(s, c)
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed rotation from the QR decomposition of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def is_rotation(o, atol: float = 1e-12) -> bool:
    o = np.asarray(o, dtype=float)
    return (
        o.shape == (3, 3)
        and np.allclose(o.T @ o, np.eye(3), atol=atol, rtol=0)
        and abs(np.linalg.det(o) - 1.0) <= atol
    )


@dataclass(frozen=True)
class FrechetMedian:
    point: np.ndarray
    objective: float
    n_iter: int
    converged: bool


def frechet_objective(points, z, chunk: int = 2048) -> np.ndarray:
    """Mean geodesic distance from each candidate in ``z`` to ``points``."""
    points = np.asarray(points, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    out = np.empty(len(z))
    for start in range(0, len(z), chunk):
        block = z[start:start + chunk]
        out[start:start + chunk] = np.arccos(np.clip(block @ points.T, -1.0, 1.0)).mean(axis=1)
    return out


def frechet_median(points, tol: float = 1e-10, max_iter: int = 5000) -> FrechetMedian:
    """Geodesic median by the Weiszfeld iteration on the sphere.

    Starts from the sample medoid and steps to Exp_z(sum_i Log_z(x_i)/d_i / sum_i 1/d_i),
    skipping points that coincide with z. Returns the best iterate seen. At a
    sample point, the iteration stops if the unit log vectors of the other
    points average to norm at most 1/n (the subgradient optimality test).
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise DomainError("frechet_median needs a nonempty (n, 3) sample")
    n = len(x)
    obj_pts = frechet_objective(x, x)
    i0 = int(np.argmin(obj_pts))
    z = x[i0].copy()
    best, best_obj = z.copy(), float(obj_pts[i0])
    converged = False
    k = 0
    for k in range(max_iter):
        t = x @ z
        keep = (t < 1.0 - 1e-15) & (t > -1.0 + ANTIPODE_ATOL)
        if not np.any(keep):
            converged = True
            break
        v = log_map(z, x[keep])
        d = np.linalg.norm(v, axis=1)
        nz = d > 0
        inv = 1.0 / d[nz]
        n_coincide = n - int(nz.sum())
        if n_coincide and np.linalg.norm((v[nz] * inv[:, None]).sum(axis=0)) <= n_coincide:
            converged = True
            break
        step = (v[nz] * inv[:, None]).sum(axis=0) / inv.sum()
        z = exp_map(z, step)
        obj = float(frechet_objective(x, z)[0])
        if obj < best_obj:
            best, best_obj = z.copy(), obj
        if np.linalg.norm(step) < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"frechet_median did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return FrechetMedian(point=best, objective=best_obj, n_iter=k + 1, converged=converged)
