"""Quantile contours, sign curves, directional depth and scale curves.

Every routine works through a pair of maps (quantile Q and distribution F):
either a fitted :class:`~spherequant.maps.EntropicMapContext` or the closed
forms of a rotationally invariant law (:class:`OracleMaps`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Union

import numpy as np

from .distributions import RotInvariantLaw, closed_form_F, closed_form_Q
from .exceptions import DomainError
from .geometry import E3, frechet_median, geodesic_distance, normalize, rodrigues_rotation, unit_vector
from .maps import EntropicMapContext, map_F_eps, map_Q_eps
from .tabular import vectors, write_csv, write_json

DEFAULT_TAUS = (0.1, 0.25, 0.5, 0.75, 0.9)
SIGN_CURVE_POINTS = 200
SIGN_CURVE_GUARD = 1e-3


class QuantileMaps(Protocol):
    def Q(self, x: np.ndarray) -> np.ndarray: ...
    def F(self, z: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class FittedMaps:
    """Empirical regularized maps of a fitted context."""

    ctx: EntropicMapContext

    def Q(self, x):
        return map_Q_eps(self.ctx, np.atleast_2d(x))

    def F(self, z):
        return map_F_eps(self.ctx, np.atleast_2d(z))


@dataclass(frozen=True)
class OracleMaps:
    """Closed-form maps of a rotationally invariant law."""

    law: RotInvariantLaw

    def Q(self, x):
        return closed_form_Q(self.law, np.atleast_2d(x))

    def F(self, z):
        return closed_form_F(self.law, np.atleast_2d(z))


MapsLike = Union[QuantileMaps, EntropicMapContext, RotInvariantLaw]


def as_maps(obj: MapsLike) -> QuantileMaps:
    if isinstance(obj, EntropicMapContext):
        return FittedMaps(obj)
    if isinstance(obj, RotInvariantLaw):
        return OracleMaps(obj)
    return obj


def estimate_pole(maps: MapsLike, data) -> np.ndarray:
    """Image under F of the sample Frechet median."""
    med = frechet_median(np.asarray(data, dtype=float).reshape(-1, 3))
    return as_maps(maps).F(med.point)[0]


def oracle_pole(law: RotInvariantLaw) -> np.ndarray:
    """F of the population median; for these laws the median is the axis."""
    return closed_form_F(law, np.atleast_2d(law.axis))[0]


def directional_sign(x, pole):
    """Unit component of ``x`` orthogonal to ``pole``.

    Returns ``(sign, degenerate)``; at x = +-pole the sign is the zero vector
    and ``degenerate`` is True.
    """
    x = np.asarray(x, dtype=float)
    p = unit_vector(pole)
    perp = x - np.sum(x * p, axis=-1, keepdims=True) * p
    # re-project once to clean the residual along the pole
    perp = perp - np.sum(perp * p, axis=-1, keepdims=True) * p
    norm = np.linalg.norm(perp, axis=-1, keepdims=True)
    degenerate = norm[..., 0] < 1e-12
    sign = np.where(degenerate[..., None], 0.0, perp / np.where(degenerate[..., None], 1.0, norm))
    return sign, degenerate


@dataclass(frozen=True)
class QuantileContour:
    """Closed polyline of order ``tau`` around ``pole`` (last point joins the first)."""

    tau: float
    points: np.ndarray
    pole: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise DomainError(f"tau must lie in [0, 1], got {self.tau}")
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
            raise DomainError("a contour needs at least 3 points in R^3")
        if np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) > 1e-9:
            raise DomainError("contour points must be unit vectors")

    def to_dict(self) -> dict:
        return {"tau": float(self.tau), "pole": vectors(self.pole)[0], "points": vectors(self.points)}

    def to_json(self, path=None) -> str:
        return write_json(path, self.to_dict())


@dataclass(frozen=True)
class SignCurve:
    sign: np.ndarray
    pole: np.ndarray
    t: np.ndarray
    points: np.ndarray

    def to_dict(self) -> dict:
        return {"sign": vectors(self.sign)[0], "pole": vectors(self.pole)[0], "points": vectors(self.points)}

    def to_json(self, path=None) -> str:
        return write_json(path, self.to_dict())


@dataclass(frozen=True)
class DepthReport:
    points: np.ndarray
    depth: np.ndarray
    pole: np.ndarray

    def __post_init__(self):
        if np.any((self.depth < 0.0) | (self.depth > 1.0)):
            raise DomainError("depth values must lie in [0, 1]")

    def to_csv(self, path=None) -> str:
        rows = (list(p) + [d] for p, d in zip(self.points, self.depth))
        return write_csv(path, ["x", "y", "z", "depth"], rows)


@dataclass(frozen=True)
class ScaleCurve:
    alphas: np.ndarray
    volumes: np.ndarray

    def to_csv(self, path=None) -> str:
        return write_csv(path, ["alpha", "volume"], zip(self.alphas, self.volumes))


def _check_tau(tau: float) -> None:
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")


def reference_contour(tau: float, pole, n_pts: int = 200) -> QuantileContour:
    """Boundary of the cap {x : <x, pole> >= 1 - 2 tau}, which has uniform mass tau."""
    _check_tau(tau)
    if n_pts < 3:
        raise DomainError("n_pts must be >= 3")
    pole = unit_vector(pole)
    h = 1.0 - 2.0 * tau
    r = math.sqrt(max(0.0, (1.0 - h) * (1.0 + h)))
    phi = 2.0 * np.pi * np.arange(n_pts) / n_pts
    circle = np.stack([r * np.cos(phi), r * np.sin(phi), np.full(n_pts, h)], axis=1)
    pts = circle @ rodrigues_rotation(E3, pole).T
    # pin the latitude exactly against rounding in the rotation
    along = pts @ pole
    perp = pts - along[:, None] * pole
    nrm = np.linalg.norm(perp, axis=1, keepdims=True)
    if r > 0:
        pts = h * pole + r * perp / np.where(nrm > 0, nrm, 1.0)
    else:
        pts = np.tile(h * pole, (n_pts, 1))
    return QuantileContour(float(tau), pts, pole)


def quantile_contour(maps: MapsLike, tau: float, pole, n_pts: int = 200) -> QuantileContour:
    """Image under Q of the reference contour of order ``tau``."""
    ref = reference_contour(tau, pole, n_pts)
    return QuantileContour(ref.tau, as_maps(maps).Q(ref.points), ref.pole)


def meridian(sign, pole, n_pts: int = SIGN_CURVE_POINTS, guard: float = SIGN_CURVE_GUARD):
    """Points t * pole + sqrt(1 - t^2) * sign for t from -1 + guard to 1."""
    pole = unit_vector(pole)
    s = np.asarray(sign, dtype=float)
    s = normalize(s - np.dot(s, pole) * pole)
    t = np.linspace(-1.0 + guard, 1.0, n_pts)
    pts = t[:, None] * pole + np.sqrt((1.0 - t) * (1.0 + t))[:, None] * s
    return t, pts, s


def sign_curve(maps: MapsLike, sign, pole, n_pts: int = SIGN_CURVE_POINTS,
               guard: float = SIGN_CURVE_GUARD) -> SignCurve:
    """Image under Q of the meridian through ``sign``."""
    t, pts, s = meridian(sign, pole, n_pts, guard)
    return SignCurve(s, unit_vector(pole), t, as_maps(maps).Q(pts))


def depth_of_ranks(ranks, pole) -> np.ndarray:
    """1 - d(F(x), pole) / pi from precomputed ranks F(x)."""
    d = geodesic_distance(np.asarray(ranks, dtype=float), unit_vector(pole))
    return np.clip(1.0 - d / math.pi, 0.0, 1.0)


def mk_depth(maps: MapsLike, x, pole) -> DepthReport:
    """Directional depth 1 - d(F(x), pole) / pi."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ranks = as_maps(maps).F(x)
    return DepthReport(x, depth_of_ranks(ranks, pole), unit_vector(pole))


def region_membership(maps: MapsLike, y, tau: float, pole) -> np.ndarray:
    """Whether each y lies in the quantile region of order tau."""
    _check_tau(tau)
    ranks = as_maps(maps).F(np.atleast_2d(y))
    return ranks @ unit_vector(pole) >= 1.0 - 2.0 * tau


def scale_curve(maps: MapsLike, alphas, uniform_sample, pole) -> ScaleCurve:
    """Fraction of uniform points whose rank lies in the cap of content alpha."""
    a = np.asarray(alphas, dtype=float)
    if np.any((a < 0.0) | (a > 1.0)):
        raise DomainError("alphas must lie in [0, 1]")
    u = np.asarray(uniform_sample, dtype=float).reshape(-1, 3)
    if len(u) == 0:
        raise DomainError("scale curve needs at least one uniform point")
    proj = as_maps(maps).F(u) @ unit_vector(pole)
    # number of proj >= 1 - 2 alpha
    counts = np.searchsorted(np.sort(-proj), -(1.0 - 2.0 * a), side="right")
    counts = np.where(a >= 1.0, len(u), counts)
    return ScaleCurve(a, counts / len(u))
