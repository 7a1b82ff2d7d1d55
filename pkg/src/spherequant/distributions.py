"""Reference and target laws on S^2, plus closed-form MK maps for rotationally invariant laws."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .exceptions import DomainError
from .geometry import E3, from_spherical, normalize, rodrigues_rotation, unit_vector


@dataclass(frozen=True)
class SphericalSample:
    """Ordered collection of unit vectors, stored as an ``(n, 3)`` array."""

    points: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(pts):
            unit_vector(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)

    def rotated(self, rotation) -> "SphericalSample":
        return SphericalSample(normalize(self.points @ np.asarray(rotation).T), self.seed)

    def to_csv(self, path=None, fmt: str = "xyz") -> str:
        buf = io.StringIO()
        if fmt == "xyz":
            buf.write("x,y,z\n")
            for p in self.points:
                buf.write(f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g}\n")
        elif fmt == "lonlat":
            buf.write("lon_deg,lat_deg\n")
            lon = np.degrees(np.arctan2(self.points[:, 1], self.points[:, 0]))
            lat = np.degrees(np.arcsin(np.clip(self.points[:, 2], -1, 1)))
            for a, b in zip(lon, lat):
                buf.write(f"{a:.17g},{b:.17g}\n")
        else:
            raise DomainError(f"unknown sample format {fmt!r}")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def load_sample(path, fmt: str = "auto") -> SphericalSample:
    """Read a sample CSV in ``x,y,z`` or ``lon_deg,lat_deg`` layout.

    ``auto`` looks at the header; headerless files are classified by column
    count. Cartesian rows are renormalized when their norm lies in
    [0.99, 1.01] and rejected otherwise.
    """
    text = Path(path).read_text()
    return parse_sample(text, fmt)


def parse_sample(text: str, fmt: str = "auto") -> SphericalSample:
    if fmt not in ("auto", "xyz", "lonlat"):
        raise DomainError(f"unknown sample format {fmt!r}")
    rows = [(i, r) for i, r in enumerate(csv.reader(io.StringIO(text)), start=1) if r and any(c.strip() for c in r)]
    if rows:
        first = [c.strip().lower() for c in rows[0][1]]
        if first == ["x", "y", "z"]:
            fmt, rows = ("xyz" if fmt == "auto" else fmt), rows[1:]
        elif first == ["lon_deg", "lat_deg"]:
            fmt, rows = ("lonlat" if fmt == "auto" else fmt), rows[1:]
    if fmt == "auto":
        fmt = "lonlat" if rows and len(rows[0][1]) == 2 else "xyz"
    ncol = 3 if fmt == "xyz" else 2
    pts = []
    for lineno, row in rows:
        try:
            if len(row) != ncol:
                raise ValueError
            vals = [float(c) for c in row]
        except ValueError:
            raise DomainError(f"line {lineno}: expected {ncol} numeric columns, got {row}") from None
        if fmt == "xyz":
            v = np.array(vals)
            nv = float(np.linalg.norm(v))
            if not 0.99 <= nv <= 1.01:
                raise DomainError(f"line {lineno}: vector norm {nv:.6g} outside [0.99, 1.01]")
            pts.append(v if abs(nv - 1.0) <= 1e-12 else v / nv)
        else:
            lon, lat = vals
            if not (-180.0 <= lon <= 360.0 and -90.0 <= lat <= 90.0):
                raise DomainError(f"line {lineno}: longitude/latitude out of range: {row}")
            lon = (lon + 180.0) % 360.0 - 180.0
            pts.append(from_spherical(np.pi / 2 - np.radians(lat), np.radians(lon)))
    return SphericalSample(np.array(pts).reshape(-1, 3))


def sample_uniform(n: int, seed: int | np.random.Generator) -> SphericalSample:
    """``n`` uniform points from normalized standard Gaussian triples."""
    rng = np.random.default_rng(seed)
    if n == 0:
        return SphericalSample(np.zeros((0, 3)), seed if isinstance(seed, int) else None)
    g = rng.standard_normal((n, 3))
    return SphericalSample(normalize(g), seed if isinstance(seed, int) else None)


def vmf_latitude_quantile(p, kappa: float):
    """Inverse CDF of <X, mu> for a vMF law on S^2 (density prop. to exp(kappa t) on [-1, 1])."""
    p = np.asarray(p, dtype=float)
    if kappa == 0:
        return 2.0 * p - 1.0
    e = math.exp(-2.0 * kappa)
    return np.clip(1.0 + np.log(p + (1.0 - p) * e) / kappa, -1.0, 1.0)


def _latitude_to_points(t, lon, mu):
    r = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    local = np.stack([r * np.cos(lon), r * np.sin(lon), t], axis=-1)
    rot = rodrigues_rotation(E3, mu)
    return normalize(local @ rot.T)


def sample_vmf(mu, kappa: float, n: int, seed: int | np.random.Generator) -> SphericalSample:
    """von Mises-Fisher draws via the closed-form inverse CDF of the latitude."""
    if kappa < 0:
        raise DomainError(f"kappa must be >= 0, got {kappa}")
    mu = unit_vector(mu, atol=1e-9)
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    lon = 2.0 * np.pi * rng.random(n)
    t = vmf_latitude_quantile(u, kappa)
    return SphericalSample(_latitude_to_points(t, lon, mu), seed if isinstance(seed, int) else None)


@dataclass(frozen=True)
class VonMisesFisher:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "mu", unit_vector(self.mu, atol=1e-9))
        if self.kappa < 0:
            raise DomainError(f"kappa must be >= 0, got {self.kappa}")

    def sample(self, n: int, seed) -> SphericalSample:
        return sample_vmf(self.mu, self.kappa, n, seed)


def sample_mixture(
    components: Sequence[tuple[float, VonMisesFisher]], n: int, seed: int
) -> SphericalSample:
    """Mixture of vMF laws.

    The latitude/longitude uniforms come from the same stream as
    :func:`sample_vmf`; component labels use a separate stream, so a
    single-component mixture reproduces :func:`sample_vmf` exactly.
    """
    weights = np.array([w for w, _ in components], dtype=float)
    if len(weights) == 0 or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise DomainError(f"mixture weights must be nonnegative and sum to 1, got {weights.tolist()}")
    rng = np.random.default_rng(seed)
    label_rng = np.random.default_rng([seed, 1])
    u = rng.random(n)
    lon = 2.0 * np.pi * rng.random(n)
    labels = label_rng.choice(len(weights), size=n, p=weights / weights.sum()) if len(weights) > 1 else np.zeros(n, int)
    pts = np.empty((n, 3))
    for k, (_, law) in enumerate(components):
        sel = labels == k
        if np.any(sel):
            t = vmf_latitude_quantile(u[sel], law.kappa)
            pts[sel] = _latitude_to_points(t, lon[sel], law.mu)
    return SphericalSample(pts, seed)


# ---------------------------------------------------------------------------
# rotationally invariant laws


@dataclass(frozen=True)
class RotInvariantLaw:
    """Law with density proportional to ``f(<z, axis>)``.

    With ``kappa`` set and no ``angular`` function the law is vMF and the
    latitude CDF has a closed form; otherwise the CDF is integrated numerically.
    """

    axis: np.ndarray
    kappa: float | None = None
    angular: Callable[[float], float] | None = None
    _norm: float = field(init=False, repr=False, default=1.0)

    def __post_init__(self):
        object.__setattr__(self, "axis", unit_vector(self.axis, atol=1e-9))
        if self.angular is None and self.kappa is None:
            raise DomainError("need either kappa (vMF) or an angular function")
        if self.angular is None and self.kappa < 0:
            raise DomainError(f"kappa must be >= 0, got {self.kappa}")
        if self.angular is not None:
            total, _ = integrate.quad(self.angular, -1.0, 1.0, epsabs=1e-12, epsrel=1e-10)
            if not total > 0:
                raise DomainError("angular function must be positive on [-1, 1]")
            object.__setattr__(self, "_norm", total)

    @classmethod
    def vmf(cls, axis, kappa: float) -> "RotInvariantLaw":
        return cls(axis=axis, kappa=kappa)

    @property
    def is_vmf(self) -> bool:
        return self.angular is None


def _vmf_tail_probs(kappa: float, one_minus, one_plus):
    """(F, 1 - F) of the vMF latitude at r, given 1 - r and 1 + r, without cancellation."""
    if kappa == 0:
        return 0.5 * one_plus, 0.5 * one_minus
    denom = -math.expm1(-2.0 * kappa)
    p = np.exp(-kappa * one_minus) * -np.expm1(-kappa * one_plus) / denom
    q = -np.expm1(-kappa * one_minus) / denom
    return p, q


def _vmf_latitude_from_probs(kappa: float, p, q):
    """Inverse of :func:`_vmf_tail_probs`: returns (1 - t, 1 + t)."""
    if kappa == 0:
        return 2.0 * q, 2.0 * p
    e = math.exp(-2.0 * kappa)
    one_minus = -np.log1p(-q * (1.0 - e)) / kappa
    if 2.0 * kappa < 700.0:
        one_plus = np.log1p(p * math.expm1(2.0 * kappa)) / kappa
    else:
        one_plus = 2.0 - one_minus
    return np.clip(one_minus, 0.0, 2.0), np.clip(one_plus, 0.0, 2.0)


def _general_tail_probs(law: RotInvariantLaw, r):
    def lower(s):
        return integrate.quad(law.angular, -1.0, s, epsabs=1e-13, epsrel=1e-10)[0] / law._norm

    def upper(s):
        return integrate.quad(law.angular, s, 1.0, epsabs=1e-13, epsrel=1e-10)[0] / law._norm

    r = np.asarray(r, dtype=float)
    return np.vectorize(lower)(r), np.vectorize(upper)(r)


def angular_cdf(law: RotInvariantLaw, r):
    """CDF F_f of the latitude ``<Z, axis>``."""
    r = np.clip(np.asarray(r, dtype=float), -1.0, 1.0)
    if law.is_vmf:
        return _vmf_tail_probs(law.kappa, 1.0 - r, 1.0 + r)[0]
    return _general_tail_probs(law, r)[0]


def angular_quantile(law: RotInvariantLaw, p):
    """Inverse of :func:`angular_cdf`."""
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    if law.is_vmf:
        with np.errstate(divide="ignore"):
            om, op = _vmf_latitude_from_probs(law.kappa, p, 1.0 - p)
        # 1 - p loses digits when p is small; read t off the accurate side
        return np.where(p <= 0.5, op - 1.0, 1.0 - om)
    return _general_quantile(law, p)


def _general_quantile(law: RotInvariantLaw, p):
    def solve(q):
        if q <= 0:
            return -1.0
        if q >= 1:
            return 1.0
        return optimize.brentq(
            lambda s: float(_general_tail_probs(law, s)[0]) - q, -1.0, 1.0, xtol=1e-13, rtol=1e-14
        )

    return np.vectorize(solve, otypes=[float])(p)


def angular_cdf_star(law: RotInvariantLaw, r):
    """``2 F_f(r) - 1``: the latitude of F(z) as a function of the latitude of z."""
    return 2.0 * angular_cdf(law, r) - 1.0


def angular_cdf_star_inv(law: RotInvariantLaw, s):
    return angular_quantile(law, 0.5 * (np.asarray(s, dtype=float) + 1.0))


def _latitude_split(points, axis):
    """Sign part and (1 - lat, 1 + lat) of ``points`` relative to ``axis``.

    The smaller of 1 -/+ lat is recovered from the perpendicular norm so that
    points close to the poles keep full relative precision.
    """
    lat = points @ axis
    perp = points - lat[..., None] * axis
    n2 = np.sum(perp * perp, axis=-1)
    nperp = np.sqrt(n2)
    one_minus = np.where(lat > 0, n2 / (1.0 + np.abs(lat)), 1.0 - lat)
    one_plus = np.where(lat < 0, n2 / (1.0 + np.abs(lat)), 1.0 + lat)
    pole = nperp < 1e-300
    sign = perp / np.where(pole, 1.0, nperp)[..., None]
    return sign, one_minus, one_plus, pole, lat


def _assemble(axis, sign, one_minus, one_plus, pole, lat):
    new_lat = 0.5 * (one_plus - one_minus)
    perp = np.sqrt(np.clip(one_minus * one_plus, 0.0, None))
    out = new_lat[..., None] * axis + perp[..., None] * sign
    out = np.where(pole[..., None], np.where(lat >= 0, 1.0, -1.0)[..., None] * axis, out)
    return normalize(out)


def closed_form_F(law: RotInvariantLaw, z) -> np.ndarray:
    """Exact MK distribution function of a rotationally invariant law."""
    z = np.asarray(z, dtype=float)
    sign, om, op, pole, lat = _latitude_split(z, law.axis)
    if law.is_vmf:
        p, q = _vmf_tail_probs(law.kappa, om, op)
    else:
        p, q = _general_tail_probs(law, lat)
    return _assemble(law.axis, sign, 2.0 * q, 2.0 * p, pole, lat)


def closed_form_Q(law: RotInvariantLaw, x) -> np.ndarray:
    """Exact MK quantile function (inverse of :func:`closed_form_F`)."""
    x = np.asarray(x, dtype=float)
    sign, om, op, pole, lat = _latitude_split(x, law.axis)
    p, q = 0.5 * op, 0.5 * om
    if law.is_vmf:
        om_new, op_new = _vmf_latitude_from_probs(law.kappa, p, q)
    else:
        t = _general_quantile(law, p)
        om_new, op_new = 1.0 - t, 1.0 + t
    return _assemble(law.axis, sign, om_new, op_new, pole, lat)
