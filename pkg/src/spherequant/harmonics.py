"""Real spherical harmonics and exact transforms on a Gauss-Legendre grid.

Basis convention (orthonormal for the surface measure sigma, total mass 4 pi)::

    Y_l^0  = N_l^0 P_l^0(cos t)
    Y_l^m  = sqrt(2) N_l^m P_l^m(cos t) cos(m p)      m > 0
    Y_l^-m = sqrt(2) N_l^m P_l^m(cos t) sin(m p)      m > 0

with N_l^m = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) and P_l^m carrying the
Condon-Shortley phase. In terms of the complex harmonics Y_l^m e^{i m p},
Y_l^m(real) = sqrt(2) Re Y_l^m(complex) and Y_l^-m(real) = sqrt(2) Im Y_l^m(complex)
for m > 0, so a real coefficient table is the complex table with conjugate
pairs folded together.

Coefficients are stored flat at index ``l*l + l + m``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .exceptions import DomainError

MAX_BAND_LIMIT = 128


def n_coeffs(band_limit: int) -> int:
    return (band_limit + 1) ** 2


def index(l: int, m: int) -> int:
    return l * l + l + m


@lru_cache(maxsize=None)
def degree_order(band_limit: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(l, m)`` aligned with the flat coefficient layout."""
    ls = np.concatenate([np.full(2 * l + 1, l) for l in range(band_limit + 1)])
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(band_limit + 1)])
    ls.setflags(write=False)
    ms.setflags(write=False)
    return ls, ms


def _check_band_limit(band_limit: int) -> None:
    if not 0 <= band_limit <= MAX_BAND_LIMIT:
        raise DomainError(f"band limit must lie in [0, {MAX_BAND_LIMIT}], got {band_limit}")


@dataclass(frozen=True)
class HarmonicCoeffs:
    """Band-limited real spherical-harmonic coefficients."""

    band_limit: int
    values: np.ndarray

    def __post_init__(self):
        _check_band_limit(self.band_limit)
        v = np.array(self.values, dtype=float)
        if v.shape != (n_coeffs(self.band_limit),):
            raise DomainError(f"expected {n_coeffs(self.band_limit)} coefficients, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("coefficients must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, band_limit: int) -> "HarmonicCoeffs":
        return cls(band_limit, np.zeros(n_coeffs(band_limit)))

    def __getitem__(self, lm: tuple[int, int]) -> float:
        l, m = lm
        if not (0 <= l <= self.band_limit and -l <= m <= l):
            raise DomainError(f"index (l={l}, m={m}) outside band limit {self.band_limit}")
        return float(self.values[index(l, m)])

    def to_csv(self, path=None) -> str:
        """Serialize as ``l,m,value`` rows; floats are written with 17 significant digits."""
        ls, ms = degree_order(self.band_limit)
        buf = io.StringIO()
        buf.write("l,m,value\n")
        for l, m, v in zip(ls, ms, self.values):
            buf.write(f"{l},{m},{v:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "HarmonicCoeffs":
        """Parse the output of :meth:`to_csv` from a path or a string."""
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            source = Path(source).read_text()
        rows = list(csv.reader(io.StringIO(source)))
        if not rows or [h.strip() for h in rows[0]] != ["l", "m", "value"]:
            raise DomainError("coefficient CSV must start with header 'l,m,value'")
        entries = {}
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            try:
                l, m, v = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError) as exc:
                raise DomainError(f"malformed coefficient row at line {lineno}: {row}") from exc
            entries[(l, m)] = v
        band_limit = max(l for l, _ in entries)
        values = np.zeros(n_coeffs(band_limit))
        for (l, m), v in entries.items():
            if abs(m) > l:
                raise DomainError(f"invalid order m={m} for degree l={l}")
            values[index(l, m)] = v
        if len(entries) != n_coeffs(band_limit):
            raise DomainError(f"expected {n_coeffs(band_limit)} rows, got {len(entries)}")
        return cls(band_limit, values)


def assoc_legendre(l: int, m: int, t: float) -> float:
    """Associated Legendre function P_l^m(t) with the Condon-Shortley phase.

    Uses the upward recurrence in degree starting from P_m^m. Negative orders
    follow P_l^{-m} = (-1)^m (l-m)!/(l+m)! P_l^m.
    """
    if l < 0 or abs(m) > l:
        raise DomainError(f"need 0 <= |m| <= l, got l={l}, m={m}")
    if not -1.0 <= t <= 1.0:
        raise DomainError(f"argument must lie in [-1, 1], got {t}")
    if m < 0:
        mm = -m
        return (-1) ** mm * math.factorial(l - mm) / math.factorial(l + mm) * assoc_legendre(l, mm, t)
    s = math.sqrt((1.0 - t) * (1.0 + t))
    pmm = 1.0
    for k in range(1, m + 1):
        pmm *= -(2 * k - 1) * s
    if l == m:
        return pmm
    p_prev, p = pmm, (2 * m + 1) * t * pmm
    for k in range(m + 2, l + 1):
        p_prev, p = p, ((2 * k - 1) * t * p - (k + m - 1) * p_prev) / (k - m)
    return p


def _recurrence_coeffs(band_limit: int):
    """Normalized three-term recurrence factors a_lm, b_lm (zero where unused)."""
    a = np.zeros((band_limit + 1, band_limit + 1))
    b = np.zeros((band_limit + 1, band_limit + 1))
    for m in range(band_limit + 1):
        for l in range(m + 2, band_limit + 1):
            a[l, m] = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b[l, m] = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
    return a, b


def solid_harmonics(band_limit: int, x, with_gradient: bool = False):
    """Evaluate every real harmonic up to ``band_limit`` at points ``x``.

    Each harmonic is treated as the degree-l homogeneous polynomial
    r^l Y_l^m(x/r); on the unit sphere this equals Y_l^m and its Cartesian
    gradient splits into the surface gradient plus the radial part l Y x.

    Returns ``values`` of shape ``(n, (L+1)^2)`` and, if requested, ``grads``
    of shape ``(n, (L+1)^2, 3)``.
    """
    _check_band_limit(band_limit)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = len(x)
    L = band_limit
    a, b = _recurrence_coeffs(L)
    X, Yc, Z = x[:, 0], x[:, 1], x[:, 2]
    r2 = X * X + Yc * Yc + Z * Z
    vals = np.zeros((n, n_coeffs(L)))
    grads = np.zeros((n, n_coeffs(L), 3)) if with_gradient else None
    e3 = np.array([0.0, 0.0, 1.0])

    # (x + i y)^m split into cos-like and sin-like parts, with gradients
    cm, sm = np.ones(n), np.zeros(n)
    dcm, dsm = np.zeros((n, 3)), np.zeros((n, 3))
    qmm = 1.0 / math.sqrt(4.0 * math.pi)
    sqrt2 = math.sqrt(2.0)
    for m in range(L + 1):
        if m > 0:
            qmm = -qmm * math.sqrt((2 * m + 1) / (2 * m))
            if with_gradient:
                dcm_new = np.stack([m * cm, -m * sm, np.zeros(n)], axis=1)
                dsm_new = np.stack([m * sm, m * cm, np.zeros(n)], axis=1)
            cm, sm = X * cm - Yc * sm, X * sm + Yc * cm
            if with_gradient:
                dcm, dsm = dcm_new, dsm_new
        q_prev2 = None
        q_prev = np.full(n, qmm)
        dq_prev2 = None
        dq_prev = np.zeros((n, 3))
        for l in range(m, L + 1):
            if l == m:
                q, dq = q_prev, dq_prev
            elif l == m + 1:
                f = math.sqrt(2 * m + 3)
                q = f * Z * q_prev
                dq = f * (np.outer(q_prev, e3) + Z[:, None] * dq_prev) if with_gradient else None
                q_prev2, q_prev = q_prev, q
                dq_prev2, dq_prev = dq_prev, dq
            else:
                q = a[l, m] * (Z * q_prev - b[l, m] * r2 * q_prev2)
                if with_gradient:
                    dq = a[l, m] * (
                        np.outer(q_prev, e3) + Z[:, None] * dq_prev
                        - b[l, m] * (2.0 * x * q_prev2[:, None] + r2[:, None] * dq_prev2)
                    )
                q_prev2, q_prev = q_prev, q
                dq_prev2, dq_prev = dq_prev, dq
            if m == 0:
                vals[:, index(l, 0)] = q
                if with_gradient:
                    grads[:, index(l, 0)] = dq
            else:
                vals[:, index(l, m)] = sqrt2 * q * cm
                vals[:, index(l, -m)] = sqrt2 * q * sm
                if with_gradient:
                    grads[:, index(l, m)] = sqrt2 * (dq * cm[:, None] + q[:, None] * dcm)
                    grads[:, index(l, -m)] = sqrt2 * (dq * sm[:, None] + q[:, None] * dsm)
    return (vals, grads) if with_gradient else vals


def eval_ylm(l: int, m: int, x, with_gradient: bool = False):
    """Single real harmonic Y_l^m at ``x`` (optionally with its Cartesian gradient)."""
    if l < 0 or abs(m) > l:
        raise DomainError(f"need 0 <= |m| <= l, got l={l}, m={m}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    out = solid_harmonics(l, x, with_gradient)
    k = index(l, m)
    if with_gradient:
        v, g = out[0][:, k], out[1][:, k]
        return (v[0], g[0]) if single else (v, g)
    v = out[:, k]
    return v[0] if single else v


def eval_series(coeffs: HarmonicCoeffs, x, with_gradient: bool = False):
    """Evaluate sum c_l^m Y_l^m at ``x`` and optionally its Cartesian gradient."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    c = coeffs.values
    if with_gradient:
        vals, grads = solid_harmonics(coeffs.band_limit, x, True)
        f = vals @ c
        g = np.einsum("nkd,k->nd", grads, c)
        return (f[0], g[0]) if single else (f, g)
    f = solid_harmonics(coeffs.band_limit, x) @ c
    return f[0] if single else f


# ---------------------------------------------------------------------------
# quadrature grid and transforms


@dataclass(frozen=True)
class GridSpec:
    """Node layout for band limit L: Gauss-Legendre colatitudes x equispaced longitudes."""

    band_limit: int
    theta: np.ndarray
    phi: np.ndarray
    gl_weights: np.ndarray
    points: np.ndarray
    mu_weights: np.ndarray
    legendre: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.theta), len(self.phi)


@lru_cache(maxsize=32)
def grid_spec(band_limit: int) -> GridSpec:
    _check_band_limit(band_limit)
    L = band_limit
    t, w = np.polynomial.legendre.leggauss(L + 1)
    order = np.argsort(-t)
    t, w = t[order], w[order]
    theta = np.arccos(t)
    nphi = 2 * L + 2
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    st = np.sin(theta)
    pts = np.stack(
        [np.cos(phi)[None, :] * st[:, None], np.sin(phi)[None, :] * st[:, None],
         np.broadcast_to(t[:, None], (L + 1, nphi))],
        axis=-1,
    )
    # Legendre factor of each real harmonic at the node colatitudes:
    # leg[j, l, m] = Y_l^m(theta_j, phi=0) for m >= 0
    meridian = np.stack([st, np.zeros_like(st), t], axis=1)
    vals = solid_harmonics(L, meridian)
    leg = np.zeros((L + 1, L + 1, L + 1))
    for l in range(L + 1):
        for m in range(l + 1):
            leg[:, l, m] = vals[:, index(l, m)]
    muw = np.broadcast_to((w / (2.0 * nphi))[:, None], (L + 1, nphi)).copy()
    for arr in (theta, phi, w, pts, muw, leg):
        arr.setflags(write=False)
    return GridSpec(L, theta, phi, w, pts, muw, leg)


@dataclass(frozen=True)
class QuadratureGrid:
    """Function values sampled on the nodes of :func:`grid_spec`."""

    band_limit: int
    values: np.ndarray

    def __post_init__(self):
        spec = grid_spec(self.band_limit)
        v = np.asarray(self.values, dtype=float)
        if v.shape != spec.shape:
            raise DomainError(f"grid values must have shape {spec.shape}, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def spec(self) -> GridSpec:
        return grid_spec(self.band_limit)

    @property
    def points(self) -> np.ndarray:
        return self.spec.points

    @property
    def theta(self) -> np.ndarray:
        return self.spec.theta

    @property
    def phi(self) -> np.ndarray:
        return self.spec.phi

    @property
    def weights(self) -> np.ndarray:
        return self.spec.gl_weights

    def mean(self) -> float:
        """Integral against the uniform probability measure."""
        return float(np.sum(self.spec.mu_weights * self.values))

    @classmethod
    def from_function(cls, band_limit: int, func) -> "QuadratureGrid":
        pts = grid_spec(band_limit).points
        return cls(band_limit, np.asarray(func(pts.reshape(-1, 3))).reshape(pts.shape[:2]))


@lru_cache(maxsize=32)
def _flat_layout(band_limit: int):
    ls, ms = degree_order(band_limit)
    cos_sel = ms >= 0
    sin_sel = ms < 0
    return (ls[cos_sel], ms[cos_sel], np.flatnonzero(cos_sel),
            ls[sin_sel], -ms[sin_sel], np.flatnonzero(sin_sel))


def analyze_values(band_limit: int, values: np.ndarray) -> np.ndarray:
    """Flat coefficient array of grid ``values`` (integrals against sigma)."""
    spec = grid_spec(band_limit)
    L = band_limit
    nphi = len(spec.phi)
    four = np.fft.rfft(values, axis=-1)[..., : L + 1] * (2.0 * np.pi / nphi)
    wa = spec.gl_weights[:, None] * four.real
    wb = -spec.gl_weights[:, None] * four.imag
    cos_part = np.einsum("jlm,jm->lm", spec.legendre, wa)
    sin_part = np.einsum("jlm,jm->lm", spec.legendre, wb)
    lc, mc, ic, lsn, msn, isn = _flat_layout(L)
    out = np.empty(n_coeffs(L))
    out[ic] = cos_part[lc, mc]
    out[isn] = sin_part[lsn, msn]
    return out


def synthesize_values(band_limit: int, coeffs: np.ndarray) -> np.ndarray:
    spec = grid_spec(band_limit)
    L = band_limit
    nphi = len(spec.phi)
    lc, mc, ic, lsn, msn, isn = _flat_layout(L)
    cos_tab = np.zeros((L + 1, L + 1))
    sin_tab = np.zeros((L + 1, L + 1))
    cos_tab[lc, mc] = coeffs[ic]
    sin_tab[lsn, msn] = coeffs[isn]
    a = np.einsum("jlm,lm->jm", spec.legendre, cos_tab)
    b = np.einsum("jlm,lm->jm", spec.legendre, sin_tab)
    spectrum = np.zeros((L + 1, nphi // 2 + 1), dtype=complex)
    spectrum[:, 0] = nphi * a[:, 0]
    spectrum[:, 1 : L + 1] = 0.5 * nphi * (a[:, 1:] - 1j * b[:, 1:])
    return np.fft.irfft(spectrum, n=nphi, axis=-1)


def analyze(grid: QuadratureGrid, band_limit: int | None = None) -> HarmonicCoeffs:
    """Coefficients c_l^m = integral of f Y_l^m d(sigma), exact for degree <= L."""
    if band_limit is not None and band_limit != grid.band_limit:
        raise DomainError(f"grid has band limit {grid.band_limit}, requested {band_limit}")
    return HarmonicCoeffs(grid.band_limit, analyze_values(grid.band_limit, grid.values))


def synthesize(coeffs: HarmonicCoeffs) -> QuadratureGrid:
    return QuadratureGrid(coeffs.band_limit, synthesize_values(coeffs.band_limit, coeffs.values))
