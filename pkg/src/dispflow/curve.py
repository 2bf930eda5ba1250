"""Discrete curves into S^2, sections along them, and their derivatives.

The curve is sampled on a uniform periodic grid ``x_j = j L / N``. Spatial
derivatives are either Fourier-spectral or periodic central differences of
even order. Covariant derivatives along the curve use the embedded formula
``nabla_x V = P(u) d/dx V``.

Snapshot file format (``*.curve``)::

    <one line of UTF-8 JSON header>\\n
    <N*3 little-endian float64 values, row-major (point, component)>

The header holds ``format``, ``num_points``, ``domain_length``,
``deriv_scheme``, ``fd_order``, ``time_stamp`` and ``params_hash``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConstraintViolation, NonFiniteStateError, ParameterError
from .manifold import DEFAULT_SPHERE, Sphere

K_MAX = 6
SNAPSHOT_FORMAT = "dispflow-curve/1"


class DecayWarning(UserWarning):
    """Energy density near the periodic boundary is not negligible."""


@dataclass(frozen=True)
class GridSpec:
    num_points: int
    domain_length: float
    deriv_scheme: str = "spectral"
    fd_order: int = 8

    def __post_init__(self):
        n = self.num_points
        if n < 16 or n & (n - 1):
            raise ParameterError(f"num_points must be a power of two >= 16, got {n}")
        if not self.domain_length > 0:
            raise ParameterError(f"domain_length must be positive, got {self.domain_length}")
        if self.deriv_scheme not in ("spectral", "fd"):
            raise ParameterError(f"unknown deriv_scheme {self.deriv_scheme!r}")
        if self.deriv_scheme == "fd" and (self.fd_order < 2 or self.fd_order % 2):
            raise ParameterError(f"fd_order must be even and >= 2, got {self.fd_order}")

    @property
    def dx(self):
        return self.domain_length / self.num_points

    @property
    def x(self):
        return np.arange(self.num_points) * self.dx

    @property
    def midpoint(self):
        return 0.5 * self.domain_length

    @property
    def max_wavenumber(self):
        return np.pi / self.dx

    def wavenumbers(self):
        """Angular wavenumbers in numpy's full-FFT ordering."""
        return _full_wavenumbers(self.num_points, self.domain_length)

    def as_dict(self):
        return {
            "num_points": self.num_points,
            "domain_length": self.domain_length,
            "deriv_scheme": self.deriv_scheme,
            "fd_order": self.fd_order,
        }


@lru_cache(maxsize=64)
def _full_wavenumbers(n, length):
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    k.flags.writeable = False
    return k


@lru_cache(maxsize=64)
def _rfft_wavenumbers(n, length):
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=length / n)
    k.flags.writeable = False
    return k


@lru_cache(maxsize=32)
def _spectral_multiplier(n, length, order):
    k = _rfft_wavenumbers(n, length)
    mult = (1j * k) ** order
    if order % 2:
        mult[-1] = 0.0  # Nyquist mode has no odd derivative on a real grid
    mult.flags.writeable = False
    return mult


@lru_cache(maxsize=16)
def central_weights(order):
    """Weights of the order-``order`` central first-derivative stencil.

    Offsets run from ``-order/2`` to ``order/2``; the weights solve the
    Taylor moment conditions.
    """
    m = order // 2
    offsets = np.arange(-m, m + 1, dtype=float)
    vander = np.vander(offsets, increasing=True).T
    rhs = np.zeros(2 * m + 1)
    rhs[1] = 1.0
    w = np.linalg.solve(vander, rhs)
    w[m] = 0.0
    return w


def _check_finite(f, what="field", level=None):
    if not np.all(np.isfinite(f)):
        raise NonFiniteStateError(f"non-finite state in {what}", level=level)


def diff(f, grid, order=1, check=True):
    """``order``-th derivative of a real grid array along axis 0."""
    f = np.asarray(f, dtype=float)
    if check:
        _check_finite(f, "derivative input")
    if order == 0:
        return f.copy()
    if grid.deriv_scheme == "spectral":
        fh = np.fft.rfft(f, axis=0)
        mult = _spectral_multiplier(grid.num_points, grid.domain_length, order)
        if f.ndim > 1:
            mult = mult.reshape((-1,) + (1,) * (f.ndim - 1))
        return np.fft.irfft(fh * mult, n=grid.num_points, axis=0)
    w = central_weights(grid.fd_order)
    m = grid.fd_order // 2
    out = f
    for _ in range(order):
        acc = np.zeros_like(out)
        for j, wj in enumerate(w):
            if wj != 0.0:
                acc += wj * np.roll(out, -(j - m), axis=0)
        out = acc / grid.dx
    return out


@dataclass
class DiscreteCurve:
    grid: GridSpec
    points: np.ndarray
    time_stamp: float = 0.0
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=float)
        if self.points.shape != (self.grid.num_points, 3):
            raise ParameterError(
                f"points must have shape ({self.grid.num_points}, 3), got {self.points.shape}"
            )
        _check_finite(self.points, "curve points")
        if self.check:
            DEFAULT_SPHERE.check_on_manifold(self.points, factor=1.0)

    def with_points(self, points, time_stamp=None):
        return DiscreteCurve(
            self.grid, points, self.time_stamp if time_stamp is None else time_stamp,
            check=False,
        )

    def copy(self):
        return DiscreteCurve(self.grid, self.points.copy(), self.time_stamp, check=False)


@dataclass
class TangentField:
    base: DiscreteCurve
    vecs: np.ndarray

    def __post_init__(self):
        self.vecs = np.asarray(self.vecs, dtype=float)
        if self.vecs.shape != self.base.points.shape:
            raise ParameterError("tangent field shape does not match its base curve")

    def tangency_defect(self):
        return float(np.max(np.abs(np.einsum("ij,ij->i", self.vecs, self.base.points))))

    def check_tangent(self, sphere=DEFAULT_SPHERE, factor=10.0):
        sphere.check_tangent(self.base.points, self.vecs, factor=factor)
        return self


@dataclass
class EnergyLadder:
    """levels[l] = integral of g(nabla^l u_x, nabla^l u_x), l = 0..k."""

    levels: np.ndarray

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if np.any(~np.isfinite(self.levels)) or np.any(self.levels < 0):
            raise NonFiniteStateError("energy ladder entries must be finite and nonnegative")

    @property
    def k(self):
        return len(self.levels) - 1

    def total(self):
        return float(np.sum(self.levels))


# -- array kernels (no validation; used in time stepping loops) ---------------

def _project(u, v):
    return v - np.einsum("ij,ij->i", v, u)[:, None] * u


def _ux(u, grid):
    return _project(u, diff(u, grid, 1, check=False))


def _cov(u, v, grid):
    return _project(u, diff(v, grid, 1, check=False))


def _covariant_ladder(u, grid, lmax):
    """[nabla^0 u_x, ..., nabla^lmax u_x] as a list of (N, 3) arrays."""
    out = [_ux(u, grid)]
    for _ in range(lmax):
        out.append(_cov(u, out[-1], grid))
    return out


def _quad(density, grid):
    return grid.dx * float(np.sum(density))


# -- public operations ---------------------------------------------------------

def derivative(f, grid=None, order=1):
    """Spatial derivative of a curve, tangent field or scalar grid function.

    Returns the same kind of object: raw ambient derivatives for a curve or a
    field (no projection), an array for an array input.
    """
    if isinstance(f, DiscreteCurve):
        return diff(f.points, f.grid, order)
    if isinstance(f, TangentField):
        return diff(f.vecs, f.base.grid, order)
    if grid is None:
        raise ParameterError("grid is required for a bare array")
    return diff(f, grid, order)


def tangent_of(u):
    """u_x = du(d/dx) as a tangent field along ``u``."""
    return TangentField(u, _ux(u.points, u.grid))


def covariant_derivative(u, V, sphere=DEFAULT_SPHERE):
    """nabla_x V = P(u) V_x (equivalently V_x + <V, u_x> u on the sphere)."""
    vecs = V.vecs if isinstance(V, TangentField) else np.asarray(V, dtype=float)
    _check_finite(vecs, "tangent field")
    sphere.check_tangent(u.points, vecs, factor=10.0)
    return TangentField(u, _cov(u.points, vecs, u.grid))


def iterated_covariant(u, l, k_max=K_MAX):
    """nabla_x^l u_x by l-fold covariant differentiation of u_x."""
    if not 0 <= l <= k_max:
        raise ParameterError(f"derivative level l={l} outside [0, {k_max}]")
    ladder = _covariant_ladder(u.points, u.grid, l)
    for level, vec in enumerate(ladder):
        _check_finite(vec, "covariant derivative", level=level)
    return TangentField(u, ladder[-1])


def sobolev_energies(u, k, k_max=K_MAX):
    """Energy ladder of u_x up to level k (trapezoid rule on the periodic grid)."""
    if not 0 <= k <= k_max:
        raise ParameterError(f"k={k} outside [0, {k_max}]")
    ladder = _covariant_ladder(u.points, u.grid, k)
    levels = []
    for level, vec in enumerate(ladder):
        _check_finite(vec, "covariant derivative", level=level)
        levels.append(_quad(np.einsum("ij,ij->i", vec, vec), u.grid))
    return EnergyLadder(np.array(levels))


def boundary_window_fraction(u, level=1, window=0.05):
    """Fraction of the level-``level`` energy density within ``window * L`` of
    the periodic seam. Zero when the total vanishes."""
    vec = _covariant_ladder(u.points, u.grid, level)[-1]
    dens = np.einsum("ij,ij->i", vec, vec)
    total = float(np.sum(dens))
    if total == 0.0:
        return 0.0
    x = u.grid.x
    width = window * u.grid.domain_length
    mask = (x < width) | (x > u.grid.domain_length - width)
    return float(np.sum(dens[mask]) / total)


def check_decay(u, threshold=1e-10, level=1, window=0.05):
    """Warn when the curve is not effectively localised away from the seam."""
    frac = boundary_window_fraction(u, level=level, window=window)
    if frac >= threshold:
        warnings.warn(
            f"boundary-window energy fraction {frac:.2e} exceeds {threshold:.0e}; "
            "the periodic surrogate may not represent decaying data",
            DecayWarning, stacklevel=2,
        )
    return frac


# -- snapshot files ------------------------------------------------------------

def write_curve(path, u, params_hash=None):
    header = {
        "format": SNAPSHOT_FORMAT,
        **u.grid.as_dict(),
        "time_stamp": float(u.time_stamp),
        "params_hash": params_hash,
        "dtype": "<f8",
        "shape": [u.grid.num_points, 3],
    }
    payload = np.ascontiguousarray(u.points, dtype="<f8").tobytes()
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(payload)
    return path


class SnapshotFormatError(ParameterError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def read_curve(path, check=True):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise SnapshotFormatError("missing header terminator", len(raw))
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise SnapshotFormatError("header is not UTF-8", exc.start) from exc
    except json.JSONDecodeError as exc:
        raise SnapshotFormatError(f"bad JSON header: {exc.msg}", exc.pos) from exc
    if header.get("format") != SNAPSHOT_FORMAT:
        raise SnapshotFormatError(f"unknown format {header.get('format')!r}", 0)
    try:
        grid = GridSpec(int(header["num_points"]), float(header["domain_length"]),
                        header.get("deriv_scheme", "spectral"), int(header.get("fd_order", 8)))
    except (KeyError, TypeError, ParameterError) as exc:
        raise SnapshotFormatError(f"invalid grid in header: {exc}", 0) from exc
    body = raw[nl + 1:]
    expected = grid.num_points * 3 * 8
    if len(body) != expected:
        raise SnapshotFormatError(
            f"payload has {len(body)} bytes, expected {expected}", nl + 1 + min(len(body), expected)
        )
    pts = np.frombuffer(body, dtype="<f8").reshape(grid.num_points, 3).astype(float)
    try:
        return DiscreteCurve(grid, pts, float(header.get("time_stamp", 0.0)), check=check)
    except ConstraintViolation as exc:
        raise SnapshotFormatError(f"points off the sphere: {exc}", nl + 1) from exc
