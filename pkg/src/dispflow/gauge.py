"""Gauge-transformed energy and the twin-run difference functional.

The gauge section at level k is

    V_k = nabla^k u_x + (M / 4a) Phi(x) J nabla^{k-1} u_x,
    Phi(x) = int_{x_left}^x |u_x|^2 dy,

and the energy is N(u)^2 = int |V_k|^2 + sum_{l<k} int |nabla^l u_x|^2.
The commutator of Phi J with the leading dispersive term produces
-(M/2) int |u_x|^2 |nabla^{k-1} u_x|^2-type dissipation that absorbs the
derivative loss of the plain H^k energy; that is what :func:`growth_fit`
lets one observe.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .curve import (K_MAX, EnergyLadder, TangentField, _covariant_ladder,
                    _full_wavenumbers, _quad, diff)
from .errors import ParameterError


@dataclass(frozen=True)
class GaugeParams:
    """Gauge strength M and top derivative level k.

    ``M = 0`` switches the gauge off and is accepted for comparisons.
    """
    M: float = 10.0
    k: int = 4

    def __post_init__(self):
        if not (self.M >= 0 and math.isfinite(self.M)):
            raise ParameterError("GaugeParams.M must be a finite nonnegative number")
        if not 4 <= self.k <= K_MAX:
            raise ParameterError(f"GaugeParams.k must satisfy 4 <= k <= {K_MAX}")

    @classmethod
    def default_for(cls, p, k=4):
        return cls(M=10.0 * abs(p.a), k=k)


@dataclass
class GaugeReport:
    phi_profile: np.ndarray
    v_k: TangentField
    energy_sq: float
    ladder: EnergyLadder
    defect: float = 0.0
    growth_fit: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.energy_sq) and self.energy_sq >= 0):
            raise ParameterError("GaugeReport.energy_sq must be finite and nonnegative")

    @property
    def energy(self):
        return math.sqrt(self.energy_sq)


@lru_cache(maxsize=32)
def _primitive_symbol(n, length):
    k = _full_wavenumbers(n, length)
    inv = np.zeros_like(k, dtype=complex)
    nz = k != 0
    inv[nz] = 1.0 / (1j * k[nz])
    inv[n // 2] = 0.0
    inv.flags.writeable = False
    return inv


def spectral_primitive(f, grid):
    """Antiderivative of a periodic density, anchored at the left endpoint.

    Returns F with F(x_0) = 0 and F' = f; the mean of f contributes the
    linear ramp mean * (x - x_0), so F(x_0 + L) equals the full integral.
    """
    f = np.asarray(f)
    n, length = grid.num_points, grid.domain_length
    fh = np.fft.fft(f)
    mean = fh[0] / n
    per = np.fft.ifft(fh * _primitive_symbol(n, length))
    if not np.iscomplexobj(f):
        per = per.real
    per = per - per[0]
    return mean * (grid.x - grid.x[0]) + per


def phi_primitive(u, grid=None):
    """Phi(x) = int_{x_left}^x |u_x|^2 dy on the grid.

    ``u`` is a DiscreteCurve, or an (N, 3) array together with ``grid``.
    """
    if grid is None:
        grid, pts = u.grid, u.points
    else:
        pts = np.asarray(u)
    ux = _covariant_ladder(pts, grid, 0)[0]
    return np.real(spectral_primitive(np.einsum("ij,ij->i", ux, ux), grid))


def _gauge_coeff(gp, p):
    if p.a == 0:
        raise ParameterError("gauge transform needs a != 0 (coefficient M/4a)")
    return gp.M / (4.0 * p.a)


def _section(pts, grid, gp, p, ladder=None, phi=None):
    coeff = _gauge_coeff(gp, p)
    if ladder is None:
        ladder = _covariant_ladder(pts, grid, gp.k)
    if phi is None:
        phi = phi_primitive(pts, grid)
    v = ladder[gp.k] + (coeff * phi)[:, None] * np.cross(pts, ladder[gp.k - 1])
    return v, ladder, phi


def gauge_section(u, gp, p):
    """V_k = nabla^k u_x + (M/4a) Phi J nabla^{k-1} u_x along u."""
    v, _, _ = _section(u.points, u.grid, gp, p)
    return TangentField(u, v)


def gauge_energy(u, gp, p, defect=None):
    """GaugeReport with N(u)^2, the level energies 0..k and Phi."""
    grid = u.grid
    v, ladder, phi = _section(u.points, grid, gp, p)
    levels = np.array([_quad(np.einsum("ij,ij->i", w, w), grid) for w in ladder])
    energy_sq = _quad(np.einsum("ij,ij->i", v, v), grid) + float(np.sum(levels[: gp.k]))
    d = 0.0
    if defect is not None:
        d = math.sqrt(_quad(np.einsum("ij,ij->i", defect, defect), grid))
    return GaugeReport(phi, TangentField(u, v), energy_sq,
                       EnergyLadder(levels), defect=d)


def growth_fit(t, values):
    """Least-squares slope of log(values) against t.

    ``values`` are energies N(t) (not squared); C4 in N(t) <= N(0) e^{C4 t}.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.size < 3:
        raise ParameterError("growth_fit needs at least 3 samples of matching length")
    if np.any(~(y > 0)):
        raise ParameterError("growth_fit needs strictly positive values")
    slope, _ = np.polyfit(t, np.log(y), 1)
    return float(slope)


def trajectory_reports(traj, gp):
    """gauge_energy for every snapshot of a trajectory."""
    return [gauge_energy(s, gp, traj.params, defect=r)
            for s, r in zip(traj.snapshots, traj.defect_fields)]


def energy_growth(traj, gp):
    """(C4 gauged, C ungauged): fitted rates of N and of sqrt(sum_{l<=k} ladder)."""
    reps = trajectory_reports(traj, gp)
    t = traj.times
    gauged = growth_fit(t, [r.energy for r in reps])
    plain = growth_fit(t, [math.sqrt(r.ladder.total()) for r in reps])
    return gauged, plain


def twin_difference(traj_a, traj_b, M=None):
    """D(t)^2 = 1/2 int |Z|^2 + |Z_x|^2 + |Z~|^2 per snapshot.

    Z = U - V and Z~ = U~ - V~ with U~ = nabla u_x + (M/4a) Phi J u_x, where
    Phi is the primitive of phi = sum_{l<=2} |nabla^l u_x|^2 + |nabla^l v_x|^2
    (the same weight for both members of the pair). ``M`` defaults to
    10 |a| of trajectory A.
    """
    sa, sb = traj_a.snapshots, traj_b.snapshots
    if len(sa) != len(sb):
        raise ParameterError("twin_difference: trajectories have different snapshot counts")
    grid = sa[0].grid
    if sb[0].grid != grid:
        raise ParameterError("twin_difference: mismatched grids")
    a = traj_a.params.a
    if M is None:
        M = 10.0 * abs(a)
    if a == 0:
        raise ParameterError("twin_difference needs a != 0")
    coeff = M / (4.0 * a)
    out = []
    for ua, ub in zip(sa, sb):
        if not math.isclose(ua.time_stamp, ub.time_stamp, rel_tol=0, abs_tol=1e-12):
            raise ParameterError("twin_difference: snapshot times differ")
        out.append(_twin_d_sq(ua.points, ub.points, grid, coeff))
    return np.array(out)


def _twin_d_sq(U, V, grid, coeff):
    la = _covariant_ladder(U, grid, 2)
    lb = _covariant_ladder(V, grid, 2)
    phi = sum(np.einsum("ij,ij->i", w, w) for w in la + lb)
    Phi = np.real(spectral_primitive(phi, grid))
    tu = la[1] + (coeff * Phi)[:, None] * np.cross(U, la[0])
    tv = lb[1] + (coeff * Phi)[:, None] * np.cross(V, lb[0])
    z = U - V
    zx = diff(z, grid, 1, check=False)
    zt = tu - tv
    dens = (np.einsum("ij,ij->i", z, z) + np.einsum("ij,ij->i", zx, zx)
            + np.einsum("ij,ij->i", zt, zt))
    return 0.5 * _quad(dens, grid)


def write_energy_csv(path, traj, gp, d_sq=None):
    """Columns t, N_sq, ladder_0..ladder_k, defect[, D_sq]."""
    reps = trajectory_reports(traj, gp)
    header = ["t", "N_sq"] + [f"ladder_{l}" for l in range(gp.k + 1)] + ["defect"]
    if d_sq is not None:
        header.append("D_sq")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, (s, r) in enumerate(zip(traj.snapshots, reps)):
            row = [repr(float(s.time_stamp)), repr(float(r.energy_sq))]
            row += [repr(float(x)) for x in r.ladder.levels] + [repr(float(r.defect))]
            if d_sq is not None:
                row.append(repr(float(d_sq[i])))
            w.writerow(row)
    return reps
