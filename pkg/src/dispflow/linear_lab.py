"""The constant-dispersion linear model problem and its gauge.

Model:  u_t = i a u_xxxx + i (beta u_x)_x + gamma u_x,  x on the periodic grid.

Gauge:  Lambda = I + Lambda~,  Lambda~ v = Phi(x) * K v,
        K = Fourier multiplier chi(|xi|) / (4 a xi),  Phi = int_{x_left}^x phi,

with chi a quintic smoothstep that vanishes for |xi| <= r and equals one for
|xi| >= r + 1. Because the symbol is separable the operator is applied with
one FFT pair and a pointwise product. Its norm is at most
sup|Phi| / (4 |a| r), and the Neumann series inverts it when that bound is
below one.

Conjugating the principal part by Lambda produces

    i a [Lambda~, d^4] = phi d^2 + (3/2) phi' d + (order zero),

a second-order dissipative term that absorbs the first-order loss coming
from Im gamma as long as |Im gamma| <= phi.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .curve import GridSpec
from .errors import NonFiniteStateError, ParameterError
from .gauge import spectral_primitive

MAX_NORM_BOUND = 0.5
_trapezoid = getattr(np, "trapezoid", None) or np.trapz
DEFAULT_NORM_TARGET = 0.25


def _wavenumbers(grid):
    return 2.0 * np.pi * np.fft.fftfreq(grid.num_points, d=grid.dx)


def _dx(f, grid, order=1):
    k = _wavenumbers(grid)
    mult = (1j * k) ** order
    if order % 2 == 1:
        mult[grid.num_points // 2] = 0.0
    return np.fft.ifft(mult * np.fft.fft(f))


def _l2(f, grid):
    return math.sqrt(grid.dx * float(np.sum(np.abs(f) ** 2)))


def cutoff(xi, r):
    """Smooth cutoff: 0 for |xi| <= r, 1 for |xi| >= r + 1, C^2 in between."""
    s = np.clip(np.abs(xi) - r, 0.0, 1.0)
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)


@dataclass
class LinearSpec:
    """Coefficients of the linear model on a periodic grid.

    ``beta`` and ``gamma`` are scalars, grid arrays, or callables ``f(t)``
    returning grid arrays. ``phi`` is the nonnegative majorant of Im gamma.
    ``probe=True`` skips the |Im gamma| <= phi check for ill-posedness probes.
    """
    grid: GridSpec
    a: float
    phi: np.ndarray | float = 0.0
    beta: np.ndarray | float | Callable = 0.0
    gamma: np.ndarray | complex | Callable = 0.0
    cutoff_radius: float | None = None
    probe: bool = False

    def __post_init__(self):
        if self.a == 0 or not math.isfinite(self.a):
            raise ParameterError("LinearSpec.a must be finite and nonzero")
        n = self.grid.num_points
        self.phi = np.broadcast_to(np.asarray(self.phi, dtype=float), (n,)).copy()
        if np.any(self.phi < 0) or np.any(~np.isfinite(self.phi)):
            raise ParameterError("LinearSpec.phi must be finite and nonnegative")
        if self.cutoff_radius is not None and not self.cutoff_radius > 0:
            raise ParameterError("LinearSpec.cutoff_radius must be positive")
        if not self.probe:
            for t in (0.0,) if not callable(self.gamma) else (0.0, 0.5, 1.0):
                im = np.abs(np.imag(self.gamma_at(t)))
                excess = float(np.max(im - self.phi))
                if excess > 1e-12 * (1.0 + float(np.max(self.phi))):
                    raise ParameterError(
                        "LinearSpec.gamma: |Im gamma| <= phi violated by "
                        f"{excess:.3e}; set probe=True for ill-posedness probes")

    def beta_at(self, t):
        b = self.beta(t) if callable(self.beta) else self.beta
        return np.broadcast_to(np.asarray(b, dtype=float), (self.grid.num_points,))

    def gamma_at(self, t):
        g = self.gamma(t) if callable(self.gamma) else self.gamma
        return np.broadcast_to(np.asarray(g, dtype=complex), (self.grid.num_points,))


@dataclass
class GaugeOperator:
    spec: LinearSpec
    Phi: np.ndarray = field(init=False)
    multiplier: np.ndarray = field(init=False)
    radius: float = field(init=False)
    norm_bound: float = field(init=False)

    def __post_init__(self):
        s = self.spec
        grid = s.grid
        self.Phi = np.real(spectral_primitive(s.phi, grid))
        sup_phi = float(np.max(np.abs(self.Phi)))
        r = s.cutoff_radius
        if r is None:
            # smallest r with sup|Phi| / (4|a| r) <= 1/4
            r = max(sup_phi / (4.0 * abs(s.a) * DEFAULT_NORM_TARGET), 1e-12)
        self.radius = float(r)
        k = _wavenumbers(grid)
        mult = np.zeros_like(k)
        nz = k != 0
        mult[nz] = cutoff(k[nz], r) / (4.0 * s.a * k[nz])
        mult[grid.num_points // 2] = 0.0
        self.multiplier = mult
        self.norm_bound = sup_phi / (4.0 * abs(s.a) * self.radius)
        if self.norm_bound >= MAX_NORM_BOUND:
            raise ParameterError(
                f"cutoff radius too small: norm bound {self.norm_bound:.3g} >= {MAX_NORM_BOUND}")

    def tilde(self, v):
        """Lambda~ v = Phi * K v."""
        return self.Phi * np.fft.ifft(self.multiplier * np.fft.fft(v))


def free_propagator(u0, t, a, grid):
    """exp(i a t d^4) u0: the multiplier exp(i a t xi^4)."""
    k = _wavenumbers(grid)
    return np.fft.ifft(np.exp(1j * a * t * k ** 4) * np.fft.fft(np.asarray(u0, dtype=complex)))


def gauge_apply(G, v):
    """Lambda v = v + Phi * K v."""
    v = np.asarray(v, dtype=complex)
    return v + G.tilde(v)


def gauge_invert(G, w, tol=1e-15, max_terms=200):
    """Neumann series sum_l (-Lambda~)^l w; stops when a term drops below tol*|w|."""
    if G.norm_bound >= 1:
        raise ParameterError("cutoff radius too small: Neumann series does not converge")
    w = np.asarray(w, dtype=complex)
    scale = _l2(w, G.spec.grid)
    out = w.copy()
    term = w
    n_terms = 1
    while scale > 0 and n_terms < max_terms:
        term = -G.tilde(term)
        out += term
        n_terms += 1
        if _l2(term, G.spec.grid) < tol * scale:
            break
    G.last_series_length = n_terms
    return out


def commutator_parts(G, v):
    """Return (i a [Lambda~, d^4] v, phi v_xx + 3/2 phi' v_x)."""
    grid = G.spec.grid
    a = G.spec.a
    v = np.asarray(v, dtype=complex)
    d4v = _dx(v, grid, 4)
    comm = 1j * a * (G.tilde(d4v) - _dx(G.tilde(v), grid, 4))
    phi = G.spec.phi
    dphi = np.real(_dx(phi, grid, 1))
    matched = phi * _dx(v, grid, 2) + 1.5 * dphi * _dx(v, grid, 1)
    return comm, matched


def commutator_residual(G, v, detail=False):
    """|| i a [Lambda~, d^4] v - phi v_xx - 3/2 phi' v_x ||_{L2} / ||v||_{H1}."""
    grid = G.spec.grid
    comm, matched = commutator_parts(G, v)
    h1 = math.sqrt(_l2(v, grid) ** 2 + _l2(_dx(v, grid, 1), grid) ** 2)
    res = _l2(comm - matched, grid)
    ratio = res / h1 if h1 > 0 else 0.0
    if detail:
        return {"residual": res, "ratio": ratio, "h1": h1, "l2": _l2(v, grid),
                "matched_phi_vxx": _l2(G.spec.phi * _dx(v, grid, 2), grid)}
    return ratio


@dataclass
class LinearTrajectory:
    times: np.ndarray
    states: list
    spec: LinearSpec
    completed: bool = True
    error: str | None = None

    def norms(self):
        return np.array([_l2(s, self.spec.grid) for s in self.states])


def _variable_part(spec, u, t):
    grid = spec.grid
    ux = _dx(u, grid, 1)
    out = spec.gamma_at(t) * ux
    beta = spec.beta_at(t)
    if np.any(beta != 0):
        out = out + 1j * _dx(beta * ux, grid, 1)
    return out


def evolve_linear(spec, u0, T, dt, snapshot_every=1):
    """Strang splitting: exact free half steps around an explicit midpoint
    step of i (beta u_x)_x + gamma u_x. Aborts with partial data on
    non-finite values."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    grid = spec.grid
    n_steps = max(1, math.ceil(abs(T) / dt - 1e-9))
    h = T / n_steps
    k = _wavenumbers(grid)
    half = np.exp(0.5j * spec.a * h * k ** 4)
    u = np.asarray(u0, dtype=complex).copy()
    times, states = [0.0], [u.copy()]
    for step in range(1, n_steps + 1):
        t = (step - 1) * h
        # overflow is detected below and reported through the trajectory
        with np.errstate(over="ignore", invalid="ignore"):
            u = np.fft.ifft(half * np.fft.fft(u))
            mid = u + 0.5 * h * _variable_part(spec, u, t)
            u = u + h * _variable_part(spec, mid, t + 0.5 * h)
            u = np.fft.ifft(half * np.fft.fft(u))
        if not np.all(np.isfinite(u)):
            return LinearTrajectory(np.array(times), states, spec, False,
                                    f"non-finite state at step {step}")
        if step % snapshot_every == 0 or step == n_steps:
            times.append(step * h)
            states.append(u.copy())
    return LinearTrajectory(np.array(times), states, spec)


@dataclass
class AuditResult:
    t: np.ndarray
    norm_v_sq: np.ndarray
    dissipation: np.ndarray
    rate: np.ndarray
    C_min: float
    gauged: bool

    @property
    def residual(self):
        """d/dt |v|^2 + int phi |v_x|^2 - C_min |v|^2 (nonpositive)."""
        return (self.rate + self.dissipation - self.C_min * self.norm_v_sq)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "norm_v_sq", "dissipation", "residual", "C_min"])
            for row in zip(self.t, self.norm_v_sq, self.dissipation, self.residual):
                w.writerow([repr(float(x)) for x in row] + [repr(float(self.C_min))])


def gauged_energy_audit(spec, traj, gauged=True, G=None):
    """Audit d/dt |v|^2 + int phi |v_x|^2 <= C |v|^2 along a trajectory.

    v = Lambda u (or v = u when ``gauged`` is False); d/dt by second-order
    finite differences in time; C_min is the smallest C that makes the
    residual nonpositive at every snapshot.
    """
    grid = spec.grid
    if gauged and G is None:
        G = GaugeOperator(spec)
    vs = [gauge_apply(G, u) if gauged else np.asarray(u) for u in traj.states]
    t = np.asarray(traj.times, dtype=float)
    if len(vs) < 3:
        raise ParameterError("audit needs at least 3 snapshots")
    e = np.array([_l2(v, grid) ** 2 for v in vs])
    diss = np.array([grid.dx * float(np.sum(spec.phi * np.abs(_dx(v, grid, 1)) ** 2))
                     for v in vs])
    rate = np.gradient(e, t, edge_order=2)
    c = (rate + diss) / e
    return AuditResult(t, e, diss, rate, float(np.max(c)), gauged)


def growth_rate(traj):
    """Least-squares slope of log |u(t)| against t."""
    n = traj.norms()
    slope, _ = np.polyfit(np.asarray(traj.times), np.log(n), 1)
    return float(slope)


def wave_packet(grid, carrier, center, width):
    """exp(i carrier x) times a Gaussian envelope, unit L2 norm."""
    x = grid.x
    u = np.exp(1j * carrier * x) * np.exp(-((x - center) / width) ** 2)
    return u / _l2(u, grid)


def random_band_limited(grid, carrier, rng, rel_width=0.125):
    """Random complex data with spectrum in carrier (1 +- rel_width), both signs."""
    k = _wavenumbers(grid)
    band = (np.abs(k) >= carrier * (1 - rel_width)) & (np.abs(k) <= carrier * (1 + rel_width))
    if not np.any(band):
        raise ParameterError("grid does not resolve the requested band")
    coef = np.zeros(grid.num_points, dtype=complex)
    coef[band] = rng.normal(size=band.sum()) + 1j * rng.normal(size=band.sum())
    u = np.fft.ifft(coef)
    return u / _l2(u, grid)


@dataclass
class SmoothingResult:
    ratio: float
    comparator: float
    window: float
    time_samples: int
    per_sample: list

    def as_dict(self):
        return {"ratio": self.ratio, "comparator": self.comparator,
                "window": self.window, "time_samples": self.time_samples,
                "per_sample": self.per_sample}


def smoothing_probe(a, delta_w, samples, carrier, grid, seed=0, time_samples=512):
    """Windowed weighted local-smoothing ratio for random band-limited data.

    ratio = max over samples of
        ( int_{-T_w}^{T_w} || (1+x^2)^{-delta_w/4} |D|^{3/2} e^{i a t d^4} u0 ||^2 dt )^{1/2}
    with x measured from the domain midpoint and ||u0|| = 1. The window
    T_w = L / (8 |a| carrier^3) lets the wave at the carrier's group speed
    travel one period over [-T_w, T_w]. The comparator is the time RMS of
    the unweighted || |D|^{3/2} u || over the same window.
    """
    if not delta_w > 1:
        raise ParameterError("smoothing estimate needs delta_w > 1")
    if samples < 1:
        raise ParameterError("samples must be positive")
    k = _wavenumbers(grid)
    absd = np.abs(k) ** 1.5
    weight_sq = (1.0 + (grid.x - grid.midpoint) ** 2) ** (-delta_w / 2.0)
    t_w = grid.domain_length / (8.0 * abs(a) * carrier ** 3)
    ts = np.linspace(-t_w, t_w, time_samples)
    phase = np.exp(1j * a * np.outer(ts, k ** 4))
    ratios, comps = [], []
    for i in range(samples):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        u0 = random_band_limited(grid, carrier, rng)
        norm = _l2(u0, grid)
        if norm == 0:
            continue
        fields = np.fft.ifft(phase * (absd * np.fft.fft(u0))[None, :], axis=1)
        dens = np.abs(fields) ** 2
        weighted = grid.dx * (dens @ weight_sq)
        plain = grid.dx * dens.sum(axis=1)
        ratios.append(math.sqrt(_trapezoid(weighted, ts)) / norm)
        comps.append(math.sqrt(_trapezoid(plain, ts) / (2.0 * t_w)) / norm)
    return SmoothingResult(max(ratios), max(comps), t_w, time_samples, ratios)


def smoothing_ratio(a, delta_w, samples, carrier=16.0, grid=None, seed=0, time_samples=512):
    """Max over random band-limited u0 of the windowed weighted ratio."""
    if grid is None:
        grid = GridSpec(2048, 40.0)
    return smoothing_probe(a, delta_w, samples, carrier, grid, seed, time_samples).ratio


def write_probe_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
