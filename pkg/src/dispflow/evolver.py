"""Time integration of the (regularised) flow.

Two steppers share one driver:

* :func:`picard_step` is the mild-solution construction. The ambient state
  ``v`` is advanced by

      v(t+h) = S(h) v(t) + int_0^h S(h-s) F(Pi(v(t+s))) ds,

  with ``S(t)`` the Fourier multiplier ``exp(-t (delta xi^6 [+ eps xi^4]))``,
  the nonlinearity always evaluated at the projected point ``Pi(v)``, the
  Duhamel integral approximated by the exponential trapezoid rule, and the
  implicit end-point value found by fixed-point iteration started from the
  free semigroup flow ``S(h) v(t)``.
* :func:`rk_step` is the classical four-stage explicit scheme with stage
  states projected to the sphere; it is the stepper for the unregularised
  dispersive flow.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .curve import DiscreteCurve, _ux, diff, sobolev_energies, write_curve
from .errors import (ContractionFailure, DispflowError, ParameterError,
                     StepError, TubeExitError)
from .flow import FlowParams, rhs_array
from .manifold import DEFAULT_SPHERE

PROJECTION_MODES = ("every_step", "never", "threshold")
SPLITTINGS = ("delta_only", "delta_and_epsilon")
METHODS = ("picard", "rk")


class CFLWarning(UserWarning):
    pass


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    method: str = "picard"
    picard_max_iters: int = 25
    picard_tol: float = 1e-12
    projection_mode: str = "every_step"
    projection_threshold: float = 1e-10
    linear_splitting: str = "delta_only"
    snapshot_every: int = 1
    # explicit stability heuristic: |dt| * lambda_max <= cfl_constant
    cfl_constant: float = 2.5
    cfl_action: str = "warn"

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("StepperConfig.dt must be positive")
        if not self.picard_tol > 0:
            raise ParameterError("StepperConfig.picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise ParameterError("StepperConfig.picard_max_iters must be >= 1")
        if self.method not in METHODS:
            raise ParameterError(f"StepperConfig.method: unknown method {self.method!r}")
        if self.projection_mode not in PROJECTION_MODES:
            raise ParameterError(
                f"StepperConfig.projection_mode: unknown mode {self.projection_mode!r}")
        if self.linear_splitting not in SPLITTINGS:
            raise ParameterError(
                f"StepperConfig.linear_splitting: unknown splitting {self.linear_splitting!r}")
        if self.snapshot_every < 1:
            raise ParameterError("StepperConfig.snapshot_every must be >= 1")
        if self.cfl_action not in ("warn", "reject", "ignore"):
            raise ParameterError(f"StepperConfig.cfl_action: unknown action {self.cfl_action!r}")


@dataclass
class Trajectory:
    snapshots: list
    params: FlowParams
    config: StepperConfig
    # one row per step: (step, t, defect_sup, defect_l2, picard_iterations);
    # defects are measured before the projection of that step
    defect_series: list = field(default_factory=list)
    # constraint defect of the carried ambient state at each snapshot
    defect_fields: list = field(default_factory=list)
    completed: bool = True
    error: str | None = None

    @property
    def times(self):
        return np.array([s.time_stamp for s in self.snapshots])

    @property
    def grid(self):
        return self.snapshots[0].grid

    def final(self):
        return self.snapshots[-1]

    def max_constraint_deviation(self):
        return max(float(np.max(np.abs(np.linalg.norm(s.points, axis=1) - 1.0)))
                   for s in self.snapshots)


# -- linear part -------------------------------------------------------------

@lru_cache(maxsize=32)
def _effective_wavenumbers(grid):
    """Real symbol s(xi) of the grid's first derivative, d/dx <-> i s(xi).

    For the spectral scheme s = xi except at the Nyquist mode, where the
    odd derivative vanishes; for finite differences it is the stencil's
    symbol. Building the semigroup from s keeps it consistent with the
    discrete nabla^5 in the right-hand side.
    """
    impulse = np.zeros(grid.num_points)
    impulse[0] = 1.0
    return np.fft.rfft(diff(impulse, grid, 1, check=False)).imag


@lru_cache(maxsize=32)
def _symbol_for(grid, delta, eps):
    k = _effective_wavenumbers(grid)
    sym = delta * k ** 6 + eps * k ** 4
    sym.flags.writeable = False
    return sym


def _symbol(grid, delta, eps):
    return _symbol_for(grid, float(delta), float(eps))


def _folded_eps(p, cfg_or_splitting):
    splitting = getattr(cfg_or_splitting, "linear_splitting", cfg_or_splitting)
    return p.epsilon if splitting == "delta_and_epsilon" else 0.0


def semigroup_apply(f, t, p, grid, linear_splitting="delta_only"):
    """exp(t delta d^6/dx^6) f, optionally times exp(-t eps d^4/dx^4).

    Fourier multiplier exp(-t (delta xi^6 + eps xi^4)); norm-nonincreasing.
    """
    if t < 0:
        raise ParameterError("semigroup_apply: t must be nonnegative (semigroup, not group)")
    f = np.asarray(f, dtype=float)
    if t == 0:
        return f.copy()
    sym = _symbol(grid, p.delta, _folded_eps(p, linear_splitting))
    mult = np.exp(-t * sym)
    if f.ndim > 1:
        mult = mult.reshape((-1,) + (1,) * (f.ndim - 1))
    return np.fft.irfft(np.fft.rfft(f, axis=0) * mult, n=grid.num_points, axis=0)


def _linear_part(w, grid, p, eps_fold):
    """delta d^6 w - eps_fold d^4 w, evaluated spectrally."""
    sym = _symbol(grid, p.delta, eps_fold)
    return np.fft.irfft(-sym[:, None] * np.fft.rfft(w, axis=0), n=grid.num_points, axis=0)


def _nonlinearity(v, grid, p, eps_fold, sphere):
    w = sphere.tube_project(v)
    out = rhs_array(w, grid, p)
    if p.delta > 0 or eps_fold > 0:
        out = out - _linear_part(w, grid, p, eps_fold)
    return out


def _check_picard_applicable(p, cfg):
    if p.delta > 0:
        return
    if p.epsilon > 0 and cfg.linear_splitting == "delta_and_epsilon":
        return
    raise ParameterError(
        "picard_step needs delta > 0, or epsilon > 0 with linear_splitting="
        "'delta_and_epsilon'; use rk_step for the unregularised flow"
    )


def _picard_advance(v, grid, h, p, cfg, sphere=DEFAULT_SPHERE):
    eps_fold = _folded_eps(p, cfg)
    sym = _symbol(grid, p.delta, eps_fold)
    mult = np.exp(-h * sym)[:, None]
    n = grid.num_points

    def S(f):
        return np.fft.irfft(np.fft.rfft(f, axis=0) * mult, n=n, axis=0)

    f0 = _nonlinearity(v, grid, p, eps_fold, sphere)
    base = S(v + 0.5 * h * f0)
    it = S(v)
    for count in range(1, cfg.picard_max_iters + 1):
        new = base + 0.5 * h * _nonlinearity(it, grid, p, eps_fold, sphere)
        change = float(np.max(np.abs(new - it)))
        it = new
        if not math.isfinite(change):
            break
        if change < cfg.picard_tol:
            return it, count
    raise ContractionFailure(
        f"contraction failure: reduce dt (Picard change {change:.2e} after "
        f"{cfg.picard_max_iters} iterations, tol {cfg.picard_tol:.0e})"
    )


def stiffness(u, grid, p):
    """Estimate of the largest eigenvalue modulus of the linearised RHS."""
    k = grid.max_wavenumber
    ux = _ux(u, grid)
    ux2 = float(np.max(np.einsum("ij,ij->i", ux, ux)))
    return ((abs(p.a) + p.epsilon) * k ** 4 + p.delta * k ** 6
            + (1.0 + abs(p.b) * ux2 + abs(p.c) * ux2) * k ** 2)


def suggest_dt(u, grid, p, method="rk", linear_splitting="delta_only"):
    """Step size from the stiffness estimate.

    rk: 2 / lambda, inside the RK4 imaginary-axis stability interval.
    picard: 0.2 / lambda with the semigroup part (delta, folded eps) left
    out of lambda; measured to keep the fixed-point iteration contracting
    and the exponential trapezoid stable on curved data.
    """
    if method == "rk":
        return 2.0 / stiffness(u, grid, p)
    eps = p.epsilon if linear_splitting == "delta_only" else 0.0
    return 0.2 / stiffness(u, grid, p.with_(delta=0.0, epsilon=eps))


def check_cfl(u, grid, h, p, cfg):
    lam = stiffness(u, grid, p)
    if abs(h) * lam <= cfg.cfl_constant:
        return True
    msg = (f"dt={abs(h):.3e} exceeds the explicit stability heuristic "
           f"dt <= {cfg.cfl_constant:g}/lambda = {cfg.cfl_constant / lam:.3e}")
    if cfg.cfl_action == "reject":
        raise ParameterError(msg)
    if cfg.cfl_action == "warn":
        warnings.warn(msg, CFLWarning, stacklevel=3)
    return False


def _rk_advance(u, grid, h, p, sphere=DEFAULT_SPHERE):
    def f(w):
        return sphere.tangent_project(w, rhs_array(w, grid, p), check=False)

    k1 = f(u)
    k2 = f(sphere.tube_project(u + 0.5 * h * k1))
    k3 = f(sphere.tube_project(u + 0.5 * h * k2))
    k4 = f(sphere.tube_project(u + h * k3))
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _finish(v_new, u, cfg, sphere):
    if cfg.projection_mode == "never":
        return u.with_points(sphere.tube_project(v_new))
    return DiscreteCurve(u.grid, sphere.tube_project(v_new), u.time_stamp)


def picard_step(u, cfg, p, sphere=DEFAULT_SPHERE):
    """One mild-solution step of size cfg.dt, projected back to the sphere
    unless ``cfg.projection_mode == 'never'``."""
    _check_picard_applicable(p, cfg)
    v_new, _ = _picard_advance(u.points, u.grid, cfg.dt, p, cfg, sphere)
    out = _finish(v_new, u, cfg, sphere)
    out.time_stamp = u.time_stamp + cfg.dt
    return out


def rk_step(u, cfg, p, sphere=DEFAULT_SPHERE):
    """One classical RK4 step of size cfg.dt with projected stages."""
    check_cfl(u.points, u.grid, cfg.dt, p, cfg)
    v_new = _rk_advance(u.points, u.grid, cfg.dt, p, sphere)
    out = _finish(v_new, u, cfg, sphere)
    out.time_stamp = u.time_stamp + cfg.dt
    return out


def evolve(u0, T, cfg, p, sphere=DEFAULT_SPHERE):
    """Integrate from u0 over [0, T] (or [T, 0] for T < 0).

    Steps are uniform with size T / ceil(|T| / cfg.dt) so that the final
    snapshot lands on T. Negative T is only accepted for the unregularised
    flow with the explicit stepper.
    """
    grid = u0.grid
    if T == 0:
        return Trajectory([u0.copy()], p, cfg, [],
                          [np.zeros_like(u0.points)])
    if T < 0:
        if p.regularized:
            raise ParameterError("backward evolution is refused when epsilon or delta > 0")
        if cfg.method != "rk":
            raise ParameterError("backward evolution requires method='rk'")
    if cfg.method == "picard":
        _check_picard_applicable(p, cfg)
    n_steps = max(1, math.ceil(abs(T) / cfg.dt - 1e-9))
    h = T / n_steps
    t0 = u0.time_stamp
    v = u0.points.copy()
    traj = Trajectory([u0.copy()], p, cfg, [], [np.zeros_like(v)])
    if cfg.method == "rk":
        check_cfl(v, grid, h, p, cfg)
    for step in range(1, n_steps + 1):
        try:
            if cfg.method == "picard":
                v_new, iters = _picard_advance(v, grid, h, p, cfg, sphere)
            else:
                v_new, iters = _rk_advance(sphere.tube_project(v), grid, h, p, sphere), 0
            proj = sphere.tube_project(v_new)
        except (DispflowError, FloatingPointError) as exc:
            traj.completed = False
            traj.error = f"step {step}: {exc}"
            kind = "tube exit (step rejected)" if isinstance(exc, TubeExitError) else type(exc).__name__
            raise StepError(f"step {step} failed: {kind}: {exc}", step, traj) from exc
        rho = v_new - proj
        rho_norm = np.linalg.norm(rho, axis=1)
        traj.defect_series.append(
            (step, t0 + step * h, float(np.max(rho_norm)),
             math.sqrt(grid.dx * float(np.sum(rho_norm ** 2))), iters))
        mode = cfg.projection_mode
        if mode == "every_step" or (mode == "threshold" and np.max(rho_norm) > cfg.projection_threshold):
            v = proj
        else:
            v = v_new
        if step % cfg.snapshot_every == 0 or step == n_steps:
            pts = sphere.tube_project(v)
            traj.snapshots.append(DiscreteCurve(grid, pts, t0 + step * h, check=False))
            traj.defect_fields.append(v - pts)
    return traj


def weighted_defect(traj, eta):
    """Gaussian-weighted defect integral per snapshot.

    Returns ``int exp(-eta (x - L/2)^2) |rho(v)|^2 dx`` for each snapshot.
    """
    if not 0 < eta <= 1:
        raise ParameterError("eta must lie in (0, 1]")
    grid = traj.grid
    weight = np.exp(-eta * (grid.x - grid.midpoint) ** 2)
    return np.array([grid.dx * float(np.sum(weight * np.einsum("ij,ij->i", r, r)))
                     for r in traj.defect_fields])


def params_hash(p, cfg=None):
    import hashlib
    blob = {"params": p.as_dict()}
    if cfg is not None:
        blob["stepper"] = asdict(cfg)
    return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


def write_trajectory(traj, out_dir, k=2):
    """Write metadata.json, numbered snapshot files and two CSV tables."""
    out = Path(out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    h = params_hash(traj.params, traj.config)
    names = []
    for i, snap in enumerate(traj.snapshots):
        name = f"snapshots/snap_{i:05d}.curve"
        write_curve(out / name, snap, params_hash=h)
        names.append(name)
    meta = {
        "params": traj.params.as_dict(),
        "stepper": asdict(traj.config),
        "grid": traj.grid.as_dict(),
        "params_hash": h,
        "times": [float(t) for t in traj.times],
        "snapshots": names,
        "completed": traj.completed,
        "error": traj.error,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    with open(out / "defect.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t", "defect_sup", "defect_l2", "picard_iters"])
        for row in traj.defect_series:
            w.writerow([row[0], repr(float(row[1])), repr(row[2]), repr(row[3]), row[4]])
    with open(out / "energy.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"ladder_{l}" for l in range(k + 1)] + ["defect_l2"])
        for snap, rho in zip(traj.snapshots, traj.defect_fields):
            lad = sobolev_energies(snap, k).levels
            dl2 = math.sqrt(snap.grid.dx * float(np.sum(rho * rho)))
            w.writerow([repr(float(snap.time_stamp))] + [repr(float(x)) for x in lad] + [repr(dl2)])
    return out
