"""Experiment runners.

Each runner takes a validated :class:`ExperimentConfig` and an output
directory, writes its CSV/JSON artifacts there and returns a summary dict.
:func:`run` wraps a runner with a manifest.
"""
from __future__ import annotations

import csv
import json
import math
import platform
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import __version__
from ..curve import GridSpec
from ..errors import DispflowError, StepError
from ..evolver import evolve, suggest_dt, write_trajectory
from ..gauge import energy_growth, twin_difference, write_energy_csv
from ..linear_lab import (GaugeOperator, LinearSpec, commutator_residual, evolve_linear,
                          gauge_apply, gauge_invert, gauged_energy_audit, growth_rate,
                          smoothing_probe, wave_packet, write_probe_json)
from .config import (ConfigError, build_flow_params, build_gauge_params, build_grid,
                     build_stepper)
from .initial import make_initial, transverse_bump


def _f(x):
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def seed_for(master, counter):
    """Per-task generator: SeedSequence([master, counter])."""
    return np.random.default_rng(np.random.SeedSequence([int(master), int(counter)]))


def _map(cfg, fn, items):
    """Run fn over items on cfg.threads workers; results keep item order."""
    if cfg.threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


# -- flow family ---------------------------------------------------------------

def _stepper_for(cfg, u0, p, T):
    s = cfg.stepper
    dt = s.dt if s.dt is not None else suggest_dt(u0.points, u0.grid, p, s.method,
                                                 s.linear_splitting)
    stepper = build_stepper(cfg, dt)
    if s.snapshot_every is None:
        n_steps = max(1, math.ceil(abs(T) / dt - 1e-9))
        stepper = replace(stepper, snapshot_every=max(1, n_steps // s.snapshots))
    return stepper


def _evolve(cfg, u0, p, T=None):
    T = cfg.T if T is None else T
    return evolve(u0, T, _stepper_for(cfg, u0, p, T), p)


def flow_experiment(cfg, out):
    grid = build_grid(cfg)
    p = build_flow_params(cfg)
    gp = build_gauge_params(cfg, p)
    u0 = make_initial(cfg.initial_data, grid)
    traj = _evolve(cfg, u0, p)
    write_trajectory(traj, out / "trajectory", k=gp.k)
    write_energy_csv(out / "gauge_energy.csv", traj, gp)
    dist = float(np.max(np.abs(traj.final().points - u0.points)))
    report = {
        "final_time": float(traj.times[-1]),
        "sup_distance_from_initial": dist,
        "max_constraint_deviation": traj.max_constraint_deviation(),
        "stationary": dist <= 1e-6,
        "steps": len(traj.defect_series),
    }
    _write_json(out / "report.json", report)
    return report


def energy_audit_experiment(cfg, out):
    grid = build_grid(cfg)
    p = build_flow_params(cfg)
    gp = build_gauge_params(cfg, p)
    u0 = make_initial(cfg.initial_data, grid)
    traj = _evolve(cfg, u0, p)
    write_energy_csv(out / "gauge_energy.csv", traj, gp)
    gauged, plain = energy_growth(traj, gp)
    summary = {"C4_gauged": gauged, "C_ungauged": plain, "M": gp.M, "k": gp.k}
    _write_json(out / "growth.json", summary)
    return summary


def _spread(values):
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / abs(v.mean()))


def _sweep(cfg, out, name, values, make_params):
    grid = build_grid(cfg)
    base = build_flow_params(cfg)
    gp = build_gauge_params(cfg, base)
    u0 = make_initial(cfg.initial_data, grid)

    def one(value):
        p = make_params(base, value)
        traj = _evolve(cfg, u0, p)
        gauged, plain = energy_growth(traj, gp)
        return traj, gauged, plain

    results = _map(cfg, one, list(values))
    rows = []
    for i, (value, (traj, gauged, plain)) in enumerate(zip(values, results)):
        if i + 1 < len(results):
            nxt = float(np.max(np.abs(traj.final().points - results[i + 1][0].final().points)))
        else:
            nxt = float("nan")
        rows.append([float(value), gauged, plain,
                     float(max((r[2] for r in traj.defect_series), default=0.0)), nxt])
    _write_csv(out / f"{name}_sweep.csv",
               [name, "C4_gauged", "C_ungauged", "max_defect", "sup_distance_to_next"], rows)
    summary = {
        name + "s": [float(v) for v in values],
        "C4_gauged": [r[1] for r in rows],
        "C_ungauged": [r[2] for r in rows],
        "spread_gauged": _spread([r[1] for r in rows]),
        "spread_ungauged": _spread([r[2] for r in rows]),
        "sup_distance_to_next": [r[4] for r in rows[:-1]],
    }
    _write_json(out / f"{name}_summary.json", summary)
    return summary


def epsilon_sweep_experiment(cfg, out):
    return _sweep(cfg, out, "epsilon", cfg.sweep.epsilons,
                  lambda p, e: p.with_(epsilon=float(e)))


def delta_sweep_experiment(cfg, out):
    return _sweep(cfg, out, "delta", cfg.sweep.deltas,
                  lambda p, d: p.with_(delta=float(d)))


def twin_experiment(cfg, out):
    """Base run plus perturbed runs at amplitudes h and h/2 (transverse bump)."""
    grid = build_grid(cfg)
    p = build_flow_params(cfg)
    gp = build_gauge_params(cfg, p)
    u0 = make_initial(cfg.initial_data, grid)
    tw = cfg.twin
    stepper = _stepper_for(cfg, u0, p, cfg.T)
    starts = [u0] + [u0.with_points(transverse_bump(u0.points, grid, h, tw.width, tw.center))
                     for h in (tw.amplitude, 0.5 * tw.amplitude)]
    trajs = _map(cfg, lambda u: evolve(u, cfg.T, stepper, p), starts)
    d_h = twin_difference(trajs[0], trajs[1], M=gp.M)
    d_h2 = twin_difference(trajs[0], trajs[2], M=gp.M)
    ratio = d_h / d_h2
    _write_csv(out / "twin.csv", ["t", "D_sq_h", "D_sq_h2", "ratio"],
               [[float(t), float(a), float(b), float(r)]
                for t, a, b, r in zip(trajs[0].times, d_h, d_h2, ratio)])
    write_energy_csv(out / "gauge_energy_h.csv", trajs[1], gp, d_sq=d_h)
    summary = {"ratio_min": float(ratio.min()), "ratio_max": float(ratio.max()),
               "amplitude": tw.amplitude, "snapshots": len(ratio)}
    _write_json(out / "twin_summary.json", summary)
    return summary


# -- linear lab ----------------------------------------------------------------

def linear_spec(cfg_lin, grid, regime=None):
    regime = regime or cfg_lin.regime
    x = grid.x
    if regime == "probe":
        return LinearSpec(grid, cfg_lin.a, gamma=1j * cfg_lin.probe_gamma, probe=True)
    if regime == "free":
        return LinearSpec(grid, cfg_lin.a)
    phi = 1.0 / np.cosh(x - cfg_lin.damping_center) ** 2
    drift = cfg_lin.drift_amplitude * np.exp(-((x - cfg_lin.drift_center) / 2.0) ** 2)
    return LinearSpec(grid, cfg_lin.a, phi=phi, gamma=drift + 1j * phi)


def linear_carrier_run(cfg_lin, grid, carrier, regime=None):
    """Evolve a right-moving packet at the given carrier and audit it."""
    regime = regime or cfg_lin.regime
    spec = linear_spec(cfg_lin, grid, regime)
    a = cfg_lin.a
    # exp(i a t d^4) moves exp(i k x) with speed -4 a k^3: pick the rightward sign
    k0 = -math.copysign(carrier, a)
    speed = 4.0 * abs(a) * carrier ** 3
    if regime == "probe":
        center, T = grid.midpoint, 1.0 / carrier
    else:
        center, T = cfg_lin.packet_center, cfg_lin.travel / speed
    u0 = wave_packet(grid, k0, center, cfg_lin.packet_width)
    every = max(1, cfg_lin.steps // cfg_lin.snapshots)
    traj = evolve_linear(spec, u0, T, T / cfg_lin.steps, snapshot_every=every)
    result = {"carrier": float(carrier), "growth_rate": growth_rate(traj),
              "completed": traj.completed}
    audits = {}
    if regime != "probe":
        audits["gauged"] = gauged_energy_audit(spec, traj, True)
        audits["ungauged"] = gauged_energy_audit(spec, traj, False)
        result["C_gauged"] = audits["gauged"].C_min
        result["C_ungauged"] = audits["ungauged"].C_min
    return result, audits


def linear_experiment(cfg, out):
    lin = cfg.linear
    grid = GridSpec(lin.num_points, lin.domain_length)
    runs = _map(cfg, lambda c: linear_carrier_run(lin, grid, c), list(lin.carriers))
    payload = {"regime": lin.regime, "carriers": []}
    for result, audits in runs:
        tag = f"{result['carrier']:g}"
        for kind, audit in audits.items():
            audit.write_csv(out / f"audit_{kind}_xi{tag}.csv")
        payload["carriers"].append(result)
    rates = [r["growth_rate"] for r, _ in runs]
    payload["rates_strictly_increasing"] = bool(all(b > a for a, b in zip(rates, rates[1:])))
    if lin.regime != "probe":
        cg = [r["C_gauged"] for r, _ in runs]
        payload["C_gauged_variation"] = float(max(cg) / min(cg)) if min(cg) > 0 else float("inf")
    write_probe_json(out / "probe.json", payload)
    return payload


def smoothing_experiment(cfg, out):
    sm = cfg.smoothing
    grid = GridSpec(sm.num_points, sm.domain_length)
    results = _map(cfg, lambda c: smoothing_probe(sm.a, sm.delta_w, sm.samples, c, grid,
                                                  seed=cfg.seed, time_samples=sm.time_samples),
                   list(sm.carriers))
    rows = [[float(c), r.ratio, r.comparator, r.window] for c, r in zip(sm.carriers, results)]
    _write_csv(out / "smoothing.csv", ["carrier", "ratio", "comparator", "window"], rows)
    ratios = [r.ratio for r in results]
    slope = float(np.polyfit(np.log(sm.carriers), np.log([r.comparator for r in results]), 1)[0])
    payload = {"delta_w": sm.delta_w, "ratios": ratios,
               "ratio_variation": float(max(ratios) / min(ratios)),
               "comparator_exponent": slope, "seed": cfg.seed}
    write_probe_json(out / "smoothing.json", payload)
    return payload


def commutator_experiment(cfg, out):
    cm = cfg.commutator
    grid = GridSpec(cm.num_points, cm.domain_length)
    x = grid.x
    c = grid.midpoint
    phi = 1.0 / np.cosh(x - c) ** 2
    env = np.exp(-((x - c) / cm.envelope_width) ** 2)
    rows = []
    for r in cm.radii:
        G = GaugeOperator(LinearSpec(grid, cm.a, phi=phi, cutoff_radius=r))
        for xi in list(cm.carriers) + [2.0 * (r + 1.0)]:
            d = commutator_residual(G, np.exp(1j * xi * x) * env, detail=True)
            rows.append([float(r), float(xi), d["ratio"], d["residual"] / d["l2"],
                         d["matched_phi_vxx"]])
    _write_csv(out / "commutator.csv",
               ["radius", "carrier", "residual_over_h1", "residual_over_l2", "matched_norm"],
               rows)
    G = GaugeOperator(LinearSpec(grid, cm.a, phi=phi))
    re_im = seed_for(cfg.seed, 0).normal(size=(2, grid.num_points))
    v = re_im[0] + 1j * re_im[1]
    back = gauge_invert(G, gauge_apply(G, v))
    payload = {"roundtrip_error": float(np.max(np.abs(back - v)) / np.max(np.abs(v))),
               "default_radius": G.radius, "norm_bound": G.norm_bound,
               "series_length": G.last_series_length}
    write_probe_json(out / "commutator.json", payload)
    return payload


RUNNERS = {
    "flow": flow_experiment,
    "energy_audit": energy_audit_experiment,
    "epsilon_sweep": epsilon_sweep_experiment,
    "delta_sweep": delta_sweep_experiment,
    "twin": twin_experiment,
    "linear": linear_experiment,
    "smoothing": smoothing_experiment,
    "commutator": commutator_experiment,
}


def run(cfg, output_dir=None):
    """Run one experiment and write manifest.json; returns (status, summary).

    Status 0 on success, 1 on a runtime error (recorded in the manifest;
    partial outputs are kept).
    """
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.model_dump(mode="json"),
        "config_hash": cfg.config_hash(),
        "library_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": cfg.threads,
        "seed": cfg.seed,
        "seed_scheme": "numpy SeedSequence([seed, counter])",
    }
    t0 = time.perf_counter()
    status, summary = 0, None
    try:
        summary = RUNNERS[cfg.experiment](cfg, out)
        manifest["status"] = "ok"
    except (DispflowError, FloatingPointError, ValueError) as exc:
        status = 1
        manifest["status"] = "error"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        if isinstance(exc, StepError):
            manifest["failed_step"] = exc.step
        manifest["traceback"] = traceback.format_exc(limit=5)
        if isinstance(exc, ConfigError):
            status = 2
    manifest["wall_clock_seconds"] = time.perf_counter() - t0
    manifest["summary"] = summary
    _write_json(out / "manifest.json", manifest)
    return status, summary
