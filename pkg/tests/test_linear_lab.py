import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dispflow.curve import GridSpec
from dispflow.errors import ParameterError
from dispflow.linear_lab import (GaugeOperator, LinearSpec, commutator_residual, cutoff,
                                 evolve_linear, free_propagator, gauge_apply, gauge_invert,
                                 gauged_energy_audit, growth_rate, random_band_limited,
                                 smoothing_probe, smoothing_ratio, wave_packet)

GRID = GridSpec(512, 8 * np.pi)


def _sech2(grid, center=None, scale=1.0):
    c = grid.midpoint if center is None else center
    return scale / np.cosh(grid.x - c) ** 2


def _l2(f, grid=GRID):
    return math.sqrt(grid.dx * np.sum(np.abs(f) ** 2))


def _random(seed, grid=GRID):
    rng = np.random.default_rng(seed)
    return rng.normal(size=grid.num_points) + 1j * rng.normal(size=grid.num_points)


def test_spec_validation():
    with pytest.raises(ParameterError):
        LinearSpec(GRID, 0.0)
    with pytest.raises(ParameterError):
        LinearSpec(GRID, 1.0, phi=-np.ones(GRID.num_points))
    with pytest.raises(ParameterError, match="probe"):
        LinearSpec(GRID, 1.0, phi=_sech2(GRID), gamma=0.5j)
    LinearSpec(GRID, 1.0, phi=_sech2(GRID), gamma=0.5j, probe=True)
    LinearSpec(GRID, 1.0, phi=_sech2(GRID), gamma=1j * _sech2(GRID) + 3.0)
    with pytest.raises(ParameterError):
        LinearSpec(GRID, 1.0, cutoff_radius=0.0)


def test_cutoff_plateaus_and_smoothness():
    r = 4.0
    xi = np.linspace(0, 8, 8001)
    c = cutoff(xi, r)
    assert np.all(c[xi <= r] == 0) and np.all(c[xi >= r + 1] == 1)
    assert np.all(np.diff(c) >= 0)
    np.testing.assert_array_equal(cutoff(-xi, r), c)
    h = xi[1] - xi[0]
    d1 = np.gradient(c, h)
    d2 = np.gradient(d1, h)
    for edge in (r, r + 1):
        i = int(round(edge / h))
        assert abs(d1[i]) < 1e-5 and abs(d2[i]) < 0.05


def test_free_propagator_examples():
    u0 = _random(1)
    np.testing.assert_allclose(free_propagator(u0, 0.0, 1.0, GRID), u0, atol=1e-13)
    out = free_propagator(u0, 0.37, -1.3, GRID)
    assert abs(_l2(out) - _l2(u0)) <= 1e-13 * _l2(u0)
    xi0 = 3 * 2 * np.pi / GRID.domain_length
    mode = np.exp(1j * xi0 * GRID.x)
    np.testing.assert_allclose(free_propagator(mode, 0.2, 1.5, GRID),
                               np.exp(1j * 1.5 * 0.2 * xi0 ** 4) * mode, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 2 ** 31))
def test_free_propagator_group_law(t1, t2, seed):
    u0 = _random(seed)
    lhs = free_propagator(free_propagator(u0, t1, 1.0, GRID), t2, 1.0, GRID)
    rhs = free_propagator(u0, t1 + t2, 1.0, GRID)
    # phases a t xi^4 reach 1e9 here, so round-off scales with them
    assert _l2(lhs - rhs) <= 1e-13 * _l2(u0) * max(1.0, (abs(t1) + abs(t2)) * 1e5)


def test_gauge_identity_cases():
    spec = LinearSpec(GRID, 1.0, phi=_sech2(GRID), cutoff_radius=6.0)
    G = GaugeOperator(spec)
    k = 2 * np.pi * np.fft.fftfreq(GRID.num_points, d=GRID.dx)
    coef = np.fft.fft(_random(2))
    coef[np.abs(k) > 6.0] = 0
    low = np.fft.ifft(coef)
    np.testing.assert_allclose(gauge_apply(G, low), low, atol=1e-15)
    zero = GaugeOperator(LinearSpec(GRID, 1.0))
    v = _random(3)
    np.testing.assert_array_equal(gauge_apply(zero, v), v)
    np.testing.assert_array_equal(gauge_invert(zero, v), v)
    assert commutator_residual(zero, v) == 0.0


def test_gauge_norm_probe():
    G = GaugeOperator(LinearSpec(GRID, 1.0, phi=_sech2(GRID), cutoff_radius=2.0))
    worst = max(_l2(G.tilde(v)) / _l2(v) for v in (_random(s) for s in range(50)))
    # adversarial probe: the highest admissible mode placed where |Phi| is largest
    spike = np.exp(1j * 2.5 * GRID.x) * np.exp(-((GRID.x - 0.9 * GRID.domain_length) / 1.0) ** 2)
    worst = max(worst, _l2(G.tilde(spike)) / _l2(spike))
    assert worst <= G.norm_bound * (1 + 1e-6)


def test_gauge_roundtrip_and_series_length():
    G = GaugeOperator(LinearSpec(GRID, 1.0, phi=_sech2(GRID, scale=2.0)))
    assert G.norm_bound <= 0.25 + 1e-12
    for seed in range(5):
        v = _random(seed)
        w = gauge_apply(G, v)
        back = gauge_invert(G, w)
        assert np.max(np.abs(back - v)) <= 1e-11 * np.max(np.abs(v))
        assert _l2(gauge_apply(G, back) - w) <= 1e-12 * _l2(w)
        assert G.last_series_length <= math.log(1e-15) / math.log(G.norm_bound) + 1


def test_radius_too_small():
    with pytest.raises(ParameterError, match="cutoff radius too small"):
        GaugeOperator(LinearSpec(GRID, 1.0, phi=_sech2(GRID, scale=2.0), cutoff_radius=0.5))


def test_gauge_continuous_in_radius():
    phi = _sech2(GRID)
    v = _random(7)
    outs = [gauge_apply(GaugeOperator(LinearSpec(GRID, 1.0, phi=phi, cutoff_radius=r)), v)
            for r in (4.0 * 0.99, 4.0, 4.0 * 1.01)]
    assert _l2(outs[0] - outs[1]) < 0.01 * _l2(v)
    assert _l2(outs[2] - outs[1]) < 0.01 * _l2(v)


def test_evolve_linear_free_case():
    spec = LinearSpec(GRID, 1.0)
    u0 = wave_packet(GRID, 5.0, GRID.midpoint, 2.0)
    traj = evolve_linear(spec, u0, 0.01, 1e-4, snapshot_every=10)
    np.testing.assert_allclose(traj.states[-1], free_propagator(u0, 0.01, 1.0, GRID), atol=1e-12)
    assert len(traj.states) == 11 and traj.times[-1] == pytest.approx(0.01)


def test_evolve_linear_real_gamma_keeps_norm():
    grid = GridSpec(512, 40.0)
    beta = 0.3 * np.exp(-((grid.x - 20) / 3) ** 2)
    gamma = 0.5 * np.exp(-((grid.x - 20) / 3) ** 2)
    spec = LinearSpec(grid, 1.0, beta=beta, gamma=gamma)
    u0 = wave_packet(grid, 3.0, 15.0, 2.0)
    traj = evolve_linear(spec, u0, 0.5, 2e-4, snapshot_every=50)
    assert traj.completed
    assert abs(growth_rate(traj)) < 0.2


def test_evolve_linear_time_dependent_coefficients():
    grid = GridSpec(256, 40.0)
    spec = LinearSpec(grid, 1.0, gamma=lambda t: 0.1 * np.cos(t) * np.ones(grid.num_points))
    traj = evolve_linear(spec, wave_packet(grid, 2.0, 20.0, 2.0), 0.1, 1e-3)
    assert traj.completed


def test_evolve_linear_aborts_on_blowup():
    grid = GridSpec(64, 2 * np.pi)
    spec = LinearSpec(grid, 1.0, gamma=1e200j, probe=True)
    traj = evolve_linear(spec, wave_packet(grid, 3.0, 3.0, 1.0), 1.0, 0.1)
    assert not traj.completed and "non-finite" in traj.error
    assert len(traj.states) >= 1


def test_audit_free_flow_has_zero_constant():
    spec = LinearSpec(GRID, 1.0)
    traj = evolve_linear(spec, wave_packet(GRID, 4.0, GRID.midpoint, 2.0), 0.01, 1e-4,
                         snapshot_every=5)
    audit = gauged_energy_audit(spec, traj)
    assert abs(audit.C_min) < 1e-9
    assert np.all(audit.residual <= 1e-12)


def _hypothesis_audit(n, steps):
    grid = GridSpec(n, 48.0)
    phi = 1.0 / np.cosh(grid.x - 23.0) ** 2
    drift = 0.5 * np.exp(-((grid.x - 13.0) / 2.0) ** 2)
    spec = LinearSpec(grid, 1.0, phi=phi, gamma=drift + 1j * phi)
    carrier = 8.0
    T = 25.0 / (4 * carrier ** 3)
    u0 = wave_packet(grid, -carrier, 6.0, 2.0)
    traj = evolve_linear(spec, u0, T, T / steps, snapshot_every=steps // 100)
    return gauged_energy_audit(spec, traj)


def test_audit_stable_under_grid_doubling(tmp_path):
    coarse = _hypothesis_audit(1024, 1000)
    fine = _hypothesis_audit(2048, 2000)
    assert np.isfinite(coarse.C_min) and coarse.C_min < 1.0
    assert fine.C_min == pytest.approx(coarse.C_min, rel=0.1)
    fine.write_csv(tmp_path / "audit.csv")
    with open(tmp_path / "audit.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "norm_v_sq", "dissipation", "residual", "C_min"]
    assert all(float(r[3]) <= 1e-12 for r in rows[1:])


def test_random_band_limited():
    rng = np.random.default_rng(0)
    u = random_band_limited(GRID, 16.0, rng)
    assert _l2(u) == pytest.approx(1.0)
    k = np.abs(2 * np.pi * np.fft.fftfreq(GRID.num_points, d=GRID.dx))
    spec = np.abs(np.fft.fft(u))
    assert np.all(spec[(k < 14.0 - 1e-9) | (k > 18.0 + 1e-9)] < 1e-10)


def test_smoothing_ratio_examples():
    grid = GridSpec(1024, 40.0)
    with pytest.raises(ParameterError):
        smoothing_ratio(1.0, 1.0, 2, grid=grid)
    r2 = smoothing_ratio(1.0, 2.0, 3, carrier=8.0, grid=grid, time_samples=128)
    r1 = smoothing_ratio(1.0, 1.01, 3, carrier=8.0, grid=grid, time_samples=128)
    assert np.isfinite(r1) and np.isfinite(r2)
    assert r1 > r2
    again = smoothing_probe(1.0, 2.0, 3, 8.0, grid, seed=0, time_samples=128)
    assert again.ratio == r2
    assert again.window == pytest.approx(40.0 / (8 * 8.0 ** 3))
