import csv
import json
import warnings

import numpy as np
import pytest

from dispflow.curve import DecayWarning, GridSpec, check_decay, write_curve
from dispflow.errors import ParameterError
from dispflow.workbench import ConfigError, load_config, make_initial, parse_config, run
from dispflow.workbench.cli import main
from dispflow.workbench.config import apply_overrides, build_gauge_params
from dispflow.workbench.experiments import seed_for
from dispflow.workbench.initial import great_circle

SMALL = ["grid.num_points=16", "T=0.01"]


def test_defaults_parse():
    cfg = parse_config({})
    assert cfg.experiment == "flow" and cfg.seed == 0
    assert cfg.config_hash() == parse_config({}).config_hash()
    assert cfg.config_hash() != parse_config({"seed": 1}).config_hash()


@pytest.mark.parametrize("data, path", [
    ({"grid": {"bogus": 1}}, "grid.bogus"),
    ({"flow_params": {"a": 0.0}}, "flow_params.a"),
    ({"stepper": {"method": "euler"}}, "stepper.method"),
    ({"initial_data": {"kind": "perturbed_great_circle", "amplitude": 1.5}}, "initial_data.amplitude"),
    ({"grid": {"num_points": 24}}, "grid"),
    ({"gauge_params": {"k": 2}}, "gauge_params"),
    ({"flow_params": {"preset": "integrable_PDL", "b": 1.0}}, "flow_params"),
])
def test_validation_errors_name_the_field(data, path):
    with pytest.raises(ConfigError) as info:
        parse_config(data)
    assert str(info.value).startswith(path)


def test_a_zero_cites_invariant():
    with pytest.raises(ConfigError, match="FlowParams invariant"):
        parse_config({"flow_params": {"a": 0}})


def test_overrides():
    data = apply_overrides({"grid": {"num_points": 32}},
                           ["grid.domain_length=3.5", "flow_params.preset=integrable_PDL",
                            "sweep.epsilons=[0.2, 0.1]"])
    assert data == {"grid": {"num_points": 32, "domain_length": 3.5},
                    "flow_params": {"preset": "integrable_PDL"},
                    "sweep": {"epsilons": [0.2, 0.1]}}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides({"T": 1.0}, ["T.x=1"])


def test_load_config_from_file(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("experiment: twin\ngrid:\n  num_points: 64\nseed: 3\n")
    cfg = load_config(path, ["seed=5"], output_dir=str(tmp_path / "o"))
    assert (cfg.experiment, cfg.grid.num_points, cfg.seed) == ("twin", 64, 5)
    path.write_text("grid: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(path)


def test_default_gauge_strength():
    cfg = parse_config({"flow_params": {"a": -3.0}})
    assert build_gauge_params(cfg).M == 30.0


def test_make_initial_examples():
    grid = GridSpec(64, 7.0)
    u = make_initial({"kind": "great_circle"}, grid)
    th = 2 * np.pi * grid.x / 7.0
    np.testing.assert_allclose(u.points, np.stack([np.cos(th), np.sin(th), 0 * th], 1), atol=1e-15)
    z = make_initial({"kind": "perturbed_great_circle", "amplitude": 0.0, "mode": 3}, grid)
    np.testing.assert_allclose(z.points, u.points, atol=2e-16)
    w = make_initial({"kind": "perturbed_great_circle", "amplitude": 0.3, "mode": 3}, grid)
    assert np.max(np.abs(np.linalg.norm(w.points, axis=1) - 1)) <= 1e-14
    with pytest.raises(ParameterError):
        make_initial({"kind": "spiral"}, grid)


def test_gaussian_twist_is_localised():
    grid = GridSpec(1024, 40.0)
    u = make_initial({"kind": "gaussian_twist", "amplitude": 0.2, "width": 0.5}, grid)
    assert np.max(np.abs(np.linalg.norm(u.points, axis=1) - 1)) <= 1e-14
    with warnings.catch_warnings():
        warnings.simplefilter("error", DecayWarning)
        assert check_decay(u) < 1e-10
    # the tilt angle at the centre is the amplitude
    mid = grid.num_points // 2
    assert np.arcsin(-u.points[mid, 2]) == pytest.approx(0.2, abs=1e-12)


def test_make_initial_from_file(tmp_path):
    grid = GridSpec(32, 2 * np.pi)
    u = make_initial({"kind": "great_circle"}, grid)
    write_curve(tmp_path / "u.curve", u)
    back = make_initial({"kind": "from_file", "path": str(tmp_path / "u.curve")}, grid)
    np.testing.assert_allclose(back.points, u.points, atol=1e-16)
    with pytest.raises(ParameterError, match="grid"):
        make_initial({"kind": "from_file", "path": str(tmp_path / "u.curve")}, GridSpec(64, 1.0))
    (tmp_path / "bad.curve").write_bytes(b"garbage")
    with pytest.raises(ParameterError, match="byte offset"):
        make_initial({"kind": "from_file", "path": str(tmp_path / "bad.curve")}, grid)


def test_seed_scheme():
    a = seed_for(7, 3).normal(size=4)
    b = np.random.default_rng(np.random.SeedSequence([7, 3])).normal(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, seed_for(7, 4).normal(size=4))


def test_run_flow_writes_manifest(tmp_path):
    cfg = load_config(None, SMALL + ["flow_params.preset=integrable_PDL"])
    status, summary = run(cfg, tmp_path)
    assert status == 0 and summary["stationary"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["config_hash"] == cfg.config_hash()
    assert manifest["library_version"] == "0.1.0"
    assert manifest["wall_clock_seconds"] >= 0
    for name in ("gauge_energy.csv", "report.json", "trajectory/metadata.json",
                 "trajectory/defect.csv", "trajectory/energy.csv"):
        assert (tmp_path / name).exists()


def test_run_records_runtime_errors(tmp_path):
    cfg = load_config(None, ["grid.num_points=32", "T=0.01", "flow_params.delta=0.01",
                             "stepper.method=picard", "stepper.dt=1e-3",
                             "initial_data.kind=perturbed_great_circle",
                             "initial_data.amplitude=0.05"])
    status, _ = run(cfg, tmp_path)
    assert status == 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "error" and manifest["failed_step"] == 1
    assert "contraction failure" in manifest["error"]


def test_epsilon_sweep_csv(tmp_path):
    cfg = load_config(None, ["experiment=epsilon_sweep", "grid.num_points=16", "T=0.005",
                             "flow_params.preset=integrable_PDL",
                             "initial_data.kind=perturbed_great_circle"])
    status, summary = run(cfg, tmp_path)
    assert status == 0
    with open(tmp_path / "epsilon_sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epsilon", "C4_gauged", "C_ungauged", "max_defect", "sup_distance_to_next"]
    assert [float(r[0]) for r in rows[1:]] == [0.1, 0.05, 0.025]
    assert len(summary["C4_gauged"]) == 3


def test_threads_do_not_change_results(tmp_path):
    base = ["experiment=delta_sweep", "grid.num_points=16", "T=0.002",
            "initial_data.kind=perturbed_great_circle", "stepper.method=picard"]
    run(load_config(None, base + ["threads=1"]), tmp_path / "a")
    run(load_config(None, base + ["threads=3"]), tmp_path / "b")
    assert ((tmp_path / "a" / "delta_sweep.csv").read_bytes()
            == (tmp_path / "b" / "delta_sweep.csv").read_bytes())


def test_commutator_experiment(tmp_path):
    cfg = load_config(None, ["experiment=commutator", "commutator.num_points=512",
                             "commutator.carriers=[16, 32]", "commutator.radii=[4]"])
    status, payload = run(cfg, tmp_path)
    assert status == 0
    assert payload["roundtrip_error"] < 1e-11
    assert (tmp_path / "commutator.csv").exists()


def test_cli(tmp_path, capsys):
    assert main(["flow", "--set", "flow_params.a=0", "--out", str(tmp_path / "x")]) == 2
    assert "FlowParams invariant" in capsys.readouterr().err
    assert main(["flow", "--set", "grid.bogus=1"]) == 2
    assert "grid.bogus" in capsys.readouterr().err
    assert main(["flow", "--config", str(tmp_path / "missing.yaml")]) == 2
    code = main(["flow", "--set", "grid.num_points=16", "--set", "T=0.01",
                 "--set", "flow_params.preset=fukumoto_filament", "--seed", "4",
                 "--out", str(tmp_path / "ok")])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["stationary"] is True
    manifest = json.loads((tmp_path / "ok" / "manifest.json").read_text())
    assert manifest["seed"] == 4
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_great_circle_helper_formula():
    grid = GridSpec(16, 2 * np.pi)
    np.testing.assert_allclose(great_circle(grid)[:, 0], np.cos(grid.x), atol=1e-15)
