"""tests for experiment descriptions, result files, the pipeline and the command line"""

import copy
import csv
import json
import os

import numpy as np
import pytest

from rsmpc.cli import get_args, main
from rsmpc.constants import EXIT_CONFIG_ERROR, EXIT_OK
from rsmpc.experiment import io, pipeline
from rsmpc.experiment.building import building_system, sinusoidal_mean
from rsmpc.experiment.config import config_from_dict, load_config
from rsmpc.experiment.pipeline import (
    COVERAGE_LEVELS,
    RSMPC,
    base_set,
    build_noise,
    build_state_noise,
    build_system,
    cells,
    check,
    containment_agreement,
    coverage_threshold,
    mean_disturbance,
    recursive_feasibility,
    rprs_coverage,
    run,
    run_cell,
    synthesize,
    theta_true_for,
)
from rsmpc.rprs.cache import ArtifactCache
from rsmpc.sim.closed_loop import ClosedLoopTrace
from rsmpc.sim.metrics import relative_variation, running_l2_average
from rsmpc.util.custom_exceptions import ConfigError


def tiny_description(tmp_path) -> dict:
    """scalar plant with a short horizon and two seeds"""
    return {
        "name": "tiny",
        "system": {
            "A": [[[0.5]], [[0.1]]],
            "B": [[[1.0]], [[0.0]]],
            "Theta": {"H": [[1.0], [-1.0]], "h": [1.0, 1.0]},
            "X": {"H": [[1.0], [-1.0]], "h": [1.0, 1.0]},
            "U": {"H": [[1.0], [-1.0]], "h": [1.0, 1.0]},
        },
        "noise": {"covariance": [[0.0001]], "covariance_kind": "iid", "family": "gaussian"},
        "controller": {
            "N": 3,
            "Q": [[1.0]],
            "R": [[1.0]],
            "gain": {"method": "lqr"},
            "theta_bar": [0.0],
            "x0": [0.2],
        },
        "rprs": {"shape": "halfspaces", "objective": "logdet", "T": 5},
        "experiment": {
            "alphas": [0.5],
            "p_levels": [0.8],
            "seeds": [0, 1],
            "T": 5,
            "theta_true": [0.5],
            "baseline": True,
        },
        "output": {"directory": str(tmp_path / "results")},
        "cache": {"enabled": True, "directory": str(tmp_path / "cache")},
    }


def fake_trace(steps: int = 2) -> ClosedLoopTrace:
    x = np.zeros((steps + 1, 2))
    return ClosedLoopTrace(
        seed=3,
        theta_true=np.zeros(1),
        x=x,
        u=np.ones((steps, 1)),
        v0=np.zeros((steps, 1)),
        s0=np.zeros((steps, 2)),
        alpha0=np.zeros(steps),
        theta_bar=np.zeros((steps, 1)),
        status=["optimal"] * steps,
        stage_cost=np.ones(steps),
        state_flags=np.ones((steps + 1, 4), dtype=bool),
        input_flags=np.ones((steps, 2), dtype=bool),
    )


def test_load_shipped_configs():
    """both shipped descriptions load by name"""
    di = load_config("double_integrator")
    assert di.name == "double_integrator", "name should be read"
    assert len(di.experiment.seeds) == 1000, "seed range should be expanded"
    assert di.experiment.p_levels == [0.8, 0.85, 0.9], "probability levels should be read"
    building = load_config("building")
    assert building.experiment.p_u == 0.99, "input level should be read from TOML"
    assert building.noise["covariance_kind"] == "ar1", "AR(1) noise should be kept"
    assert len(cells(building)) == 18, "3 alphas times 6 levels"


def test_content_hash():
    """hash depends on the experiment, not on the file"""
    di = load_config("double_integrator")
    assert di.content_hash() == load_config("double_integrator").content_hash(), "hash should be stable"
    other = di.with_seeds([1, 2])
    assert other.experiment.seeds == [1, 2], "seeds should be replaced"
    assert other.content_hash() != di.content_hash(), "seeds change the hash"
    assert len(di.experiment.seeds) == 1000, "original description should be untouched"


@pytest.mark.parametrize(
    "block, key, value",
    [
        ("experiment", "p_levels", [1.5]),
        ("experiment", "alphas", []),
        ("experiment", "seeds", "all"),
        ("experiment", "theta_true", "median"),
        ("controller", "N", 0),
        ("controller", "estimator", "kalman"),
        ("rprs", "shape", "sphere"),
        ("rprs", "T", 0),
        ("noise", "family", "cauchy"),
    ],
)
def test_invalid_descriptions(tmp_path, block, key, value):
    """schema violations raise ConfigError"""
    data = tiny_description(tmp_path)
    data[block][key] = value
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_invalid_structure(tmp_path):
    """missing blocks and bad generators"""
    data = tiny_description(tmp_path)
    del data["rprs"]
    with pytest.raises(ConfigError):
        config_from_dict(data)
    data = tiny_description(tmp_path)
    data["system"] = {"generator": "factory"}
    with pytest.raises(ConfigError):
        config_from_dict(data)
    data = tiny_description(tmp_path)
    data["noise"].update({"covariance_kind": "ar1", "rho": 1.0})
    with pytest.raises(ConfigError):
        config_from_dict(data)
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.toml"
    bad.write_text("name = [", encoding="utf8")
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_build_system_scales_theta():
    """Theta of the double integrator is alpha [-1, 0]"""
    cfg = load_config("double_integrator")
    sys = build_system(cfg, 0.2, 0.85)
    assert np.allclose(np.sort(sys.theta_vertices()[:, 0]), [-0.2, 0.0]), "Theta should be [-0.2, 0]"
    assert sys.p_x == 0.85 and sys.p_u == 0.85, "input level defaults to the state level"
    assert np.allclose(theta_true_for(cfg, sys, 4), [0.0]), "true parameter is given"
    assert np.allclose(build_system(cfg, 0.0, 0.8).theta_vertices(), 0.0), "alpha 0 gives a point"


def test_base_set(tmp_path):
    """unit box by default, half widths from base_box"""
    cfg = config_from_dict(tiny_description(tmp_path))
    assert base_set(cfg, 1) == base_set(cfg, 1), "default base should be deterministic"
    assert np.allclose(base_set(cfg, 1).h, 1.0), "base set has unit offsets"
    data = tiny_description(tmp_path)
    data["controller"]["base_box"] = [-1.0]
    with pytest.raises(ConfigError):
        base_set(config_from_dict(data), 1)


def test_building_generator():
    """rows of A plus B_w sum to one in deviation coordinates"""
    description = building_system()
    A0 = np.array(description["A"][0])
    B_w = np.array(description["B_w"])
    assert np.allclose(A0.sum(axis=1) + B_w[:, 0], 1.0), "rows should sum to one"
    for A in description["A"][1:]:
        assert np.allclose(np.array(A).sum(axis=1), 0.0), "perturbations move heat between rooms"
    assert len(description["A"]) == 3 and len(description["B"]) == 3, "two uncertain conductances"
    assert np.allclose(sinusoidal_mean(3, 1.0, 2.0, 4.0), [1.0, 3.0, 1.0]), "profile is wrong"


def test_building_noise():
    """AR(1) noise is expanded to a full covariance"""
    cfg = load_config("building")
    noise = build_noise(cfg, 6)
    assert noise.covariance_kind == "full", "AR(1) noise should become full"
    assert noise.covariance.shape == (6, 6), "one entry per step"
    assert noise.covariance[0, 1] == pytest.approx(4.0 * 0.8), "lag one covariance is rho Sigma"
    assert noise.mean[0] == pytest.approx(-11.0), "profile starts at the offset"
    sys = build_system(cfg, 1.0, 0.9)
    assert sys.p_u == 0.99, "input level comes from the description"
    w_bar = mean_disturbance(cfg, sys, 4)
    assert w_bar.shape == (4, 4), "mean disturbance is T x n"
    assert np.allclose(w_bar[0], -11.0 * 0.02), "B_w scales the outdoor deviation"
    assert np.allclose(theta_true_for(cfg, sys, 0), 0.0, atol=1e-7), "center of the box is the origin"


def test_result_paths():
    """folder and file names"""
    assert io.run_folder("out", "di", "abcdef0123456789") == os.path.join("out", "di_abcdef012345"), "run folder is wrong"
    assert io.cell_folder("run", 0.2, 0.8) == os.path.join("run", "alpha_0.2_p_0.8"), "cell folder is wrong"
    assert io.trace_filename("abcdef0123456789", "rsmpc", 7) == "abcdef012345_rsmpc_seed_7.csv", "trace name is wrong"


def test_write_trace_csv(tmp_path):
    """one row per state, no input on the last row"""
    file_name = str(tmp_path / "traces" / "trace.csv")
    io.write_trace_csv(fake_trace(2), file_name)
    with open(file_name, "r", encoding="utf8", newline="") as in_file:
        rows = list(csv.DictReader(in_file))
    assert len(rows) == 3, "T+1 rows expected"
    assert rows[0]["u0"] == "1.0" and rows[2]["u0"] == "", "last row has no input"
    assert rows[1]["state_ok"] == "1", "flags are written as integers"
    assert {"k", "x0", "x1", "s0", "s1", "alpha", "status", "stage_cost"} <= set(rows[0]), "columns are missing"


def test_write_table(tmp_path):
    """sweep table as CSV and JSON"""
    rows = [{column: None for column in io.TABLE_COLUMNS} | {"alpha": 0.1, "extra": 1}]
    io.write_table(rows, str(tmp_path / "sweep"))
    with open(tmp_path / "sweep" / "table.csv", "r", encoding="utf8", newline="") as in_file:
        reader = csv.DictReader(in_file)
        assert reader.fieldnames == io.TABLE_COLUMNS, "table columns are wrong"
        assert next(reader)["alpha"] == "0.1", "cell value is wrong"
    with open(tmp_path / "sweep" / "table.json", "r", encoding="utf8") as in_file:
        assert json.load(in_file)["cells"][0]["extra"] == 1, "JSON keeps every field"


def test_cli_arguments():
    """argument parsing"""
    args = get_args(["run", "--config", "building", "--seed", "3", "--no-cache"])
    assert args.command == "run" and args.seed == 3 and args.no_cache, "arguments are wrong"
    assert args.jobs == 1 and not args.full, "defaults are wrong"
    with pytest.raises(SystemExit):
        get_args(["plot", "--config", "building"])


def test_cli_config_error(tmp_path, capsys):
    """invalid descriptions exit with 4"""
    assert main(["synth", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG_ERROR, "missing file"
    data = tiny_description(tmp_path)
    data["controller"]["N"] = -1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data), encoding="utf8")
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG_ERROR, "invalid horizon"
    assert "config_error" in capsys.readouterr().out, "status should be printed"


def test_coverage_threshold():
    """coverage passes above p less 1.5 binomial standard deviations"""
    assert COVERAGE_LEVELS == [0.8, 0.9, 0.95], "coverage is checked at three levels"
    assert coverage_threshold(0.8, 10000) == pytest.approx(0.794), "0.8 - 1.5 * 0.004"
    assert coverage_threshold(0.95, 10000) == pytest.approx(0.95 - 1.5 * np.sqrt(0.0475 / 10000)), (
        "threshold at 0.95 is wrong"
    )


def test_recursive_feasibility_counts_candidates():
    """failed shifted candidates fail the check like late infeasible steps"""
    feasible = fake_trace(3)
    feasible.candidate_feasible = [True, True]
    assert recursive_feasibility([feasible]).passed, "feasible candidates should pass"

    rejected = fake_trace(3)
    rejected.candidate_feasible = [True, False]
    result = recursive_feasibility([feasible, rejected])
    assert not result.passed, "an infeasible candidate should fail the check"
    assert result.value == 1, "one failure expected"

    halted = fake_trace(2)
    halted.halted = True
    halted.status = ["optimal", "infeasible"]
    assert recursive_feasibility([halted]).value == 1, "late infeasible steps should count"


@pytest.mark.slow
def test_synthesis_is_cached(tmp_path):
    """second synthesis reads the cache"""
    cfg = config_from_dict(tiny_description(tmp_path))
    cache = ArtifactCache(str(tmp_path / "cache"))
    first = synthesize(cfg, 0.5, 0.8, cache=cache)
    assert not first.from_cache, "first synthesis computes"
    second = synthesize(cfg, 0.5, 0.8, cache=cache)
    assert second.from_cache, "second synthesis reads the cache"
    assert second.key == first.key, "same inputs, same key"
    assert np.allclose(second.K, first.K), "gain should survive"
    assert second.terminal.polytope == first.terminal.polytope, "terminal set should survive"
    baseline = synthesize(cfg, 0.5, 0.8, baseline=True, cache=cache)
    assert baseline.key != first.key, "baseline has its own entry"
    assert len(baseline.sys.theta_vertices()) == 1, "baseline ignores the mismatch"


@pytest.mark.slow
def test_run_tiny_experiment(tmp_path):
    """one cell, two seeds, both controllers"""
    cfg = config_from_dict(tiny_description(tmp_path))
    result = run(cfg, cache=ArtifactCache(str(tmp_path / "cache")))
    assert result.rsmpc["runs"] == 2, "both seeds should run"
    assert result.rsmpc["infeasible"] == 0, "no run should be infeasible"
    assert result.baseline is not None, "baseline should run"
    assert result.cost_increase is not None, "costs should be paired"
    folder = io.cell_folder(io.run_folder(cfg.output_dir, cfg.name, cfg.content_hash()), 0.5, 0.8)
    assert os.path.isfile(os.path.join(folder, "summary.json")), "cell summary should be written"
    assert len(os.listdir(os.path.join(folder, "traces"))) == 4, "one trace per seed and controller"


@pytest.mark.slow
def test_cli_synth(tmp_path, capsys):
    """synth on a tiny description"""
    data = copy.deepcopy(tiny_description(tmp_path))
    data["experiment"]["baseline"] = False
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(data), encoding="utf8")
    assert main(["synth", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_OK, "synth should succeed"
    summaries = json.loads(capsys.readouterr().out)
    assert len(summaries) == 1 and summaries[0]["variant"] == "rsmpc", "one controller expected"


def shipped_description(name: str, tmp_path, controller=None, rprs=None, **experiment) -> dict:
    """a shipped description with smaller settings and outputs under tmp_path"""
    data = copy.deepcopy(load_config(name).raw)
    data["controller"].update(controller or {})
    data["rprs"].update(rprs or {})
    data["experiment"].update(experiment)
    data["output"] = {"directory": str(tmp_path / "results")}
    data["cache"] = {"enabled": True, "directory": str(tmp_path / "cache")}
    return data


@pytest.mark.slow
def test_check_runs_candidates(tmp_path, monkeypatch):
    """full check covers every coverage level and checks the shifted candidates"""
    seen = []

    def recording_run_cell(cfg, *args, **kwargs):
        seen.append(cfg.experiment.check_candidates)
        return run_cell(cfg, *args, **kwargs)

    monkeypatch.setattr(pipeline, "run_cell", recording_run_cell)
    data = tiny_description(tmp_path)
    data["experiment"]["baseline"] = False
    results = {item.name: item for item in check(config_from_dict(data), full=True)}
    assert seen == [True], "closed loop runs should check the shifted candidates"
    for p in COVERAGE_LEVELS:
        item = results[f"rprs coverage p={p:g}"]
        assert item.threshold == pytest.approx(coverage_threshold(p, 10000)), f"threshold at {p} is wrong"
    assert results["recursive feasibility"].passed, "tiny runs should stay feasible"


@pytest.mark.slow
def test_double_integrator_synthesis(tmp_path):
    """dual containment agreement, RPRS coverage at every level and the
    terminal set of the double integrator at the largest mismatch"""
    data = shipped_description("double_integrator", tmp_path, controller={"N": 10}, rprs={"T": 20})
    cfg = config_from_dict(data)
    artifacts = synthesize(cfg, 0.4, 0.8)
    assert not artifacts.tightening.any_empty(), "tightened sets should be nonempty"

    assert containment_agreement(artifacts, 100) == 100, "dual and primal tests should agree"

    _, noise = build_state_noise(cfg, artifacts.sys, 20).split_mean()
    for p in COVERAGE_LEVELS:
        coverage = rprs_coverage(artifacts, noise, 10000, 20, p_x=p)
        assert coverage >= coverage_threshold(p, 10000), f"coverage at {p} is {coverage}"

    assert len(artifacts.terminal.polytope) > 0, "terminal set should be described"
    assert artifacts.terminal.contains(np.zeros(2), 0.0), "terminal set should contain the origin"
    assert artifacts.invariance.passed, "terminal set should be invariant"


@pytest.mark.slow
def test_double_integrator_recursive_feasibility(tmp_path):
    """runs from the origin with theta_true sampled in Theta stay feasible and
    every shifted candidate passes the feasibility test"""
    data = shipped_description(
        "double_integrator",
        tmp_path,
        controller={"N": 10},
        rprs={"T": 20},
        seeds={"start": 0, "count": 100},
        T=30,
        theta_true="sample",
        baseline=False,
        check_candidates=True,
    )
    result, traces = run_cell(config_from_dict(data), 0.4, 0.8)
    assert result.rsmpc["infeasible"] == 0, "no step should be infeasible"
    assert recursive_feasibility(traces[RSMPC]).passed, "recursive feasibility should hold"
    assert result.rsmpc["candidate_feasible"], "every shifted candidate should be feasible"
    assert all(len(t.candidate_feasible) == t.steps - 1 for t in traces[RSMPC]), (
        "candidates should be checked from step 1 on"
    )


@pytest.mark.slow
def test_double_integrator_running_average(tmp_path):
    """the running l2 average stabilizes and grows with the size of Theta"""
    data = shipped_description(
        "double_integrator",
        tmp_path,
        controller={"N": 5},
        rprs={"T": 20},
        seeds={"start": 0, "count": 20},
        T=300,
        baseline=False,
    )
    cfg = config_from_dict(data)
    averages = {}
    for alpha in (0.04, 0.4):
        _, traces = run_cell(cfg, alpha, 0.8)
        averages[alpha] = running_l2_average(traces[RSMPC])
        assert relative_variation(averages[alpha]) <= 0.1, f"average at alpha {alpha} should settle"
    assert averages[0.4][-1] >= averages[0.04][-1], "larger Theta should not lower the average"


@pytest.mark.slow
def test_building_properties(tmp_path):
    """nonempty tightening and per-face satisfaction on the building model"""
    data = shipped_description("building", tmp_path, seeds={"start": 0, "count": 200}, baseline=False)
    cfg = config_from_dict(data)
    artifacts = synthesize(cfg, 0.2, 0.9)
    assert not artifacts.tightening.any_empty(), "tightened sets should be nonempty"
    result, _ = run_cell(cfg, 0.2, 0.9)
    margin = 4.0 * np.sqrt(0.9 * 0.1 / 200)
    for face, value in enumerate(result.rsmpc["N_c_per_face"]):
        assert value >= 100.0 * (0.9 - margin), f"face {face} is satisfied {value}% of the time"
