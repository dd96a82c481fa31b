import json

import numpy as np
import pytest

from backflow_lab import config, utils
from backflow_lab.cli import main
from backflow_lab.color_utils import print_diagnostic
from backflow_lab.config import CSV_COLUMNS, ExitCode
from backflow_lab.errors import ConfigError
from backflow_lab.experiment import ExperimentConfig
from backflow_lab.report import StepRecord, TimePoint, WitnessReport
from backflow_lab.report_io import emit_csv, emit_json, emit_svg, load_json
from backflow_lab.runner import ExperimentRunner


def _config_dict(**outputs):
    return {
        "dynamics": "depolarizing",
        "grid": {"t_start": 0.0, "t_end": 1.0, "n_points": 4},
        "probe": {"n_bar": 2, "lambda_list": [0.9]},
        "solver": {"n_restarts": 1, "seed": 3},
        "outputs": outputs,
    }


def _write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _report(converged=True):
    points = [
        TimePoint(time=0.0, c_value=0.5, pg_inner=1.0, c_projective=0.5, pg_ensemble=1.0,
                  pg_perp=1.0, pg_par=1.0, split_defect=0.0, gap=0.0, restarts_used=4,
                  a_povm=[np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], seesaw_trace=[[0, 1.0]]),
        TimePoint(time=0.5, c_value=1 / 3, pg_inner=5 / 6, c_projective=1 / 3, pg_ensemble=2 / 3,
                  pg_perp=1.0, pg_par=2 / 3, split_defect=1e-17, gap=2e-9, restarts_used=4,
                  converged=converged,
                  a_povm=[np.array([[0.5, 0.1j], [-0.1j, 0.5]]), np.array([[0.5, -0.1j], [0.1j, 0.5]])],
                  seesaw_trace=[[0, 0.8], [1, 5 / 6]]),
    ]
    steps = [StepRecord(t_start=0.0, t_end=0.5, delta_c=-1 / 6, backflow=False, cp_flag=True,
                        min_choi_eig=0.1, tp_defect=1e-16, inversion_condition=1.0)]
    return WitnessReport(lam=0.5, threshold=3e-7, seed=0, p_bar=[0.5, 0.5],
                         dynamics={"kind": "depolarizing", "params": {"rate": 1.0, "dim": 2}},
                         points=points, steps=steps)


def test_config_from_dict(tmp_path):
    cfg = ExperimentConfig.from_dict(_config_dict(csv_path="out/run.csv"), base_dir=str(tmp_path))
    assert cfg.dynamics.kind == "depolarizing"
    assert len(cfg.times) == 4
    assert cfg.d_s == 2
    assert cfg.csv_path == str(tmp_path / "out" / "run.csv")
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.times == cfg.times
    assert again.lambdas == cfg.lambdas


@pytest.mark.parametrize(
    "section, key, value",
    [
        ("probe", "lambda_list", [0.5, 1.0]),
        ("probe", "ancilla_dim", 3),
        ("probe", "base_ensemble", "preset:nope"),
        ("probe", "sigma", "bogus"),
        ("probe", "n_bar", "two"),
        ("grid", "n_points", 1),
        ("solver", "gap_tol", 0.0),
    ],
)
def test_config_rejects_bad_values(section, key, value):
    data = _config_dict()
    data[section][key] = value
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_config_rejects_bad_dynamics():
    for dynamics in (None, "nope", {"kind": "brownian"}):
        data = _config_dict()
        data["dynamics"] = dynamics
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(data)


def test_inline_ensemble_and_sigma():
    data = _config_dict()
    data["probe"]["base_ensemble"] = {
        "probs": [0.25, 0.75],
        "states": [[[1, 0], [0, 0]], {"re": [[0.5, 0], [0, 0.5]], "im": [[0, 0.5], [-0.5, 0]]}],
    }
    data["probe"]["sigma"] = "random:5"
    cfg = ExperimentConfig.from_dict(data)
    ens = cfg.inline_ensemble()
    assert ens.n == 2
    assert abs(ens.states[1].matrix[0, 1] - 0.5j) < 1e-15
    data["probe"]["base_ensemble"]["probs"] = [0.2, 0.2]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_load_rejects_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(str(path))
    with pytest.raises(ConfigError):
        ExperimentConfig.load(str(tmp_path / "missing.json"))


def test_csv_layout(tmp_path):
    path = tmp_path / "run.csv"
    emit_csv(_report(), str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[0] == "time,lambda,c_value,c_projective,pg_ensemble,pg_perp,pg_par,min_choi_eig_step,cp_flag,backflow_flag,gap,restarts_used"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[CSV_COLUMNS.index("cp_flag")] == ""
    second = dict(zip(CSV_COLUMNS, lines[2].split(",")))
    assert second["c_value"] == "0.333333333333"
    assert second["cp_flag"] == "1"
    assert second["backflow_flag"] == "0"
    assert second["restarts_used"] == "4"


def test_csv_flags_unconverged_points(tmp_path):
    path = tmp_path / "run.csv"
    emit_csv(_report(converged=False), str(path))
    lines = path.read_text().splitlines()
    assert lines[0].endswith(",restarts_used,converged")
    assert lines[1].endswith(",1")
    assert lines[2].endswith(",0")


def test_empty_report_writes_header_only(tmp_path):
    report = _report()
    report.points, report.steps = [], []
    path = tmp_path / "empty.csv"
    emit_csv(report, str(path))
    assert path.read_text().splitlines() == [",".join(CSV_COLUMNS)]


def test_json_round_trip(tmp_path):
    path = tmp_path / "run.json"
    report = _report()
    emit_json([report, report], str(path))
    loaded = load_json(str(path))
    assert len(loaded) == 2
    assert loaded[0].to_dict() == report.to_dict()
    assert loaded[0].points[1].c_value == 1 / 3
    assert np.abs(loaded[0].points[1].a_povm[0] - report.points[1].a_povm[0]).max() == 0


def test_svg_is_deterministic(tmp_path):
    first, second = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_svg(_report(), str(first))
    emit_svg(_report(), str(second))
    assert first.read_bytes() == second.read_bytes()
    assert b"<svg" in first.read_bytes()


def test_svg_has_a_single_panel(tmp_path):
    path = tmp_path / "plot.svg"
    emit_svg(_report(), str(path))
    body = path.read_bytes()
    assert b'id="axes_1"' in body
    assert b'id="axes_2"' not in body


def test_verdict_consistency_is_per_step(tmp_path):
    report = _report()
    report.steps.append(StepRecord(t_start=0.5, t_end=1.0, delta_c=1e-3, backflow=True, cp_flag=False))
    report.steps.append(StepRecord(t_start=1.0, t_end=1.5, delta_c=0.0, backflow=False, cp_flag=None))
    records = report.verdict_consistency
    assert [(c.t_start, c.t_end) for c in records] == [(0.0, 0.5), (0.5, 1.0), (1.0, 1.5)]
    assert all(c.sound and c.agrees for c in records)
    assert records[2].cp_flag is None
    summary = report.consistency_summary()
    assert summary["backflow_implies_non_cp"]
    assert summary["coincide"]
    assert summary["indeterminate_steps"] == 1
    assert report.consistent
    assert report.backflow_intervals == [(0.5, 1.0, 1e-3)]

    path = tmp_path / "run.json"
    emit_json(report, str(path))
    payload = json.loads(path.read_text())["reports"][0]
    assert len(payload["verdict_consistency"]) == 3
    assert payload["verdict_consistency"][1]["backflow"] is True


def test_backflow_on_a_cp_step_is_inconsistent():
    report = _report()
    report.steps.append(StepRecord(t_start=0.5, t_end=1.0, delta_c=1e-3, backflow=True, cp_flag=True))
    records = report.verdict_consistency
    assert records[0].sound
    assert not records[1].sound and not records[1].agrees
    assert not report.consistent
    assert report.consistency_summary()["backflow_on_cp_steps"] == 1


def test_runner_writes_outputs(tmp_path):
    data = _config_dict(csv_path="out/run.csv", json_path="out/run.json", svg_path="out/run.svg")
    cfg = ExperimentConfig.from_dict(data, base_dir=str(tmp_path))
    runner = ExperimentRunner(cfg)
    assert runner.run() == ExitCode.OK
    lines = (tmp_path / "out" / "run.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 5
    assert len(load_json(str(tmp_path / "out" / "run.json"))) == 1
    assert (tmp_path / "out" / "run.svg").exists()
    assert runner.reports[0].backflow_intervals == []


def test_cli_exit_codes(tmp_path, capsys):
    good = _write_config(tmp_path, _config_dict())
    assert main(["validate", good]) == ExitCode.OK
    bad_data = _config_dict()
    bad_data["probe"]["lambda_list"] = [1.5]
    bad = _write_config(tmp_path, bad_data, "bad.json")
    assert main(["validate", bad]) == ExitCode.CONFIG_ERROR
    assert main(["run", bad]) == ExitCode.CONFIG_ERROR
    assert main(["run", str(tmp_path / "missing.json")]) == ExitCode.CONFIG_ERROR
    assert "lambda" in capsys.readouterr().err


def test_cli_reports_unwritable_output(tmp_path):
    (tmp_path / "blocker").write_text("")
    path = _write_config(tmp_path, _config_dict(csv_path="blocker/run.csv"))
    assert main(["run", path]) == ExitCode.IO_ERROR


def test_cli_lists_presets(capsys):
    assert main(["presets"]) == ExitCode.OK
    out = capsys.readouterr().out
    for name in config.PRESETS:
        assert name in out


def test_worker_cap(monkeypatch):
    monkeypatch.setattr(utils, "THREADS", 2)
    assert utils.worker_count() == 2
    assert utils.worker_count(8) == 2
    assert utils.worker_count(0) == 1
    assert utils.parallel_map(lambda x: x * x, range(5), workers=4) == [0, 1, 4, 9, 16]


def test_env_parsing(monkeypatch):
    monkeypatch.setenv("BACKFLOW_LAB_THREADS", "3")
    assert config._env_int("BACKFLOW_LAB_THREADS", 1) == 3
    monkeypatch.setenv("BACKFLOW_LAB_THREADS", "-2")
    assert config._env_int("BACKFLOW_LAB_THREADS", 1) == 1
    monkeypatch.setenv("BACKFLOW_LAB_VERBOSE", "yes")
    assert config._env_flag("BACKFLOW_LAB_VERBOSE")


def test_diagnostics_follow_verbose_flag(monkeypatch, capsys):
    monkeypatch.setattr(config, "VERBOSE", False)
    print_diagnostic("[Test] hidden")
    assert "hidden" not in capsys.readouterr().err
    monkeypatch.setattr(config, "VERBOSE", True)
    print_diagnostic("[Test] shown")
    assert "shown" in capsys.readouterr().err


def test_number_formatting():
    assert utils.format_number(None) == ""
    assert utils.format_number(True) == "1"
    assert utils.format_number(0.0) == "0"
    assert utils.format_number(1 / 3) == "0.333333333333"
    assert utils.format_number(12) == "12"
