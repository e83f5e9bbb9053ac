import dataclasses
import math

import pytest

from fhe_iosim.engine import simulate
from fhe_iosim.errors import MissingCalibrationError, ParameterError
from fhe_iosim.experiments import (
    REPORT_COLUMNS,
    ExperimentSpec,
    app_mean,
    check,
    default_spec,
    derive_metrics,
    run_experiment,
)
from fhe_iosim.targets import Target


def test_check_kinds():
    assert check(1.1, 1.0, 0.15)["pass"]
    assert not check(1.2, 1.0, 0.15)["pass"]
    assert check(0.91, Target(0.9, "x", 0.02, "abs"))["provenance"] == "x"
    assert check(2.0, 1.0, kind="gt")["pass"] and not check(2.0, 1.0, kind="lt")["pass"]
    with pytest.raises(ParameterError):
        check(1.0, 1.0, 0.1, "sideways")


def test_derive_metrics(reg, small_traces):
    res = simulate(small_traces["sharp/helr"], reg.build_platform("sharp/helr", "ddr5"))
    table = derive_metrics([res], res.total_time_s)
    assert [r["value"] for r in table.rows] == [1.0, 1.0]
    with pytest.raises(ZeroDivisionError):
        derive_metrics([res], 0.0)
    assert app_mean([1.0, 3.0]) == 2.0


def test_spec_validation(reg):
    with pytest.raises(ParameterError):
        default_spec("E9")
    with pytest.raises(ParameterError):
        ExperimentSpec("E1", ()).validate(reg)
    with pytest.raises(Exception):
        ExperimentSpec("E1", ("sharp/nope",)).validate(reg)


def test_e1_shape(tables):
    t = tables["E1"]
    assert len(t.find(metric="slowdown")) == 16
    assert len(t.find(metric="baseline_time_s")) == 4


def test_e2_shape(tables):
    t = tables["E2"]
    assert len(t.find(metric="relative_performance")) == 2 * 4 * 101
    assert len(t.find(metric="mean_required_hit_ratio")) == 4
    for row in t.find(metric="required_hit_ratio_scan"):
        assert row["pass"]


def test_e4_shape(tables):
    t = tables["E4"]
    assert len(t.find(metric="comm_fraction")) == 2 * 6
    for row in t.find(metric="comm_fraction", hosts=1):
        assert row["value"] == 0.0


def test_target_rows_are_complete(tables):
    for t in tables.values():
        for row in t.target_rows():
            assert row["provenance"]
            assert "pass" in row and "error" in row and "tolerance" in row


def test_all_targets_pass(tables):
    for eid, t in tables.items():
        failing = [(r["metric"], r.get("accel"), r.get("app"), r.get("storage")) for r in t.target_rows() if not r["pass"]]
        assert not failing, (eid, failing)


def test_csv_is_reproducible(reg, tables, tmp_path):
    again = run_experiment(default_spec("E4"), reg)
    assert again.to_csv() == tables["E4"].to_csv()
    path = again.write(tmp_path)
    assert path.name == "E4.csv"
    text = path.read_bytes()
    assert text.decode().splitlines()[0] == ",".join(REPORT_COLUMNS)
    assert b"\r" not in text


def test_missing_calibration(reg):
    bare = dataclasses.replace(reg, calibration={})
    with pytest.raises(MissingCalibrationError) as info:
        run_experiment("E4", bare)
    assert "calibrate_comm_volume" in str(info.value)


def test_plot(tables, tmp_path):
    pytest.importorskip("matplotlib")
    from fhe_iosim.experiments import plot_report

    a = plot_report(tables["E1"], tmp_path / "a")
    b = plot_report(tables["E1"], tmp_path / "b")
    assert a.suffix == ".svg"
    assert a.read_bytes() == b.read_bytes()


def test_small_grid_runs_quickly(reg):
    spec = default_spec("E3", hosts=(1, 2), ops=1000, storages=("hbm",))
    table = run_experiment(spec, reg)
    assert all(not math.isnan(r["value"]) for r in table.find(metric="speedup"))
