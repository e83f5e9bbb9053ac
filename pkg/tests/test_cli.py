import csv
import io
import json
import subprocess
import sys

import pytest

from fhe_iosim.cli import main
from fhe_iosim.trace_io import read_trace
from fhe_iosim.workload import trace_summary


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_generate_and_summary(capsys, tmp_path, reg):
    out = tmp_path / "t.jsonl"
    code, stdout, _ = run(capsys, "generate", "--profile", "sharp/resnet20", "--ops", "10000", "--seed", "7", "--out", str(out))
    assert code == 0 and stdout.strip() == str(out)
    summary = trace_summary(read_trace(out))
    prof = reg.get_profile("sharp/resnet20")
    assert summary.evk_bytes_per_cycle == pytest.approx(prof.evk_bytes_per_cycle, rel=0.01)
    code, stdout, _ = run(capsys, "summary", str(out))
    assert code == 0 and json.loads(stdout)["distinct_evk_count"] == 101


def test_generate_into_directory(capsys, tmp_path):
    code, stdout, _ = run(capsys, "generate", "--profile", "helr", "--accel", "sharp", "--out", str(tmp_path))
    assert code == 0 and stdout.strip().endswith("sharp_helr_s0.trace.jsonl")


def test_unknown_profile_exit_2(capsys):
    code, _, err = run(capsys, "generate", "--profile", "sharp/bert")
    assert code == 2
    assert "sharp/resnet20" in err and "tensorfhe/helr" in err


def test_too_few_ops_exit_2(capsys):
    code, _, err = run(capsys, "generate", "--profile", "sharp/resnet20", "--ops", "5")
    assert code == 2 and "--ops" in err


def test_argparse_error_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "--storage", "tape"])
    assert info.value.code == 2


def test_contradictory_accel(capsys):
    code, _, _ = run(capsys, "run", "--profile", "sharp/helr", "--accel", "tensorfhe")
    assert code == 2


def test_run_rdma_helr(capsys):
    code, stdout, _ = run(capsys, "run", "--storage", "rdma", "--hosts", "1", "--profile", "sharp/helr")
    assert code == 0
    (row,) = rows(stdout)
    assert float(row["slowdown"]) == pytest.approx(357.2, rel=0.15)
    assert list(row) == "app,accel,storage,link,hosts,hit_ratio,compute_s,io_s,comm_s,total_s,slowdown,speedup".split(",")


def test_run_json_and_overrides(capsys):
    code, stdout, _ = run(capsys, "run", "--profile", "sharp/resnet20", "--storage", "pcie5", "--hosts", "32",
                          "--link", "fastfabric", "--hit-ratio", "0.5", "--json")
    assert code == 0
    row = json.loads(stdout)
    assert row["hosts"] == 32 and row["link"] == "fastfabric" and row["speedup"] > 1
    code, stdout, _ = run(capsys, "run", "--profile", "sharp/resnet20", "--storage-bandwidth", str(2**40), "--json")
    assert json.loads(stdout)["io_s"] == pytest.approx(json.loads(
        run(capsys, "run", "--profile", "sharp/resnet20", "--storage", "hbm", "--json")[1])["io_s"])


def test_run_baseline_mode(capsys):
    code, stdout, _ = run(capsys, "run", "--profile", "sharp/helr", "--mode", "baseline")
    (row,) = rows(stdout)
    assert float(row["io_s"]) == 0.0 and float(row["slowdown"]) == pytest.approx(1.0)


def test_run_dnum_override(capsys):
    a = json.loads(run(capsys, "run", "--profile", "sharp/helr", "--json")[1])
    b = json.loads(run(capsys, "run", "--profile", "sharp/helr", "--dnum", "6", "--json")[1])
    # aggregate rates are fixed by the profile; dnum only reshapes per-op cycles
    assert a["total_s"] == pytest.approx(b["total_s"], rel=1e-12)
    cfg = json.loads(run(capsys, "generate", "--profile", "sharp/helr", "--dnum", "6", "--dry-run")[1])
    assert cfg["resolved"]["params"]["dnum"] == 6


def test_run_trace_clock_mismatch(capsys, tmp_path):
    out = tmp_path / "t.jsonl"
    run(capsys, "generate", "--profile", "sharp/helr", "--out", str(out))
    code, _, err = run(capsys, "run", "--trace", str(out), "--clock", "2000000000")
    assert code == 1 and "--rescale-clock" in err
    code, _, _ = run(capsys, "run", "--trace", str(out), "--clock", "2000000000", "--rescale-clock")
    assert code == 0


def test_malformed_trace_exit_1(capsys, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{}\n")
    code, _, err = run(capsys, "summary", str(bad))
    assert code == 1 and "line 1" in err


def test_sweep_hit_ratio(capsys):
    code, stdout, _ = run(capsys, "sweep", "--profile", "sharp/resnet20", "--axis", "hit-ratio",
                          "--from", "0", "--to", "1", "--step", "0.01")
    assert code == 0
    table = rows(stdout)
    assert len(table) == 101
    io_s = [float(r["io_s"]) for r in table]
    assert all(b < a for a, b in zip(io_s, io_s[1:]))
    assert float(table[-1]["hit_ratio_value"]) == 1.0


def test_sweep_other_axes(capsys):
    code, stdout, _ = run(capsys, "sweep", "--profile", "sharp/helr", "--axis", "storage")
    assert [r["storage"] for r in rows(stdout)] == ["hbm", "ddr5", "pcie5", "rdma"]
    code, stdout, _ = run(capsys, "sweep", "--profile", "sharp/helr", "--axis", "hosts", "--values", "1,2,32")
    assert [r["hosts"] for r in rows(stdout)] == ["1", "2", "32"]
    code, stdout, _ = run(capsys, "sweep", "--profile", "sharp/helr", "--axis", "link", "--hosts", "8")
    assert [r["link"] for r in rows(stdout)] == ["ethernet", "fastfabric"]


def test_sweep_failure_exit_1(capsys):
    code, stdout, err = run(capsys, "sweep", "--profile", "sharp/helr", "--axis", "hit-ratio", "--values", "0.1,2")
    assert code == 1
    assert len(rows(stdout)) == 2 and "ConfigError" in stdout


def test_sweep_bad_values_exit_2(capsys):
    assert run(capsys, "sweep", "--profile", "sharp/helr", "--axis", "hosts", "--values", "a,b")[0] == 2
    assert run(capsys, "sweep", "--profile", "sharp/helr", "--axis", "hit-ratio")[0] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["presets", "--dry-run"],
        ["generate", "--profile", "sharp/helr", "--dry-run"],
        ["summary", "whatever.jsonl", "--dry-run"],
        ["run", "--profile", "tensorfhe/resnet20", "--hosts", "4", "--dry-run"],
        ["sweep", "--profile", "sharp/helr", "--axis", "hit-ratio", "--values", "0,1", "--dry-run"],
        ["calibrate", "--dry-run"],
        ["experiment", "all", "--dry-run"],
    ],
)
def test_dry_run_everywhere(capsys, argv):
    code, stdout, _ = run(capsys, *argv)
    assert code == 0
    cfg = json.loads(stdout)
    assert cfg["subcommand"] == argv[0] and "resolved" in cfg


def test_dry_run_validates(capsys):
    assert run(capsys, "run", "--profile", "sharp/helr", "--hit-ratio", "1.5", "--dry-run")[0] == 2
    assert run(capsys, "run", "--profile", "sharp/helr", "--hosts", "0", "--dry-run")[0] == 2


def test_presets_listing(capsys):
    code, stdout, _ = run(capsys, "presets", "storage")
    assert json.loads(stdout) == {"storage": {
        "ddr5": 384829069722, "hbm": 1099511627776, "pcie5": 68719476736, "rdma": 13421772800}}


def test_calibrate(capsys, tmp_path):
    code, stdout, _ = run(capsys, "calibrate", "--write", "--out", str(tmp_path))
    assert code == 0
    assert "comm_volume_base_bytes,sharp/resnet20,49233870968" in stdout
    assert json.loads((tmp_path / "calibration.json").read_text())["compute_scaling_alpha"]["tensorfhe"] > 0
    assert run(capsys, "calibrate", "--write")[0] == 2


def test_experiment_files(capsys, tmp_path):
    code, stdout, err = run(capsys, "experiment", "E4", "--out", str(tmp_path))
    assert code == 0 and stdout == ""
    assert (tmp_path / "E4.csv").is_file()
    assert "E4:" in err
    first = (tmp_path / "E4.csv").read_bytes()
    run(capsys, "experiment", "E4", "--out", str(tmp_path))
    assert (tmp_path / "E4.csv").read_bytes() == first


def test_experiment_e1_stdout(capsys):
    code, stdout, _ = run(capsys, "experiment", "E1")
    table = rows(stdout)
    slowdowns = [r for r in table if r["metric"] == "slowdown"]
    assert code == 0 and len(slowdowns) == 16
    assert all(r["pass"] == "true" for r in table if r["target"])


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fhe_iosim", "run", "--profile", "sharp/helr"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("app,accel,storage")


def test_output_is_deterministic(capsys):
    argv = ["sweep", "--profile", "tensorfhe/helr", "--axis", "hosts", "--values", "1,4,32", "--workers", "3"]
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]
