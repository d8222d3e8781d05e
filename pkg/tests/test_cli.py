import csv
import subprocess
import sys

import pytest

from emaloc.cli import main
from emaloc.pipeline import EXIT_INTERFERENCE, EXIT_NO_CLOCK, EXIT_OK, EXIT_VALIDATION

SILENT = """
[source]
amplitude = 0
position = 2.5, 2.5
[array]
dwell_samples = 4096
guard_samples = 40
[vantage.1]
position = 0, 0
heading_deg = 45
[vantage.2]
position = 5, 0
heading_deg = 135
[estimator]
packets = 2
"""


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_quickstart(tmp_path, capsys):
    assert main(["run", "quickstart", "--out", str(tmp_path)]) == EXIT_OK
    loc = rows(tmp_path / "localization.csv")[0]
    assert float(loc["loc_error_m"]) < 1e-3
    v = rows(tmp_path / "vantages.csv")
    assert len(v) == 2 and v[0]["converged"] == "1"


def test_run_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "quickstart", "--seed", "5", "--out", str(tmp_path / d)]) == EXIT_OK
    for f in ("vantages.csv", "localization.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_interferer_exit_code(tmp_path):
    assert main(["run", "interferer", "--out", str(tmp_path)]) == EXIT_INTERFERENCE


def test_no_clock_exit_code(tmp_path):
    p = tmp_path / "silent.ini"
    p.write_text(SILENT)
    assert main(["run", str(p), "--out", str(tmp_path)]) == EXIT_NO_CLOCK


def test_bad_scenario_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text(SILENT.replace("packets = 2", "packets = zero"))
    assert main(["run", str(p)]) == EXIT_VALIDATION
    assert "estimator.packets" in capsys.readouterr().err


def test_sweep_csv(tmp_path):
    code = main(["sweep", "quickstart", "--axis", "tau", "--values", "0,period", "--seeds", "2",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    out = rows(tmp_path / "sweep_tau.csv")
    assert list(out[0]) == ["axis_value", "seed", "aoa_error_deg", "loc_error_m", "snr_db", "iters", "status"]
    assert [(r["axis_value"], r["seed"]) for r in out] == [("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")]


def test_simulate_estimate_aoa_localize_chain(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert main(["simulate", "quickstart", "--out", str(sim)]) == EXIT_OK
    est = tmp_path / "est"
    assert main(["estimate", str(sim / "vantage1"), "--out", str(est)]) == EXIT_OK
    ch = rows(est / "channel.csv")
    assert len(ch) == 9
    assert float(ch[0]["clock_hz"]) == pytest.approx(3000, abs=1.5)
    assert main(["aoa", str(est / "channel.csv"), "--out", str(est)]) == EXIT_OK
    top = rows(est / "aoa.csv")[0]
    assert abs(float(top["aoa_deg"])) < 0.5
    capsys.readouterr()
    assert main(["localize", "--bearing", "0,0,45", "--bearing", "5,0,135", "--out", str(tmp_path)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "2.5,2.5"


def test_localize_parallel_is_validation_error(tmp_path):
    assert main(["localize", "--bearing", "0,0,90", "--bearing", "5,0,90", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_estimate_missing_capture(tmp_path):
    assert main(["estimate", str(tmp_path / "nothing")]) == EXIT_VALIDATION


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "emaloc.cli", "localize", "--bearing", "0,0,45",
                          "--bearing", "5,0,135", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.strip() == "2.5,2.5"
