import csv
import subprocess
import sys

import pytest

from c0ripg.cli import RunConfig, build_parser, config_from_args, main


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_mms_outputs(tmp_path):
    assert main(["mms", "--N", "4", "8", "16", "--p", "2", "--out", str(tmp_path)]) == 0
    base = tmp_path / "mms" / "mms"
    assert {p.name for p in base.iterdir()} == {"4_2.csv", "8_2.csv", "16_2.csv",
                                               "summary.csv", "rates.csv"}
    rows = _read(base / "summary.csv")
    assert [r["N"] for r in rows] == ["4", "8", "16"]
    assert float(rows[-1]["div_max"]) <= 1e-10 * float(rows[-1]["u_max"])
    rates = {r["norm"]: float(r["slope"]) for r in _read(base / "rates.csv")}
    assert set(rates) == {"L2_phi", "L2_u", "H1_u", "DG"}
    # 17 significant digits
    assert len(rows[0]["DG"].replace(".", "").lstrip("0")) >= 15


def test_delta_sweep(tmp_path):
    with pytest.warns(UserWarning):
        main(["delta-sweep", "--N", "8", "--p", "2", "--delta", "0.05", "2.0",
              "--out", str(tmp_path)])
    rows = _read(tmp_path / "delta_sweep" / "mms" / "8_2.csv")
    assert [r["spd"] for r in rows] == ["false", "true"]
    assert rows[0]["DG"] == "nan" and float(rows[1]["DG"]) > 0


def test_benchmark_and_reproducibility(tmp_path):
    args = ["benchmark", "--case", "BB1a", "--N", "4", "--p", "2", "--max-picard", "60"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    a = tmp_path / "a" / "benchmark" / "BB1a"
    b = tmp_path / "b" / "benchmark" / "BB1a"
    assert (a / "4_2.csv").read_bytes() == (b / "4_2.csv").read_bytes()
    row = _read(a / "summary.csv")[0]
    assert list(row) == ["case", "N", "p", "delta", "dofs", "Nu", "u_rms", "W", "Phi", "Delta",
                         "eps_Nu", "eps_urms", "converged", "iterations"]
    assert row["case"] == "BB1a" and float(row["Nu"]) > 1
    trace = _read(a / "4_2_picard.csv")
    assert list(trace[0]) == ["iter", "Nu", "u_rms", "dT_inf", "mu_min", "mu_max"]


def test_benchmark_nonconvergence_is_reported(tmp_path):
    main(["benchmark", "--case", "T4", "--N", "4", "--p", "2", "--max-picard", "2",
          "--out", str(tmp_path)])
    row = _read(tmp_path / "benchmark" / "T4" / "summary.csv")[0]
    assert row["converged"] == "false" and row["iterations"] == "2"


def test_tracers(tmp_path):
    main(["tracers", "--N", "4", "--p", "2", "--particles", "16", "--steps", "3",
          "--dt", "1e-3", "--snapshot-every", "3", "--out", str(tmp_path)])
    base = tmp_path / "tracers" / "BB1a"
    rows = _read(base / "4_2.csv")
    assert [r["step"] for r in rows] == ["0", "1", "2", "3"]
    assert float(rows[0]["mean"]) == 256 / 32
    snaps = _read(base / "4_2_particles.csv")
    assert {r["step"] for r in snaps} == {"0", "3"} and len(snaps) == 2 * 256


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('N = [4, 8]\np = [3]\ndelta = [4.0]\ncase = "T2"\nout = "somewhere"\n')
    args = build_parser().parse_args(["benchmark", "--config", str(cfg), "--N", "6"])
    c = config_from_args(args)
    assert c.N == [6] and c.p == [3] and c.delta == [4.0] and c.case == "T2"
    assert c.experiment == "benchmark" and c.out == "somewhere"
    cfg.write_text("bogus = 1\n")
    with pytest.raises(ValueError):
        config_from_args(build_parser().parse_args(["mms", "--config", str(cfg)]))


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(case="BB9")
    with pytest.raises(ValueError):
        RunConfig(experiment="nope")
    with pytest.raises(ValueError):
        RunConfig(p=[1])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["benchmark", "--case", "BB9"])


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "c0ripg", "mms", "--N", "2", "--p", "2",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "mms" / "mms" / "2_2.csv").exists()
