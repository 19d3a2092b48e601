import json
import subprocess
import sys

import pytest

from pollroute.cli import main

BASE = ["--lambda", "0.3", "--mu", "0.7"]


def call(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out


def test_static_nash(capsys, tmp_path):
    code, out = call(capsys, "static", "--regime", "noinfo", *BASE, "--c", "6", "--d", "1",
                     "--out", str(tmp_path))
    assert code == 0
    assert '"nash": [0.5]' in out.out
    assert (tmp_path / "static_noinfo.csv").read_text().startswith("p,C,C1,C2\n")
    manifest = json.loads((tmp_path / "static.manifest.json").read_text())
    assert manifest["subcommand"] == "static" and manifest["outputs"]


def test_static_partial_mismatch(capsys, tmp_path):
    code, out = call(capsys, "static", "--regime", "partial", *BASE, "--c", "6", "--d", "4",
                     "--out", str(tmp_path))
    assert code == 0 and json.loads(out.out)["mismatch"] is True


def test_static_single_p(capsys, tmp_path):
    code, out = call(capsys, "static", "--regime", "noinfo", *BASE, "--c", "6", "--d", "1",
                     "--p", "0.5", "--out", str(tmp_path))
    assert json.loads(out.out)["means"]["L11"] == pytest.approx(1.375)


def test_missing_mu_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["static", "--regime", "noinfo", "--lambda", "0.3", "--c", "6", "--d", "1"])
    assert exc.value.code == 2


def test_unstable_params_are_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["individual", "--lambda", "0.9", "--mu", "0.7", "--c", "6", "--d", "1"])
    assert exc.value.code == 2


def test_computation_failure_exit_code(capsys, tmp_path):
    code, out = call(capsys, "social", *BASE, "--imax", "10", "--jmax", "20", "--out", str(tmp_path))
    assert code == 1 and "GridExhausted" in out.err


def test_fluid_summary(capsys, tmp_path):
    code, out = call(capsys, "fluid", *BASE, "--out", str(tmp_path))
    s = json.loads(out.out)
    assert s["alpha"] == pytest.approx(1.5) and s["beta"] == pytest.approx(1 / 3)
    assert (tmp_path / "trajectory.csv").exists()


def test_individual_curve_file(capsys, tmp_path):
    code, _ = call(capsys, "individual", *BASE, "--c", "6", "--d", "1", "--out", str(tmp_path))
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "i,h"
    for line in rows[1:]:
        i, h = map(int, line.split(","))
        assert h <= i - 1


def test_figure2_short(capsys, tmp_path):
    code, out = call(capsys, "figure2", "--irange", "5", "--out", str(tmp_path), "--gnuplot")
    assert code == 0
    rows = (tmp_path / "figure2.csv").read_text().splitlines()
    assert rows[0] == "i,h,g,alpha_i" and len(rows) == 6
    assert [r.split(",")[3] for r in rows[1:]] == ["1.5", "3.0", "4.5", "6.0", "7.5"]
    assert (tmp_path / "figure2.gp").exists()


def test_simulate_deterministic_files(capsys, tmp_path):
    args = ["simulate", *BASE, "--c", "6", "--d", "1", "--policy", "noinfo:0.5",
            "--cycles", "2000", "--seed", "42", "--trace"]
    code_a = main(args + ["--out", str(tmp_path / "a")])
    out_a = capsys.readouterr().out
    code_b = main(args + ["--out", str(tmp_path / "b")])
    out_b = capsys.readouterr().out
    assert code_a == code_b == 0
    assert json.loads(out_a)["cost_rate"] == json.loads(out_b)["cost_rate"]
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_simulate_compare(capsys, tmp_path):
    code, out = call(capsys, "simulate", *BASE, "--c", "6", "--d", "1", "--policy", "partial:0",
                     "--policy", "partial:1", "--cycles", "5000", "--out", str(tmp_path))
    s = json.loads(out.out)
    assert [r["policy"] for r in s["ranking"]] == ["partial:0", "partial:1"]


def test_bad_policy_is_usage_error(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", *BASE, "--c", "6", "--d", "1", "--policy", "nope", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_stream_csv_to_stdout(capsys):
    code, out = call(capsys, "figure2", "--irange", "3", "--out", "-")
    assert out.out.startswith("# figure2.csv\ni,h,g,alpha_i\n")
    assert json.loads(out.err)["irange"] == 3


def test_output_dir_from_environment(tmp_path):
    env_dir = tmp_path / "env-out"
    proc = subprocess.run([sys.executable, "-m", "pollroute", "figure2", "--irange", "2"],
                          capture_output=True, text=True,
                          env={"POLLROUTE_OUT": str(env_dir), "PATH": ""}, cwd=tmp_path)
    assert proc.returncode == 0, proc.stderr
    assert (env_dir / "figure2.csv").exists()


def test_byte_identical_reruns(capsys, tmp_path):
    for sub in ("a", "b"):
        main(["individual", *BASE, "--c", "6", "--d", "1", "--out", str(tmp_path / sub)])
        main(["fluid", *BASE, "--y0", "1", "--out", str(tmp_path / sub)])
    capsys.readouterr()
    for name in ("h.csv", "tau.csv", "f_star.csv", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
