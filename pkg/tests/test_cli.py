import json
import os
import subprocess
import sys

import pytest

from mcsbp.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_feller(capsys, data_dir, tmp_path):
    code, out, _ = run(capsys, "analyze", "--mech", data_dir / "feller_supercritical.json",
                       "--r", "1", "--out", tmp_path)
    assert code == 0
    assert "supercritical" in out and "0.367879" in out
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["phi_zero"] == pytest.approx([1.0])
    assert doc["meta"]["seed"] == 0 and doc["meta"]["mechanism_digest"]


def test_analyze_critical_is_certain(capsys, data_dir):
    code, out, _ = run(capsys, "analyze", "--mech", data_dir / "feller_critical.json", "--r", "2")
    assert code == 0 and "critical" in out


def test_dimension_mismatch_exits_2(capsys, data_dir):
    code, _, err = run(capsys, "analyze", "--mech", data_dir / "gaussian_2type.json", "--r", "1")
    assert code == 2 and "d=2" in err


def test_negative_r_exits_2(capsys, data_dir):
    code, _, _ = run(capsys, "analyze", "--mech", data_dir / "feller_critical.json", "--r", "-1")
    assert code == 2


def test_bad_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus"])
    assert exc.value.code == 2


def test_corrupted_file_rejected(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"d": 2,\n "columns": [\n  {"drift": [1, -0.5]},\n  {"drift": [0.1, 1]}]}\n')
    code, _, err = run(capsys, "analyze", "--mech", bad, "--r", "1,1")
    assert code == 2 and "line 3" in err
    code, _, _ = run(capsys, "analyze", "--mech", tmp_path / "missing.json", "--r", "1")
    assert code == 2


def test_semigroup_output(capsys, data_dir, tmp_path):
    code, out, _ = run(capsys, "semigroup", "--mech", data_dir / "feller_critical.json",
                       "--lambda", "1", "--horizon", "1", "--points", "11", "--out", tmp_path)
    assert code == 0
    assert out.splitlines()[1].startswith("1,0.5")
    rows = (tmp_path / "u.csv").read_text().splitlines()
    assert rows[0] == "t,u1" and len(rows) == 12
    meta = json.loads((tmp_path / "u.json").read_text())
    assert meta["tolerance"] == 1e-8 and meta["lambda"] == [1.0]


def test_semigroup_at_infinity_and_compare(capsys, data_dir, tmp_path):
    code, out, _ = run(capsys, "semigroup", "--mech", data_dir / "gaussian_2type.json",
                       "--lambda", "4,4", "--horizon", "2", "--at-infinity", "--compare",
                       "--out", tmp_path)
    assert code == 0
    assert "u_1(inf): finite" in out and "domination" in out
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "t,u1,u2,v"


def test_semigroup_linear_diverges(capsys, data_dir):
    code, out, _ = run(capsys, "semigroup", "--mech", data_dir / "linear_subcritical.json",
                       "--lambda", "1,1", "--horizon", "1", "--at-infinity")
    assert code == 0 and "u_1(inf): diverges" in out


def test_simulate_outputs(capsys, data_dir, tmp_path):
    code, out, _ = run(capsys, "simulate", "--mech", data_dir / "feller_supercritical.json",
                       "--r", "1", "--n", 200, "--horizon", 5, "--dt", 1e-2, "--seed", 3,
                       "--paths", 2, "--out", tmp_path)
    assert code == 0
    doc = json.loads(out)
    assert doc["n"] == 200 and doc["seed"] == 3 and doc["dt"] == 0.01
    assert doc["ci_low"] <= doc["estimate"] <= doc["ci_high"]
    assert (tmp_path / "stats.json").read_text() == out
    assert (tmp_path / "path_0001.csv").read_text().startswith("t,z1,a1\n")


def test_simulate_stats_identical_across_workers(capsys, data_dir, tmp_path):
    texts = []
    for w in (1, 4):
        run(capsys, "simulate", "--mech", data_dir / "gaussian_2type.json", "--r", "0.5,0.5",
            "--n", 600, "--horizon", 5, "--dt", 1e-2, "--workers", w, "--out", tmp_path / str(w))
        texts.append((tmp_path / str(w) / "stats.json").read_bytes())
    assert texts[0] == texts[1]


def test_verify_subset_without_mc(capsys, data_dir, tmp_path):
    code, out, _ = run(capsys, "verify", "--mech", data_dir / "feller_supercritical.json",
                       data_dir / "compound_poisson_offdiag.json", "--no-mc", "--dt", 1e-2,
                       "--out", tmp_path)
    assert code == 0, out
    assert "SKIP compound_poisson_offdiag: u_t(inf) dichotomy" in out
    doc = json.loads((tmp_path / "verify.json").read_text())
    assert doc["failed"] == 0
    assert set(doc["mechanism_digests"]) == {"feller_supercritical", "compound_poisson_offdiag"}


def test_verify_r_mismatch(capsys, data_dir):
    code, _, _ = run(capsys, "verify", "--mech", data_dir / "gaussian_2type.json", "--r", "1")
    assert code == 2


def test_console_script_and_numpy_backend(data_dir, tmp_path):
    # the same statistics come out of the numba kernels and the numpy fallback
    args = [sys.executable, "-m", "mcsbp.cli", "simulate", "--mech",
            str(data_dir / "stable_2type.json"), "--r", "1,1", "--n", "300", "--horizon", "5",
            "--dt", "1e-2", "--seed", "4"]
    docs = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, MCSBP_BACKEND=backend)
        res = subprocess.run(args, capture_output=True, text=True, env=env, check=True)
        docs[backend] = json.loads(res.stdout)
    assert docs["numpy"]["backend"] == "numpy" and docs["numba"]["backend"] == "numba"
    assert docs["numpy"]["counts"] == docs["numba"]["counts"]
    assert docs["numpy"]["estimate"] == docs["numba"]["estimate"]
