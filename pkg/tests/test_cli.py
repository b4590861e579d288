import subprocess
import sys

import pytest

from zeromult import io
from zeromult.cli import DEFAULTS, OUTPUT_ENV, SCHEMA, run

DH_ARGS = ["--function", "dh", "--rect", "0.4,0.6,520.5,521.3"]


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


def test_zeros_dh(tmp_path):
    assert run(["zeros", *DH_ARGS, "--out", str(tmp_path)]) == 0
    rows = io.read_zeros_csv(tmp_path / "zeros.csv")
    assert len(rows) == 2
    re = sorted(r["location"].real for r in rows)
    assert abs(re[0] - 0.48409) < 1e-5 and abs(re[1] - 0.51591) < 1e-5
    m = io.read_json(tmp_path / "manifest.json")
    assert m["schema"] == SCHEMA and m["status"] == "ok" and m["exit_code"] == 0
    assert set(m["defaults"]) == set(DEFAULTS)
    assert m["outputs"] == ["zeros.csv", "zeros.json"]
    assert m["wall_time_s"] >= 0


def test_eval_zeta(tmp_path):
    assert run(["eval", "--function", "zeta", "--point", "2,0", "--out", str(tmp_path)]) == 0
    val = io.read_json(tmp_path / "eval.json")["points"][0]["value"]
    assert abs(val[0] - 1.6449340668482264) < 1e-12 and val[1] == 0


def test_empty_zero_region(tmp_path):
    assert run(["zeros", "--function", "zeta", "--rect", "2,3,0,30", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "zeros.csv").read_text().strip() == ",".join(io.ZERO_COLUMNS)


def test_deterministic_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(["strips", "--function", "zeta", "--rect", "-2,8,5,30", "--seed", "4",
                    "--bundle", "--out", str(d)]) == 0
    assert files(a) == files(b)
    strips = io.read_json(a / "strips.json")
    assert strips["zero_count"] == strips["complete_j_sum"] == 3


def test_validation_exit_codes(tmp_path):
    assert run(["zeros", "--function", "zeta", "--rect", "1,0,0,1", "--out", str(tmp_path)]) == 2
    assert io.read_json(tmp_path / "error.json")["code"]
    assert run(["zeros", *DH_ARGS, "--tol", "precision=-1", "--out", str(tmp_path)]) == 2
    assert io.read_json(tmp_path / "error.json")["code"] == "config_invalid"
    assert run(["zeros", *DH_ARGS, "--tol", "nonsense=1", "--out", str(tmp_path)]) == 2
    assert io.read_json(tmp_path / "manifest.json")["status"] == "validation_error"


def test_numerical_exit_code(tmp_path):
    assert run(["zeros", *DH_ARGS, "--tol", "max_depth=1", "--out", str(tmp_path)]) == 3
    err = io.read_json(tmp_path / "error.json")
    assert err["code"] == "unresolved_cluster"
    assert err["clusters"][0]["multiplicity"] == 2


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert run(["eval", "--function", "zeta", "--point", "-1,0"]) == 0
    val = io.read_json(tmp_path / "env" / "eval.json")["points"][0]["value"]
    assert abs(val[0] + 1 / 12) < 1e-12


def test_trace_negative_rect(tmp_path):
    assert run(["trace", "--function", "zeta", "--rect", "-1,4,0.1,30", "--out", str(tmp_path)]) == 0
    comps = io.read_curves(tmp_path)
    assert len(comps) >= 4
    assert run(["trace", "--function", "zeta", "--rect", "-1,4,0.1,30", "--constraint",
                "circle:-1", "--out", str(tmp_path)]) == 2


def test_verify_synthetic(tmp_path):
    assert run(["verify", "--synthetic", "0.3,0.2", "--out", str(tmp_path)]) == 0
    v = io.read_json(tmp_path / "verify.json")
    assert v["all_passed"] and v["involution_error"] < 1e-8
    rows = io.read_report_csv(tmp_path / "summary.csv")
    assert {r["identity"] for r in rows} == {"area", "length", "chain_rule"}
    assert all(r["pass"] for r in rows)


def test_ratio(tmp_path):
    assert run(["ratio", "--point", "2.1,0", "--image", "1.9,0", "--n-max", "1000",
                "--out", str(tmp_path)]) == 0
    assert io.read_json(tmp_path / "ratio.json")["max_relative_gap"] < 1e-10
    assert run(["ratio", "--point", "1.9,0", "--image", "2.1,0", "--out", str(tmp_path)]) == 2


def test_series_config_rejected(tmp_path):
    import math
    lam = [math.log(n) for n in range(1, 30)]
    lam[5] += 0.1
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("coefficients = ones\nexponents = custom\nexponent_values = %s\nsigma_c = 1\n"
                   % ", ".join(repr(x) for x in lam))
    code = run(["eval", "--function", "series", "--series-config", str(cfg), "--point", "2,0",
                "--out", str(tmp_path / "o")])
    assert code == 2
    err = io.read_json(tmp_path / "o" / "error.json")
    assert err["code"] == "additivity_violation" and err["n"] == 6


def test_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "zeromult.cli", "eval", "--function", "zeta",
                          "--point", "2,0", "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0
    with pytest.raises(SystemExit) as exc:
        run(["bogus"])
    assert exc.value.code == 2
