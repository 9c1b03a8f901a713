import csv
import io
import json
import math
import subprocess
import sys

import pytest

from toruslyap.cli import main

LOG_PHI2 = math.log((3 + math.sqrt(5)) / 2)
FAST = ["--steps", "20000", "--samples", "2000", "--ensemble", "4", "--horizon", "32"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_spectrum_identity(capsys):
    code, out, _ = run(capsys, "spectrum", "--catalog", "identity", "--steps", "1000")
    assert code == 0
    assert json.loads(out)["exponents"] == [0.0, 0.0]


def test_spectrum_cat_and_history_csv(capsys, tmp_path):
    path = tmp_path / "hist.csv"
    code, out, _ = run(capsys, "spectrum", "--catalog", "cat", "--steps", "100000", "--out", str(path))
    assert code == 0
    data = json.loads(out)
    assert abs(data["exponents"][0] - LOG_PHI2) <= 1e-3
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["step", "lambda_1", "lambda_2"]
    assert len(rows) > 100 and int(rows[-1][0]) == 100000


def test_spectrum_point_validation(capsys):
    code, _, err = run(capsys, "spectrum", "--catalog", "cat", "--steps", "1000", "--point", "0.1")
    assert code == 1 and "coordinates" in err


def test_homology(capsys):
    code, out, _ = run(capsys, "homology", "--catalog", "cat-cat")
    data = json.loads(out)
    assert code == 0
    assert data["argmax_degree"] == 2
    assert abs(data["total_spectral_radius"] - ((3 + math.sqrt(5)) / 2) ** 2) <= 1e-8
    assert [d["k"] for d in data["degrees"]] == [0, 1, 2, 3, 4]


def test_metric_command(capsys):
    code, out, _ = run(capsys, "metric", "--catalog", "identity", "--epsilon", "1.0", "--samples", "4",
                       "--p", "1")
    data = json.loads(out)
    assert code == 0
    assert data["gram"][0][0] == pytest.approx(1 / math.tanh(1.0), abs=1e-9)
    assert data["lp"][0]["estimate"] == pytest.approx(math.sqrt(2) / math.tanh(1.0), abs=1e-8)


def test_entropy_command_csv(capsys):
    code, out, _ = run(capsys, "entropy", "--catalog", "cat", "--samples", "500", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["k"] == "all"
    assert abs(float(rows[0]["growth"]) - LOG_PHI2) <= 0.05 * LOG_PHI2


def test_verify_a_cat_exit_zero(capsys):
    code, out, _ = run(capsys, "verify", "a", "--catalog", "cat", *FAST)
    assert code == 0
    assert json.loads(out)["claims"][0]["verdict"] == "HOLDS"


def test_verify_acor_cat_hypothesis_only(capsys):
    code, _, _ = run(capsys, "verify", "acor", "--catalog", "cat", *FAST)
    assert code == 3


def test_verify_writes_file_and_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert run(capsys, "verify", "bc", "--catalog", "perturbed-cat-0.1", *FAST, "--out", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_bad_system_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dim": 2, "matrix": [[2, 0], [0, 1]], "shears": []}))
    code, _, err = run(capsys, "verify", "all", "--system", str(bad))
    assert code == 1
    assert "matrix not in GL(n,Z)" in err
    broken = tmp_path / "broken.json"
    broken.write_text('{"dim": 2,\n "matrix": [[1, 0], [0, 1]')
    code, _, err = run(capsys, "spectrum", "--system", str(broken))
    assert code == 1 and "line 2" in err


def test_usage_errors(capsys):
    assert run(capsys, "verify", "zzz", "--catalog", "cat")[0] == 1
    assert run(capsys, "spectrum")[0] == 1
    assert run(capsys, "spectrum", "--catalog", "nope")[0] == 1
    assert run(capsys, "verify", "a", "--catalog", "cat", "--epsilon", "0")[0] == 1


def test_catalog_listing(capsys):
    code, out, _ = run(capsys, "catalog")
    assert code == 0 and "perturbed-cat-0.05" in out.split()
    code, out, _ = run(capsys, "catalog", "shear-pair")
    assert len(json.loads(out)["shears"]) == 2


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "toruslyap", "spectrum", "--catalog", "identity", "--steps", "1000"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["exponents"] == [0.0, 0.0]
