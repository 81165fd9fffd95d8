import json
import re
import subprocess
import sys

import pytest

from minkloc.cli import main
from minkloc.io import read_csv


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def field(out, name, kind, s="1"):
    _, cols, rows = read_csv(out / "contents.csv")
    i = {c: k for k, c in enumerate(cols)}
    for row in rows:
        if row[i["kind"]] == kind and row[i["bound"]] == name and float(row[i["s"]]) == float(s):
            return float(row[i["value"]])
    raise KeyError((name, kind, s))


def test_validate_ok_and_errors(capsys, tmp_path):
    code, out = run(capsys, "validate", "--spec", "builtin:cantor")
    assert code == 0 and "valid" in out and "lattice" in out
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"variant": "ifs_attractor", "separation": "unknown",
                               "ifs": [{"ratio": 0.5, "translation": [0.0]}, {"ratio": 1.2, "translation": [0.6]}]}))
    code, out = run(capsys, "validate", "--spec", str(bad))
    assert code == 3
    bad.write_text("{not json")
    assert run(capsys, "validate", "--spec", str(bad))[0] == 2
    assert run(capsys, "validate", "--spec", "builtin:nothing")[0] == 2


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["contents"])
    assert e.value.code == 2
    assert run(capsys, "contents", "--spec", "builtin:ball", "--h", "-1")[0] == 2


def test_resource_cap_exit_4(capsys, tmp_path):
    code, _ = run(capsys, "--out", str(tmp_path), "field", "--spec", "builtin:ball", "--h", "0.001",
                  "--max-cells", "1000")
    assert code == 4


def test_contents_segment_limit(capsys, tmp_path):
    code, out = run(capsys, "--out", str(tmp_path), "contents", "--spec", "builtin:segment", "--s", "1",
                    "--gnuplot-stub")
    assert code == 0
    assert field(tmp_path, "limit", "Minkowski") == pytest.approx(2.0, rel=0.02)
    meta, cols, _ = read_csv(tmp_path / "curves" / "volume_B0.csv")
    assert meta["spec_hash"] and meta["h"] != "exact" and cols[:2] == ["r", "value"]
    assert (tmp_path / "plot.gp").exists()


def test_contents_two_squares_stacho(capsys, tmp_path):
    code, out = run(capsys, "--out", str(tmp_path), "contents", "--spec", "builtin:two-squares",
                    "--window=-5,-5;5,5", "--h", str(1 / 256), "--rmax", "1", "--K", "12",
                    "--B", "box:-1.000000001,-1;-0.999999999,1", "--s", "1")
    assert code == 0
    m = re.search(r"stacho at r=1: ([0-9.eE+-]+)", out)
    assert m and float(m.group(1)) == pytest.approx(1.0, rel=0.03)


def test_contents_deterministic(capsys, tmp_path):
    for sub in ("a", "b"):
        assert run(capsys, "--out", str(tmp_path / sub), "contents", "--spec", "builtin:nonlattice")[0] == 0
    for name in ("contents.csv", "contents.json", "curves/volume_B0.csv"):
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()


def test_local_verdicts(capsys, tmp_path):
    code, out = run(capsys, "--out", str(tmp_path / "n"), "local", "--spec", "builtin:nonlattice")
    assert code == 0 and "below-threshold" in out
    code, out = run(capsys, "--out", str(tmp_path / "c"), "local", "--spec", "builtin:cantor")
    assert code == 0 and "oscillating" in out
    code, out = run(capsys, "--out", str(tmp_path / "a"), "average", "--spec", "builtin:cantor")
    assert code == 0 and "below-threshold" in out
    assert (tmp_path / "a" / "mu.csv").exists() and (tmp_path / "a" / "report.json").exists()


def test_verify_smoke_and_induced_failure(capsys, tmp_path):
    code, out = run(capsys, "verify", "--suite", "exact", "--trials", "5000")
    assert code == 0 and "passed" in out
    code, out = run(capsys, "verify", "--suite", "two-squares", "--h", str(1 / 64),
                    "--override", "two-squares:stacho(1)=2")
    assert code == 1 and "FAIL" in out
    code, _ = run(capsys, "verify", "--suite", "two-squares", "--override", "bogus")
    assert code == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "minkloc", "validate", "--spec", "builtin:ball"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "valid" in r.stdout
