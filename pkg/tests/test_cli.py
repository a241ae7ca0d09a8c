import csv
import json
import math
from fractions import Fraction
from pathlib import Path

import pytest

from shiftspace import cli

DATA = Path(__file__).resolve().parents[1] / "data"


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    return code, out


def test_entropy_csv(tmp_path):
    code, out = run(tmp_path, "entropy", "--spec", str(DATA / "golden_mean.json"), "--window", "5..20")
    assert code == 0
    rows = list(csv.DictReader((out / "entropy.csv").open()))
    assert len(rows) == 16
    assert float(rows[-1]["estimate"]) == pytest.approx(0.4891, abs=5e-5)
    assert int(rows[-1]["count"]) == 17711


def test_tile_json_and_svg(tmp_path):
    code, out = run(tmp_path, "tile", "--tileset", str(DATA / "tiles_3.json"), "--window", "0:20")
    assert code == 0
    rep = json.loads((out / "tiling.json").read_text())
    assert rep["placements"] == 6 and rep["errors"] == 2 and rep["maximal"]
    code, out = run(tmp_path, "tile", "--tileset", str(DATA / "tiles_2d.json"), "--window", "10x10",
                    "--format", "svg", name="svg")
    assert code == 0 and (out / "tiling.svg").read_text().startswith("<svg")


def test_glue_exit_codes(tmp_path):
    code, out = run(tmp_path, "glue", "--spec", str(DATA / "golden_mean.json"), "--r", "1", "--window", "1,2,3")
    assert code == 0
    code, out = run(tmp_path, "glue", "--spec", str(DATA / "two_constant.json"), "--r", "3", "--window", "1",
                    name="bad")
    assert code == 2
    rep = json.loads((out / "glue.json").read_text())
    assert rep["pairs"][0]["counterexample"]


def test_malformed_json_reports_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "sft",\n  "alphabet": [0, 1,, ]}')
    code, _ = run(tmp_path, "entropy", "--spec", str(bad), "--window", "4")
    assert code == 1
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


GM_JSON = str(DATA / "golden_mean.json")
TILES3 = str(DATA / "tiles_3.json")


@pytest.mark.parametrize("argv,needle", [
    (["glue", "--spec", GM_JSON, "--r", "0", "--window", "3"], "--r"),
    (["approx", "--spec", GM_JSON, "--r", "1", "--eps", "1.5", "--window", "3"], "--eps"),
    (["entropy", "--window", "4"], "--spec"),
    (["entropy", "--spec", GM_JSON, "--window", "x"], "--window"),
    (["tile", "--tileset", TILES3, "--window", "4", "--format", "csv"], "--format"),
])
def test_parameter_errors_name_the_parameter(tmp_path, capsys, argv, needle):
    code, _ = run(tmp_path, *argv)
    assert code == 1
    assert needle in capsys.readouterr().err


def test_verify_and_provenance(tmp_path):
    code, out = run(tmp_path, "verify", "--runs", "20")
    assert code == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["report"]["passed"]
    assert rep["provenance"]["config"]["command"] == "verify"
    assert "spacing" in rep["provenance"]["formulas"]


def test_emitted_bounds_recompute(tmp_path):
    code, out = run(tmp_path, "verify", "--runs", "4")
    rep = json.loads((out / "verify.json").read_text())["report"]
    sp = rep["spacing_example"]
    e, a = sp["inputs"]["eps"], sp["inputs"]["alphabet_size"]
    assert sp["bound"] == pytest.approx(3 * e * math.log(a / e) + e * math.log(a), rel=1e-12)
    for row in rep["sections"]["sparse_count_grid"]["rows"]:
        e = Fraction(str(row["eps"]))
        exact = (3 * row["alphabet_size"] / e) ** math.ceil(e * row["n"])
        assert row["bound"] == pytest.approx(float(exact), rel=1e-12)
        assert row["count"] <= row["bound"]


def test_spectrum_small(tmp_path):
    ts = tmp_path / "r6.json"
    ts.write_text(json.dumps({"dimension": 1, "tiles": [[[i] for i in range(6)]]}))
    code, out = run(tmp_path, "spectrum", "--tileset", str(ts), "--eps", "0.1667", "--window", "0:12")
    assert code == 0
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "level,count,estimate,gap,bound" and len(lines) == 8


@pytest.mark.parametrize("argv", [
    ["entropy", "--spec", str(DATA / "golden_mean.json"), "--window", "3..12", "--format", "json"],
    ["tile", "--tileset", str(DATA / "tiles_2d.json"), "--window", "9x7", "--format", "svg"],
    ["verify", "--runs", "10", "--seed", "3"],
])
def test_outputs_are_byte_identical(tmp_path, argv):
    snaps = []
    for _ in range(2):
        code, out = run(tmp_path, *argv)
        assert code == 0
        snaps.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert snaps[0] == snaps[1]
