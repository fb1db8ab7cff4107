import csv

import numpy as np
import pytest

from nodefrag import cli
from nodefrag import verify as V
from nodefrag.measure_file import save_measure
from test_measure_file import make


def run(tmp_path, *args, env=None):
    return cli.run(list(args) + ["--out-dir", str(tmp_path)], env=env or {})


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# nodefrag") and "schema v1" in lines[0]
    rows = list(csv.reader(lines[1:]))
    return rows[0], rows[1:]


def test_tree_empty(tmp_path):
    assert run(tmp_path, "tree", "--alpha", "1.5", "--eps", "1e-2", "--n", "0") == 0
    head, rows = read_csv(tmp_path / "trees.csv")
    assert head == cli.TREES_COLUMNS and rows == []
    assert (tmp_path / "config.txt").read_text().startswith("command = tree")


def test_tree_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "tree", "--n", "300", "--seed", "4") == 0
    assert run(b, "tree", "--n", "300", "--seed", "4") == 0
    assert (a / "trees.csv").read_bytes() == (b / "trees.csv").read_bytes()
    _, rows = read_csv(a / "trees.csv")
    assert len(rows) == 300


@pytest.mark.parametrize("args", [["tree", "--alpha", "2.5"], ["tree", "--eps", "-1"],
                                  ["tree", "--bogus"], ["nosuch"], ["verify", "--checks", "zzz"],
                                  ["tree", "--n", "-3"]])
def test_usage_errors(tmp_path, args):
    assert run(tmp_path, *args) == 2


def test_precedence(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("seed = 9\nn = 5\n# comment\ntheta = 2\n")
    assert run(tmp_path, "tree", "--config", str(cfg), env={"NODEFRAG_SEED": "11"}) == 0
    echo = (tmp_path / "config.txt").read_text()
    assert "seed = 11" in echo and "n = 5" in echo and "theta = 2.0" in echo
    assert run(tmp_path, "tree", "--config", str(cfg), "--seed", "3", "--n", "2",
               env={"NODEFRAG_SEED": "11"}) == 0
    assert "seed = 3" in (tmp_path / "config.txt").read_text()
    cfg.write_text("colour = red\n")
    assert run(tmp_path, "tree", "--config", str(cfg)) == 2


def test_fragment_and_timeline(tmp_path):
    assert run(tmp_path, "fragment", "--n", "200", "--thetas", "0.5,2") == 0
    head, rows = read_csv(tmp_path / "fragments.csv")
    assert head == cli.FRAGMENTS_COLUMNS
    thetas = {r[1] for r in rows}
    assert thetas == {"0.5", "2.0"}
    tagged = [r for r in rows if r[5] == "1"]
    assert all(r[1] in thetas for r in tagged)
    assert run(tmp_path, "timeline", "--n", "200") == 0
    head, rows = read_csv(tmp_path / "events.csv")
    assert head == cli.EVENTS_COLUMNS and len(rows) >= 200


def test_profile(tmp_path):
    assert run(tmp_path, "profile", "--n", "20", "--tree-index", "3") == 0
    data = np.loadtxt(tmp_path / "profile.dat")
    assert data.shape[1] == 2 and data[0, 1] == 1 and data[-1, 1] == 0


def test_validate(tmp_path):
    assert run(tmp_path, "validate") == 0
    path = tmp_path / "m.txt"
    save_measure(path, make())
    assert run(tmp_path, "validate", "--measure", str(path)) == 0
    assert "admissible: True" in (tmp_path / "validate.txt").read_text()


def test_verify_example(tmp_path):
    code = run(tmp_path, "verify", "--alpha", "1.5", "--theta", "1", "--eps", "1e-2", "--n",
               "20000", "--seed", "7", "--checks", "eq9,prop73")
    assert code == 0
    head, rows = read_csv(tmp_path / "reports.csv")
    assert head == cli.REPORTS_COLUMNS
    assert {r[0].split(":")[0] for r in rows} == {"eq9", "prop73"}
    assert "thresholds" in (tmp_path / "reports.txt").read_text()


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    def failing(mech, seed=0, th=V.NOMINAL, n=10):
        rep = V.CheckReport("eq9")
        rep.at_least("always", 1.0, 0.0)
        return rep

    monkeypatch.setitem(V.CHECKS, "eq9", failing)
    assert run(tmp_path, "verify", "--checks", "eq9", "--workers", "1") == 1
    _, rows = read_csv(tmp_path / "reports.csv")
    assert rows[0][-1] == "fail"


def test_dislocation_compare(tmp_path):
    assert run(tmp_path, "dislocation-compare", "--seed", "2") == 0
    head, rows = read_csv(tmp_path / "draws.csv")
    assert head == cli.DRAWS_COLUMNS
    sides = {r[0] for r in rows}
    assert sides == {"tree", "subordinator"}
