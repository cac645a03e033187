import csv
import io
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from orienteer import harness
from orienteer.cli import main
from orienteer.generators import KINDS, generate
from orienteer.instance import from_json, load
from orienteer.treewidth import validate_tree_decomposition


def run(capsys, *args):
    code = main(list(map(str, args)))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def inst_file(tmp_path):
    def make(kind, **kw):
        path = tmp_path / f"{kind}-{len(list(tmp_path.iterdir()))}.json"
        path.write_text(generate(kind, kw.pop("seed", 1), **kw).dumps())
        return path
    return make


def test_gen_is_byte_identical(capsys):
    a = run(capsys, "gen", "euclidean", "--n", 8, "--seed", 1)
    b = run(capsys, "gen", "euclidean", "--n", 8, "--seed", 1)
    assert a[0] == 0 and a[1] == b[1]


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv(harness.SEED_ENV, "7")
    a = run(capsys, "gen", "euclidean", "--n", 6)[1]
    assert json.loads(a)["meta"]["seed"] == 7
    monkeypatch.setenv(harness.SEED_ENV, "x")
    assert run(capsys, "gen", "euclidean", "--n", 6)[0] == 1


def test_low_treewidth_reports_small_width(inst_file):
    inst = load(inst_file("low-treewidth", n=12, width=2))
    td = inst.tree_decomposition()
    assert td.width <= 2 and validate_tree_decomposition(inst.graph(), td) is None


def test_uniform_distances_equal():
    inst = generate("uniform", 0, n=5)
    off = {x for i, row in enumerate(inst.matrix) for j, x in enumerate(row) if i != j}
    assert off == {1}


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 1000), st.booleans())
def test_round_trip_is_idempotent(kind, seed, deadlines):
    kw = {"rows": 3, "cols": 3} if kind == "grid-graph" else {"n": 6}
    inst = generate(kind, seed, deadlines=deadlines, **kw)
    text = inst.dumps()
    assert from_json(json.loads(text)).dumps() == text


def test_exit_codes(capsys, inst_file):
    f = inst_file("euclidean", n=6)
    code, out, _ = run(capsys, "solve", "p2p", f, "--end", 3, "--budget", "1/100")
    assert code == 2 and json.loads(out)["status"] == "infeasible"
    assert run(capsys, "solve", "p2p", f, "--end", 3)[0] == 1
    assert run(capsys, "solve", "kstroll", f)[0] == 1
    assert run(capsys, "solve", "deadline", f)[0] == 1
    assert run(capsys, "solve", "kstroll", f, "--bogus")[0] == 1
    assert run(capsys, "solve", "kstroll", f, "--k", 99)[0] == 2
    assert run(capsys, "solve", "kstroll", f, "--k", 3, "--start", "nope")[0] == 1


def test_kstroll_two_is_the_distance(capsys, inst_file):
    f = inst_file("euclidean", n=7)
    code, out, _ = run(capsys, "solve", "kstroll", f, "--k", 2, "--end", 4, "--json")
    rep = json.loads(out)
    m = load(f).metric(with_deadlines=False)
    assert code == 0 and Fraction(rep["result"]["length"]) == m.to_raw(m.d(0, 4))


def test_deadline_report_with_oracle(capsys, inst_file, tmp_path):
    f = inst_file("integer-metric", n=8, deadlines=True)
    out_file = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "deadline", f, "--oracle", "--m-max", 3, "--out", out_file)
    rep = json.loads(out_file.read_text())
    ratio = Fraction(rep["ratio"])
    assert code == 0 and Fraction(1, 2) <= ratio <= 1
    assert set(rep) >= {"instance", "solver", "config", "result", "oracle", "ratio", "seed"}
    assert "wall_time" not in rep
    assert run(capsys, "verify", out_file, f)[0] == 0


def test_oracle_guess_file(capsys, inst_file, tmp_path):
    f = inst_file("integer-metric", n=7, deadlines=True)
    exact = tmp_path / "exact.json"
    run(capsys, "solve", "exact-deadline", f, "--out", exact)
    code, out, _ = run(capsys, "solve", "deadline", f, "--oracle-guess", exact, "--no-exact-groups", "--json")
    rep = json.loads(out)
    assert code == 0 and rep["config"]["oracle_guess"] == json.loads(exact.read_text())["result"]["walk"]


def test_verify_catches_tampering(capsys, inst_file, tmp_path):
    f = inst_file("euclidean", n=6)
    rep_file = tmp_path / "r.json"
    run(capsys, "solve", "kstroll", f, "--k", 4, "--out", rep_file)
    rep = json.loads(rep_file.read_text())
    rep["result"]["length"] = "1/3"
    rep_file.write_text(json.dumps(rep))
    code, out, _ = run(capsys, "verify", rep_file, f)
    assert code == 1 and "mismatch" in out


@pytest.mark.parametrize("command,extra", [
    ("kstroll", ["--k", 5]), ("p2p", ["--budget-factor", "3/2", "--end", 2]), ("deadline", ["--m-max", 3]),
    ("exact-kstroll", ["--k", 5]), ("exact-p2p", ["--budget-factor", "3/2", "--end", 2]), ("exact-deadline", []),
])
def test_every_report_resimulates(capsys, inst_file, tmp_path, command, extra):
    f = inst_file("integer-metric", n=7, deadlines=True)
    rep_file = tmp_path / "r.json"
    assert run(capsys, "solve", command, f, "--out", rep_file, *extra)[0] == 0
    assert harness.verify(json.loads(rep_file.read_text()), load(f)) == []


def test_treewidth_commands(capsys, inst_file):
    f = inst_file("low-treewidth", n=9, width=2)
    for args in (["kstroll", f, "--k", 6], ["p2p", f, "--budget", 25, "--end", 4]):
        code, out, _ = run(capsys, "solve", *args, "--oracle", "--json")
        rep = json.loads(out)
        assert code == 0 and rep["solver"] == "tw" and rep["ratio"] == 1


def test_bench(capsys, tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"cells": []}))
    code, out, _ = run(capsys, "bench", empty)
    assert code == 0 and out == ""
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"cells": [
        {"generator": "euclidean", "params": {"n": 9}, "command": "kstroll", "solver": "dbl",
         "query": {"k": "random"}, "seeds": 10},
        {"generator": "low-treewidth", "params": {"n": 9, "width": 2}, "command": "kstroll", "solver": "tw",
         "query": {"k": "random", "k_min": 2}, "seeds": 4},
    ]}))
    code, out, _ = run(capsys, "bench", suite, "--no-timing")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and float(rows[0]["success_rate"]) >= 0.9
    assert float(rows[1]["mean_ratio"]) == 1.0 and float(rows[1]["success_rate"]) == 1.0
    assert run(capsys, "bench", suite, "--no-timing", "--workers", 2)[1] == out


def test_calibrate(capsys, tmp_path):
    code, out, _ = run(capsys, "calibrate", "--family", "1d", "--n", 8, "--trials", 2000, "--seed", 0)
    rep = json.loads(out)
    assert code == 0 and rep["holdout_ok"]
    m = harness.family_metric("1d", 8, 0)
    from orienteer.decomposition import separation_frequencies
    freqs = separation_frequencies(m, range(8), 2000, 0)
    assert all(f <= rep["kappa_fit"] * float(m.d(u, v)) / 7 + 1e-9 for (u, v), f in freqs.items())
    assert run(capsys, "calibrate", "--family", "1d", "--n", 8, "--trials", 2000, "--seed", 0)[1] == out
    assert run(capsys, "calibrate", "--trials", 50)[0] == 1
    cfg = tmp_path / "cfg.json"
    run(capsys, "calibrate", "--trials", 200, "--out", cfg)
    f = tmp_path / "e.json"
    f.write_text(generate("euclidean", 0, n=7).dumps())
    assert run(capsys, "solve", "kstroll", f, "--k", 4, "--config", cfg)[0] == 0


def test_decompose(capsys, inst_file):
    code, out, _ = run(capsys, "decompose", inst_file("euclidean", n=9))
    data = json.loads(out)
    assert code == 0 and data["kind"] == "split-tree" and data["violations"] == []
    code, out, _ = run(capsys, "decompose", inst_file("grid-graph", rows=3, cols=3))
    data = json.loads(out)
    assert data["kind"] == "td" and data["valid"] and data["width"] <= 3


def test_bicriteria_report(capsys, inst_file):
    f = inst_file("euclidean", n=6, deadlines=True)
    code, out, _ = run(capsys, "solve", "deadline", f, "--mode", "bicriteria", "--m-max", 3, "--json")
    rep = json.loads(out)
    assert code == 0 and Fraction(rep["result"]["violation"]) <= Fraction(3, 2)
