import json
import os
import stat
from pathlib import Path
import sys

import jsonschema
import pytest

import _corpus as C
from km2sat import cli
from km2sat.satsolver import read_dimacs


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, text in C.WORKED.items():
        p = tmp_path / f"{name}.km"
        p.write_text(text + "\n")
        paths[name] = str(p)
    return paths


def run(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr().out.strip().splitlines()
    return code, [json.loads(line) for line in out if line.startswith("{")]


def test_encode_writes_dimacs_and_map(files, tmp_path, capsys):
    out = tmp_path / "ex.cnf"
    code, [rep] = run(capsys, ["encode", files["bnf-example"], "-o", str(out)])
    assert code == 0
    cnf = read_dimacs(out.read_bytes())
    assert (cnf.num_vars, len(cnf.clauses)) == (rep["vars"], rep["clauses"]) == (13, 14)
    assert rep["groups"] == 11
    lines = (tmp_path / "ex.cnf.map").read_text().splitlines()
    assert len(lines) == 13 and lines[0].split()[:2] == ["1", "1"]


def test_encode_to_stdout(files, capsysbinary):
    assert cli.main(["encode", files["bnf-example"], "-o", "-", "--plr-bcp"]) == 0
    out = capsysbinary.readouterr()
    assert out.out == b"p cnf 1 2\n1 0\n-1 0\n"
    assert json.loads(out.err)["verdict"] == "unsat"


@pytest.mark.parametrize("name, code, verdict", [
    ("bnf-example", 20, "unsat"), ("permuted-boxes", 0, "sat"), ("top-pi-example", 20, "unsat"),
])
def test_solve_exit_codes(files, capsys, name, code, verdict):
    for flags in ([], ["--format", "nnf", "--lift", "yes"], ["--lift", "ctrl", "--plr", "--bcp"]):
        got, [rep] = run(capsys, ["solve", files[name], *flags])
        assert got == code
        assert rep["verdict"] == verdict
        jsonschema.validate(rep, cli.RUN_REPORT_SCHEMA)
        if verdict == "sat":
            assert rep["model_check"] == "pass"


def test_solve_writes_model(files, tmp_path, capsys):
    model = tmp_path / "model.txt"
    code, _ = run(capsys, ["solve", files["permuted-boxes"], "--model", str(model)])
    assert code == 0
    assert model.read_text().startswith("s 1\n")


def test_budget_and_timeout_exit_10(tmp_path, capsys):
    from km2sat import benchgen
    from km2sat.formula import to_text
    p = tmp_path / "b.km"
    p.write_text(to_text(benchgen.gen_branch_n(4)))
    code, [rep] = run(capsys, ["solve", str(p), "--max-bytes", "100"])
    assert (code, rep["verdict"]) == (10, "budget")
    code, [rep] = run(capsys, ["solve", str(p), "--timeout", "0.001"])
    assert (code, rep["verdict"]) == (10, "timeout")
    code, [rep] = run(capsys, ["encode", str(p), "-o", str(tmp_path / "x.cnf"),
                               "--max-clauses", "10"])
    assert (code, rep["verdict"]) == (10, "budget")


def test_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.km"
    bad.write_text("(& p1 (box p2))")
    assert cli.main(["solve", str(bad)]) == 2
    assert "1:" in capsys.readouterr().err
    assert cli.main(["solve", str(tmp_path / "missing.km")]) == 2
    assert cli.main(["solve", str(bad).replace("bad", "x"), "--solver", "magic"]) == 2


def test_external_solver(files, tmp_path, capsys):
    script = tmp_path / "ext.sh"
    script.write_text(f"#!/bin/sh\nexec {sys.executable} -m km2sat.satsolver \"$1\"\n")
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    for name, code in (("permuted-boxes", 0), ("bnf-example", 20)):
        got, [rep] = run(capsys, ["solve", files[name], "--solver", f"external:{script}"])
        assert got == code
        if code == 0:
            assert rep["model_check"] == "pass"
    from km2sat import benchgen
    from km2sat.formula import to_text
    for s in range(4):
        f = benchgen.gen_random_boxcnf(benchgen.RandomCnfParams(N=3, L=45, seed=s))
        path = tmp_path / f"r{s}.km"
        path.write_text(to_text(f))
        _, [a] = run(capsys, ["solve", str(path)])
        _, [b] = run(capsys, ["solve", str(path), "--solver", f"external:{script}"])
        assert a["verdict"] == b["verdict"] and a["cnf_sha256"] == b["cnf_sha256"]


def test_gen_writes_manifest(tmp_path, capsys):
    out = tmp_path / "gen"
    assert cli.main(["gen", "branch-p", "--h", "2", "--out-dir", str(out)]) == 0
    assert cli.main(["gen", "random", "--N", "3", "--L", "9", "--d", "2", "--count", "3",
                     "--seed", "4", "--out-dir", str(out)]) == 0
    manifest = [json.loads(x) for x in (out / "manifest.jsonl").read_text().splitlines()]
    assert len(manifest) == 4
    assert manifest[0]["generator"] == "branch-p" and manifest[0]["params"] == {"h": 2}
    seeds = {m["seed"] for m in manifest[1:]}
    assert len(seeds) == 3
    for m in manifest:
        assert (out / m["file"]).exists()
    # regenerating from the manifest parameters gives the same text
    from km2sat.benchgen import RandomCnfParams, gen_random_boxcnf
    from km2sat.formula import parse
    m = manifest[1]
    assert parse((out / m["file"]).read_text()) is gen_random_boxcnf(RandomCnfParams(**m["params"]))


def test_nearest_rank():
    assert cli.nearest_rank([], 50) is None
    assert cli.nearest_rank([3.0, 1.0, 2.0], 50) == 2.0
    assert cli.nearest_rank([1.0, 2.0, 3.0, 4.0], 50) == 2.0
    assert cli.nearest_rank([1.0] * 9 + [5.0], 90) == 1.0
    assert cli.nearest_rank([1.0] * 8 + [5.0, float("inf")], 90) == 5.0
    assert cli.nearest_rank([1.0, float("inf")], 90) is None


def test_bench_serial_and_parallel_agree(files, tmp_path, capsys, monkeypatch):
    suite = {
        "options": ["bnf-nolift", "nnf-ctrllift-plr-bcp"],
        "points": [
            {"generator": "random", "params": {"N": 3, "d": 1}, "L_over_N": [2, 6],
             "samples": 3, "seed": 5},
            {"generator": "branch-n", "h": [1, 2]},
            {"files": ["*.km"], "point": "worked"},
        ],
    }
    path = tmp_path / "suite.json"
    path.write_text(json.dumps(suite))
    reports = []
    for workers in ("1", "2"):
        monkeypatch.setenv(cli.WORKERS_ENV, workers)
        out = tmp_path / f"rep{workers}.jsonl"
        code, [summary] = run(capsys, ["bench", str(path), "--out", str(out)])
        assert code == 0 and summary["errors"] == 0
        recs = [json.loads(x) for x in out.read_text().splitlines()]
        reports.append(recs)
    runs = [r for r in reports[0] if r["type"] == "run"]
    points = [r for r in reports[0] if r["type"] == "point"]
    assert len(runs) == (2 * 3 + 2 + len(C.WORKED)) * 2
    for r in runs:
        jsonschema.validate(r, cli.RUN_REPORT_SCHEMA)
    for p in points:
        jsonschema.validate(p, cli.POINT_REPORT_SCHEMA)
    worked = [p for p in points if p["point"] == "worked"]
    assert all(p["solved_fraction"] == 1.0 for p in worked)
    assert [C.stable(r) for r in runs] == [C.stable(r) for r in reports[1] if r["type"] == "run"]


def test_suite_expansion_is_sorted_and_seeded():
    suite = {"points": [{"generator": "random", "params": {"N": 3}, "L_over_N": [4, 2],
                         "samples": 2, "seed": 1}]}
    a = cli.expand_suite(suite)
    assert [x["id"] for x in a] == sorted(x["id"] for x in a)
    assert a == cli.expand_suite(suite)
    assert len({x["params"]["seed"] for x in a}) == 4
    with pytest.raises(ValueError):
        cli.expand_suite({"points": [{"generator": "nope"}]})


def test_module_invocation(files):
    import subprocess
    out = subprocess.run([sys.executable, "-m", "km2sat", "solve", files["bnf-example"]],
                         capture_output=True, text=True, env={**os.environ})
    assert out.returncode == 20
    assert json.loads(out.stdout)["verdict"] == "unsat"


def _bench(capsys, tmp_path, suite, extra=()):
    path = tmp_path / "suite.json"
    path.write_text(json.dumps(suite))
    out = tmp_path / "report.jsonl"
    code, [summary] = run(capsys, ["bench", str(path), "--out", str(out), *extra])
    recs = [json.loads(x) for x in out.read_text().splitlines()]
    return code, summary, recs


def test_bench_empty_suite(tmp_path, capsys):
    code, summary, recs = _bench(capsys, tmp_path, {"points": []})
    assert code == 0 and recs == [] and summary["instances"] == 0


def test_bench_worked_unsat_examples(files, tmp_path, capsys):
    names = ["nnf-example", "bnf-example", "lifted-example", "top-pi-example"]
    suite = {"points": [{"files": [Path(files[n]).name for n in names], "point": "worked"}]}
    code, _, recs = _bench(capsys, tmp_path, suite)
    runs = [r for r in recs if r["type"] == "run"]
    assert code == 0 and len(runs) == 4
    assert all(r["verdict"] == "unsat" for r in runs)


def test_bench_random_points_report(tmp_path, capsys):
    suite = {"options": ["bnf-nolift-plr-bcp"], "timeout": 30,
             "points": [{"generator": "random", "params": {"d": 1, "p": 0.5, "N": 3},
                         "L_over_N": [10, 15, 20, 25, 30], "samples": 20, "seed": 77}]}
    code, _, recs = _bench(capsys, tmp_path, suite)
    points = [r for r in recs if r["type"] == "point"]
    assert code == 0 and len(points) == 5
    assert all(p["n"] == 20 for p in points)
    for p in points:
        jsonschema.validate(p, cli.POINT_REPORT_SCHEMA)
        assert p["p50_ms"] <= p["p90_ms"]


def test_solve_trivial_diamond(tmp_path, capsys):
    p = tmp_path / "d.km"
    p.write_text("(dia 1 true)")
    code, [rep] = run(capsys, ["solve", str(p)])
    assert code == 0 and rep["verdict"] == "sat" and rep["model_check"] == "pass"


def test_empty_conjunction_rejected(tmp_path, capsys):
    p = tmp_path / "e.km"
    p.write_text("(&)")
    assert cli.main(["encode", str(p), "-o", str(tmp_path / "e.cnf")]) == 2
