"""Command line front end: ``encode``, ``solve``, ``gen`` and ``bench``.

Exit codes: 0 sat (or success), 20 unsat, 10 timeout or budget exhausted,
2 error.  Every run prints one JSON report line.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import math
import os
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import benchgen
from .encoder import EncodeOptions, encode
from .errors import BudgetExhausted, Km2SatError, ModelCheckError, ParseError, Timeout
from .formula import parse, to_text
from .satsolver import CnfFormula, format_model, solve, write_dimacs
from .semantics import extract_model

EXIT_SAT, EXIT_UNSAT, EXIT_TIMEOUT, EXIT_ERROR = 0, 20, 10, 2
WORKERS_ENV = "KM2SAT_WORKERS"

RUN_REPORT_SCHEMA = {
    "type": "object",
    "required": ["type", "instance", "options", "verdict", "vars", "clauses", "labels",
                 "encode_ms", "solve_ms", "model_check"],
    "properties": {
        "type": {"const": "run"},
        "instance": {"type": "string"},
        "point": {"type": ["string", "null"]},
        "options": {"type": "string"},
        "verdict": {"enum": ["sat", "unsat", "timeout", "budget", "error"]},
        "vars": {"type": ["integer", "null"]},
        "clauses": {"type": ["integer", "null"]},
        "labels": {"type": ["integer", "null"]},
        "encode_ms": {"type": ["number", "null"]},
        "solve_ms": {"type": ["number", "null"]},
        "model_check": {"enum": ["pass", "fail", None]},
        "cnf_sha256": {"type": ["string", "null"]},
        "error": {"type": ["string", "null"]},
    },
}

POINT_REPORT_SCHEMA = {
    "type": "object",
    "required": ["type", "point", "options", "n", "solved_fraction", "sat_fraction",
                 "p50_ms", "p90_ms"],
    "properties": {
        "type": {"const": "point"},
        "point": {"type": "string"},
        "options": {"type": "string"},
        "n": {"type": "integer", "minimum": 0},
        "solved_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "sat_fraction": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "p50_ms": {"type": ["number", "null"]},
        "p90_ms": {"type": ["number", "null"]},
    },
}


@dataclass
class RunReport:
    instance: str
    options: str
    verdict: str
    vars: Optional[int] = None
    clauses: Optional[int] = None
    labels: Optional[int] = None
    encode_ms: Optional[float] = None
    solve_ms: Optional[float] = None
    model_check: Optional[str] = None
    cnf_sha256: Optional[str] = None
    point: Optional[str] = None
    error: Optional[str] = None
    type: str = "run"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _ms(t0):
    return round((time.perf_counter() - t0) * 1000.0, 3)


def options_from_args(args) -> EncodeOptions:
    lift = {"no": "no", "yes": "lift", "lift": "lift", "ctrl": "ctrl"}[args.lift]
    plr = args.plr or args.plr_bcp
    bcp = args.bcp or args.plr_bcp
    kw = {}
    if args.max_clauses is not None:
        kw["max_clauses"] = args.max_clauses
    if args.max_labels is not None:
        kw["max_labels"] = args.max_labels
    return EncodeOptions(fmt=args.format, lift=lift, plr=plr, bcp=bcp,
                         simplify=args.simplify, **kw)


def _add_encoding_flags(p):
    p.add_argument("--format", choices=["bnf", "nnf"], default="bnf")
    p.add_argument("--lift", choices=["no", "yes", "ctrl"], default="no")
    p.add_argument("--plr", action="store_true", help="on-the-fly pure literal reduction")
    p.add_argument("--bcp", action="store_true", help="on-the-fly unit propagation")
    p.add_argument("--plr-bcp", action="store_true", help="shorthand for --plr --bcp")
    p.add_argument("--simplify", action="store_true", help="Boolean simplification before encoding")
    p.add_argument("--max-clauses", type=int, default=None)
    p.add_argument("--max-labels", type=int, default=None)


def _read_formula(path):
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    return parse(text)


# ---------------------------------------------------------------------------
# pipeline shared by solve and bench


def _external_solve(cmd, cnf, timeout):
    with tempfile.NamedTemporaryFile("wb", suffix=".cnf", delete=False) as fh:
        fh.write(write_dimacs(cnf))
        path = fh.name
    try:
        proc = subprocess.run([cmd, path], capture_output=True, text=True, timeout=timeout)
    finally:
        os.unlink(path)
    status = None
    lits = []
    for line in proc.stdout.splitlines():
        if line.startswith("s "):
            status = line[2:].strip()
        elif line.startswith("v "):
            lits.extend(int(x) for x in line[2:].split())
    if status == "UNSATISFIABLE":
        return None
    if status != "SATISFIABLE":
        raise Km2SatError(f"external solver gave no verdict (exit {proc.returncode})")
    model = {v: False for v in range(1, cnf.num_vars + 1)}
    for lit in lits:
        if lit:
            model[abs(lit)] = lit > 0
    if not cnf.evaluate(model):
        raise Km2SatError("external solver returned an assignment that fails the CNF")
    return model


def run_pipeline(f, opts: EncodeOptions, instance="-", timeout=None, max_bytes=None,
                 solver="embedded", model_out=None, point=None):
    """Encode, solve and (on sat) certify ``f``.  Returns a RunReport."""
    rep = RunReport(instance=instance, options=opts.name, verdict="error", point=point)
    start = time.monotonic()
    deadline = start + timeout if timeout else None
    limits = {"deadline": deadline}
    if max_bytes is not None:
        # every clause line takes at least four bytes ("1 0\n")
        limits["max_clauses"] = min(opts.max_clauses, max_bytes // 4 + 1)
    t0 = time.perf_counter()
    try:
        enc = encode(f, EncodeOptions(**{**asdict(opts), **limits}))
    except Timeout:
        rep.verdict, rep.encode_ms = "timeout", _ms(t0)
        return rep, None
    except BudgetExhausted as exc:
        rep.verdict, rep.encode_ms, rep.error = "budget", _ms(t0), str(exc)
        return rep, None
    rep.encode_ms = _ms(t0)
    rep.vars, rep.clauses, rep.labels = enc.cnf.num_vars, len(enc.cnf.clauses), enc.stats.labels
    data = write_dimacs(enc.cnf)
    rep.cnf_sha256 = hashlib.sha256(data).hexdigest()
    if max_bytes is not None and len(data) > max_bytes:
        rep.verdict, rep.error = "budget", f"encoding is {len(data)} bytes > {max_bytes}"
        return rep, enc
    t1 = time.perf_counter()
    try:
        if solver == "embedded":
            model = solve(enc.cnf, deadline=deadline)
        else:
            remaining = None if deadline is None else max(0.01, deadline - time.monotonic())
            model = _external_solve(solver, enc.cnf, remaining)
    except (Timeout, subprocess.TimeoutExpired):
        rep.verdict, rep.solve_ms = "timeout", _ms(t1)
        return rep, enc
    rep.solve_ms = _ms(t1)
    if model is None:
        rep.verdict = "unsat"
        return rep, enc
    rep.verdict = "sat"
    try:
        km = extract_model(f, enc, model)
        rep.model_check = "pass"
    except ModelCheckError as exc:
        rep.model_check, rep.error = "fail", str(exc)
        return rep, enc
    if model_out:
        Path(model_out).write_text(km.dump())
    return rep, enc


def _exit_for(verdict):
    return {"sat": EXIT_SAT, "unsat": EXIT_UNSAT, "timeout": EXIT_TIMEOUT,
            "budget": EXIT_TIMEOUT}.get(verdict, EXIT_ERROR)


# ---------------------------------------------------------------------------
# subcommands


def cmd_encode(args):
    f = _read_formula(args.input)
    opts = options_from_args(args)
    rep = RunReport(instance=args.input, options=opts.name, verdict="error")
    t0 = time.perf_counter()
    try:
        enc = encode(f, opts)
    except BudgetExhausted as exc:
        rep.verdict, rep.error = "budget", str(exc)
        print(rep.to_json())
        return EXIT_TIMEOUT
    rep.encode_ms = _ms(t0)
    data = write_dimacs(enc.cnf)
    rep.vars, rep.clauses, rep.labels = enc.cnf.num_vars, len(enc.cnf.clauses), enc.stats.labels
    rep.cnf_sha256 = hashlib.sha256(data).hexdigest()
    rep.verdict = "unsat" if enc.trivial == "unsat" else "encoded"
    report_stream = sys.stdout
    if args.output == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        report_stream = sys.stderr
    else:
        Path(args.output).write_bytes(data)
        map_path = args.map or args.output + ".map"
        Path(map_path).write_text("".join(line + "\n" for line in enc.sidecar_lines()))
    record = asdict(rep)
    record["groups"] = enc.stats.groups
    print(json.dumps(record, sort_keys=True), file=report_stream)
    return EXIT_SAT


def cmd_solve(args):
    f = _read_formula(args.input)
    opts = options_from_args(args)
    solver = args.solver
    if solver != "embedded":
        if not solver.startswith("external:"):
            raise Km2SatError(f"unknown solver {solver!r}")
        solver = solver[len("external:"):]
    rep, _ = run_pipeline(f, opts, instance=args.input, timeout=args.timeout,
                          max_bytes=args.max_bytes, solver=solver, model_out=args.model)
    print(rep.to_json())
    if rep.model_check == "fail":
        return EXIT_ERROR
    return _exit_for(rep.verdict)


def _gen_one(kind, params):
    if kind == "branch-n":
        return benchgen.gen_branch_n(params["h"])
    if kind == "branch-p":
        return benchgen.gen_branch_p(params["h"])
    if kind == "random":
        return benchgen.gen_random_boxcnf(benchgen.RandomCnfParams(**params))
    raise ValueError(f"unknown generator {kind!r}")


def cmd_gen(args):
    items = []
    if args.kind in ("branch-n", "branch-p"):
        items.append((f"{args.kind}-h{args.h}", {"h": args.h}))
    else:
        for i in range(args.count):
            seed = args.seed if args.count == 1 else benchgen.derive_seed(args.seed, i)
            params = benchgen.RandomCnfParams(d=args.d, L=args.L, k=args.k, N=args.N, m=args.m,
                                              p=args.p, seed=seed).as_dict()
            items.append((f"random-d{args.d}-N{args.N}-L{args.L}-{i:04d}", params))
    manifest = []
    for name, params in items:
        f = _gen_one(args.kind, params)
        text = to_text(f) + "\n"
        entry = {"file": name + ".km", "generator": args.kind, "params": params,
                 "seed": params.get("seed")}
        manifest.append(entry)
        if args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / entry["file"]).write_text(text)
        else:
            sys.stdout.write(text)
    lines = "".join(json.dumps(e, sort_keys=True) + "\n" for e in manifest)
    if args.out_dir:
        with open(Path(args.out_dir) / "manifest.jsonl", "a") as fh:
            fh.write(lines)
    else:
        sys.stderr.write(lines)
    return EXIT_SAT


# ---------------------------------------------------------------------------
# bench


def expand_suite(suite: dict, base_dir=".") -> list:
    """Flatten a suite description into instance specs, sorted by id."""
    instances = []
    for block_no, block in enumerate(suite.get("points", [])):
        gen = block.get("generator")
        if gen == "random":
            base = dict(block.get("params", {}))
            seed = int(block.get("seed", 0))
            N = base.get("N", 3)
            for ratio in block.get("L_over_N", [base.get("L", N) // N]):
                point = f"random-d{base.get('d', 1)}-N{N}-p{base.get('p', 0.5)}-LN{ratio}"
                for s in range(int(block.get("samples", 1))):
                    params = {**base, "L": int(ratio * N),
                              "seed": benchgen.derive_seed(seed, block_no, int(ratio), s)}
                    instances.append({"id": f"{point}-{s:04d}", "point": point,
                                      "generator": "random", "params": params})
        elif gen in ("branch-n", "branch-p"):
            for h in block.get("h", []):
                point = f"{gen}-h{h}"
                instances.append({"id": point, "point": point, "generator": gen,
                                  "params": {"h": int(h)}})
        elif "files" in block:
            point = block.get("point", f"files-{block_no}")
            for pattern in block["files"]:
                for path in sorted(glob.glob(str(Path(base_dir) / pattern))):
                    instances.append({"id": f"{point}-{Path(path).name}", "point": point,
                                      "file": path})
        else:
            raise ValueError(f"bad suite block #{block_no}: {block!r}")
    instances.sort(key=lambda spec: spec["id"])
    return instances


def _bench_job(job):
    spec, opt_name, timeout = job
    opts = EncodeOptions.from_name(opt_name)
    try:
        if "file" in spec:
            f = parse(Path(spec["file"]).read_text())
        else:
            f = _gen_one(spec["generator"], spec["params"])
        rep, _ = run_pipeline(f, opts, instance=spec["id"], timeout=timeout, point=spec["point"])
    except Exception as exc:  # recorded per instance, never fatal
        rep = RunReport(instance=spec["id"], options=opt_name, verdict="error",
                        point=spec["point"], error=f"{type(exc).__name__}: {exc}")
    return asdict(rep)


def nearest_rank(values, q):
    """Nearest-rank percentile of ``values`` (inf allowed); None for empty input."""
    if not values:
        return None
    xs = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(xs)))
    v = xs[rank - 1]
    return None if math.isinf(v) else v


def aggregate(runs: list) -> list:
    groups = {}
    for run in runs:
        groups.setdefault((run["point"], run["options"]), []).append(run)
    out = []
    for (point, opt), items in sorted(groups.items()):
        solved = [r for r in items if r["verdict"] in ("sat", "unsat")]
        times = [
            (r["encode_ms"] or 0.0) + (r["solve_ms"] or 0.0) if r in solved else math.inf
            for r in items
        ]
        out.append({
            "type": "point",
            "point": point,
            "options": opt,
            "n": len(items),
            "solved_fraction": len(solved) / len(items),
            "sat_fraction": (sum(r["verdict"] == "sat" for r in solved) / len(solved)
                             if solved else None),
            "p50_ms": nearest_rank(times, 50),
            "p90_ms": nearest_rank(times, 90),
        })
    return out


def run_bench(suite: dict, options: list, workers: int = 1, timeout=None, base_dir="."):
    instances = expand_suite(suite, base_dir)
    jobs = [(spec, opt, timeout) for spec in instances for opt in options]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_bench_job, jobs, chunksize=4))
    else:
        runs = [_bench_job(job) for job in jobs]
    runs.sort(key=lambda r: (r["instance"], r["options"]))
    return runs, aggregate(runs)


def cmd_bench(args):
    suite = json.loads(Path(args.suite).read_text())
    options = args.options or suite.get("options") or ["bnf-nolift"]
    workers = args.workers or int(os.environ.get(WORKERS_ENV, "1"))
    timeout = args.timeout if args.timeout is not None else suite.get("timeout")
    runs, points = run_bench(suite, options, workers=workers, timeout=timeout,
                             base_dir=str(Path(args.suite).parent))
    lines = [json.dumps(r, sort_keys=True) for r in runs + points]
    Path(args.out).write_text("".join(line + "\n" for line in lines))
    summary = {"type": "bench", "suite": args.suite, "instances": len(runs),
               "points": len(points), "errors": sum(r["verdict"] == "error" for r in runs)}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_SAT


def build_parser():
    ap = argparse.ArgumentParser(prog="km2sat", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="write the CNF encoding of a formula")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="DIMACS output path ('-' for stdout)")
    p.add_argument("--map", help="sidecar map path (default: OUTPUT.map)")
    _add_encoding_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("solve", help="encode, solve and certify")
    p.add_argument("input")
    _add_encoding_flags(p)
    p.add_argument("--timeout", type=float, default=None, help="seconds")
    p.add_argument("--max-bytes", type=int, default=None, help="DIMACS size limit")
    p.add_argument("--solver", default="embedded", help="embedded | external:PATH")
    p.add_argument("--model", help="write the Kripke model here when sat")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gen", help="generate benchmark formulas")
    p.add_argument("kind", choices=["branch-n", "branch-p", "random"])
    p.add_argument("--h", type=int, default=1)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--L", type=int, default=10)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--N", type=int, default=3)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("suite", help="suite description (JSON)")
    p.add_argument("--out", required=True, help="report path (JSON lines)")
    p.add_argument("--options", nargs="*", help="option names such as bnf-lift-plr-bcp")
    p.add_argument("--workers", type=int, default=None, help=f"default: ${WORKERS_ENV} or 1")
    p.add_argument("--timeout", type=float, default=None)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, Km2SatError, ValueError, OSError) as exc:
        print(f"km2sat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
