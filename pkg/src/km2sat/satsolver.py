"""A small CDCL solver with DIMACS input and output.

Two watched literals, first-UIP learning with non-chronological backjumping,
activity-based decisions (ties broken towards the lowest variable index) and
phase saving, starting from each variable's majority polarity.  Luby restarts exist but are off by default so that runs are
reproducible.  Run ``python -m km2sat.satsolver FILE`` for the usual
``s``/``v`` output and exit codes 10/20.
"""

from __future__ import annotations

import heapq
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

from .errors import DimacsError, Timeout


@dataclass
class CnfFormula:
    num_vars: int
    clauses: list = field(default_factory=list)

    def __post_init__(self):
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        norm = []
        for clause in self.clauses:
            seen = set()
            out = []
            taut = False
            for lit in clause:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} out of range 1..{self.num_vars}")
                if -lit in seen:
                    taut = True
                    break
                if lit not in seen:
                    seen.add(lit)
                    out.append(lit)
            if not taut:
                norm.append(out)
        self.clauses = norm

    @classmethod
    def trusted(cls, num_vars, clauses):
        """Wrap clauses already known to be normalized, skipping the checks."""
        obj = cls.__new__(cls)
        obj.num_vars = num_vars
        obj.clauses = clauses
        return obj

    def evaluate(self, model) -> bool:
        """``model`` maps var -> bool (missing vars count as False)."""
        for clause in self.clauses:
            if not any(model.get(abs(l), False) == (l > 0) for l in clause):
                return False
        return True


class Solver:
    """CDCL search state for one formula.  Not reusable across formulas."""

    def __init__(self, cnf: CnfFormula, restarts: bool = False, deadline: Optional[float] = None):
        n = cnf.num_vars
        self.n = n
        self.cnf = cnf
        self.restarts = restarts
        self.deadline = deadline
        self.lit_val = [0] * (2 * n + 1)  # index n + lit
        self.level = [0] * (n + 1)
        self.reason = [None] * (n + 1)
        self.trail = []
        self.trail_lim = []
        self.qhead = 0
        self.clauses = []
        self.learned = []
        self.watches = [[] for _ in range(2 * n + 1)]
        self.activity = [0.0] * (n + 1)
        self.var_inc = 1.0
        self.phase = [False] * (n + 1)
        self.occurs = [False] * (n + 1)
        self.heap = []
        self.conflicts = 0
        self.decisions = 0
        self.unsat = False
        balance = [0] * (n + 1)
        for clause in cnf.clauses:
            for lit in clause:
                self.occurs[abs(lit)] = True
                balance[abs(lit)] += 1 if lit > 0 else -1
            self._add_input(list(clause))
        # initial phase: the polarity the variable occurs with more often
        self.phase = [b > 0 for b in balance]
        self.num_occurring = sum(self.occurs)
        self.heap = [(0.0, v) for v in range(1, n + 1) if self.occurs[v]]
        heapq.heapify(self.heap)

    # -- basic state -----------------------------------------------------

    def value(self, lit):
        return self.lit_val[self.n + lit]

    def decision_level(self):
        return len(self.trail_lim)

    def _enqueue(self, lit, reason):
        n = self.n
        self.lit_val[n + lit] = 1
        self.lit_val[n - lit] = -1
        v = abs(lit)
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _add_input(self, clause):
        if self.unsat:
            return
        if not clause:
            self.unsat = True
            return
        if len(clause) == 1:
            val = self.value(clause[0])
            if val < 0:
                self.unsat = True
            elif val == 0:
                self._enqueue(clause[0], None)
            return
        cid = len(self.clauses)
        self.clauses.append(clause)
        self.watches[self.n + clause[0]].append(cid)
        self.watches[self.n + clause[1]].append(cid)

    # -- Fig. 1 style primitives -----------------------------------------

    def propagate(self):
        """Unit propagation to fixpoint; returns a conflicting clause id or None."""
        n = self.n
        lit_val = self.lit_val
        clauses = self.clauses
        watches = self.watches
        trail = self.trail
        level_now = len(self.trail_lim)
        level, reason = self.level, self.reason
        while self.qhead < len(trail):
            p = trail[self.qhead]
            self.qhead += 1
            false_lit = -p
            ws = watches[n + false_lit]
            i = 0
            j = 0
            end = len(ws)
            while i < end:
                cid = ws[i]
                i += 1
                c = clauses[cid]
                if c[0] == false_lit:
                    c[0] = c[1]
                    c[1] = false_lit
                first = c[0]
                if lit_val[n + first] == 1:
                    ws[j] = cid
                    j += 1
                    continue
                for k in range(2, len(c)):
                    lk = c[k]
                    if lit_val[n + lk] != -1:
                        c[1] = lk
                        c[k] = false_lit
                        watches[n + lk].append(cid)
                        break
                else:
                    ws[j] = cid
                    j += 1
                    if lit_val[n + first] == -1:
                        while i < end:
                            ws[j] = ws[i]
                            j += 1
                            i += 1
                        del ws[j:]
                        return cid
                    lit_val[n + first] = 1
                    lit_val[n - first] = -1
                    v = first if first > 0 else -first
                    level[v] = level_now
                    reason[v] = cid
                    trail.append(first)
            del ws[j:]
        return None

    def deduce(self):
        """Returns ``("conflict", clause)``, ``("sat", None)`` or ``("unknown", None)``."""
        if self.unsat:
            return "conflict", []
        cid = self.propagate()
        if cid is not None:
            return "conflict", list(self.clauses[cid])
        if len(self.trail) == self.num_occurring:
            return "sat", None
        return "unknown", None

    def _bump(self, v):
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for u in range(1, self.n + 1):
                self.activity[u] *= 1e-100
            self.var_inc *= 1e-100
            self.heap = [(-self.activity[u], u) for u in range(1, self.n + 1)
                         if self.occurs[u] and self.lit_val[self.n + u] == 0]
            heapq.heapify(self.heap)
            return
        if self.lit_val[self.n + v] == 0:
            heapq.heappush(self.heap, (-self.activity[v], v))

    def analyze_conflict(self, conflict):
        """First-UIP analysis of a conflicting clause id.

        Returns ``(learned clause, backjump level)``, or None at level 0.
        The asserting literal is first in the learned clause.
        """
        if self.decision_level() == 0:
            return None
        seen = bytearray(self.n + 1)
        level = self.level
        cur = self.decision_level()
        learnt = [0]
        counter = 0
        p = None
        idx = len(self.trail) - 1
        clause = self.clauses[conflict]
        while True:
            for q in (clause if p is None else clause[1:]):
                v = abs(q)
                if not seen[v] and level[v] > 0:
                    seen[v] = 1
                    self._bump(v)
                    if level[v] >= cur:
                        counter += 1
                    else:
                        learnt.append(q)
            while not seen[abs(self.trail[idx])]:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            seen[abs(p)] = 0
            counter -= 1
            if counter == 0:
                break
            clause = self.clauses[self.reason[abs(p)]]
        learnt[0] = -p
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda k: level[abs(learnt[k])])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, level[abs(learnt[1])]

    def backtrack(self, blevel):
        if self.decision_level() <= blevel:
            return
        n = self.n
        start = self.trail_lim[blevel]
        for lit in self.trail[start:]:
            v = abs(lit)
            self.phase[v] = lit > 0
            self.lit_val[n + v] = 0
            self.lit_val[n - v] = 0
            self.reason[v] = None
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[start:]
        del self.trail_lim[blevel:]
        self.qhead = len(self.trail)

    def decide(self):
        """Open a new decision level on the most active unassigned variable."""
        heap = self.heap
        n = self.n
        while heap:
            _, v = heapq.heappop(heap)
            if self.lit_val[n + v] == 0:
                self.trail_lim.append(len(self.trail))
                self.decisions += 1
                self._enqueue(v if self.phase[v] else -v, None)
                return v
        return None

    def _learn(self, learnt):
        if len(learnt) == 1:
            self._enqueue(learnt[0], None)
            return
        cid = len(self.clauses)
        self.clauses.append(learnt)
        self.learned.append(list(learnt))
        self.watches[self.n + learnt[0]].append(cid)
        self.watches[self.n + learnt[1]].append(cid)
        self._enqueue(learnt[0], cid)

    # -- search ----------------------------------------------------------

    def solve(self) -> Optional[dict]:
        if self.unsat:
            return None
        restart_at = _luby(1) * 100 if self.restarts else None
        restart_count = 1
        since_restart = 0
        while True:
            confl = self.propagate()
            if confl is not None:
                self.conflicts += 1
                since_restart += 1
                result = self.analyze_conflict(confl)
                if result is None:
                    self.unsat = True
                    return None
                learnt, blevel = result
                self.backtrack(blevel)
                self._learn(learnt)
                self.var_inc /= 0.95
                if self.deadline is not None and (self.conflicts & 127) == 0:
                    if time.monotonic() > self.deadline:
                        raise Timeout("solver deadline reached")
                continue
            if restart_at is not None and since_restart >= restart_at:
                restart_count += 1
                restart_at = _luby(restart_count) * 100
                since_restart = 0
                self.backtrack(0)
                continue
            if self.decide() is None:
                model = {v: self.lit_val[self.n + v] == 1 for v in range(1, self.n + 1)}
                if not self.cnf.evaluate(model):  # pragma: no cover - soundness guard
                    raise AssertionError("solver produced a non-model")
                return model


def _luby(i):
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    while True:
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        if i >= 1 << (k - 1):
            i -= (1 << (k - 1)) - 1
        k -= 1
        while (1 << k) - 1 < i:
            k += 1


def solve(cnf: CnfFormula, restarts: bool = False, deadline: Optional[float] = None) -> Optional[dict]:
    """Satisfying total assignment (var -> bool), or None when unsatisfiable."""
    return Solver(cnf, restarts=restarts, deadline=deadline).solve()


# ---------------------------------------------------------------------------
# DIMACS


def write_dimacs(cnf: CnfFormula, comments=()) -> bytes:
    lines = [f"c {c}" for c in comments]
    lines.append(f"p cnf {cnf.num_vars} {len(cnf.clauses)}")
    for clause in cnf.clauses:
        lines.append(" ".join(map(str, clause)) + " 0" if clause else "0")
    return ("\n".join(lines) + "\n").encode("ascii")


def read_dimacs(data) -> CnfFormula:
    if isinstance(data, bytes):
        data = data.decode("ascii")
    header = None
    clauses = []
    current = []
    for lineno, line in enumerate(data.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("c"):
            continue
        if s.startswith("p"):
            if header is not None:
                raise DimacsError(f"line {lineno}: duplicate header")
            parts = s.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: malformed header {s!r}")
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"line {lineno}: malformed header {s!r}") from None
            if header[0] < 0 or header[1] < 0:
                raise DimacsError(f"line {lineno}: negative counts in header")
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause before header")
        for tok in s.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"line {lineno}: bad literal {tok!r}") from None
            if lit == 0:
                clauses.append(current)
                current = []
            elif abs(lit) > header[0]:
                raise DimacsError(f"line {lineno}: literal {lit} out of range 1..{header[0]}")
            else:
                current.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        raise DimacsError("unterminated clause at end of input")
    if len(clauses) != header[1]:
        raise DimacsError(f"header declares {header[1]} clauses, found {len(clauses)}")
    return CnfFormula(header[0], clauses)


def format_model(model: dict) -> str:
    lits = [v if model[v] else -v for v in sorted(model)]
    lines = []
    for i in range(0, len(lits), 16):
        lines.append("v " + " ".join(map(str, lits[i:i + 16])))
    lines.append("v 0")
    return "\n".join(lines)


def main(argv=None):
    import argparse

    ap = argparse.ArgumentParser(prog="km2sat-sat", description="Solve a DIMACS CNF file.")
    ap.add_argument("file")
    ap.add_argument("--restarts", action="store_true")
    args = ap.parse_args(argv)
    try:
        with open(args.file, "rb") as fh:
            cnf = read_dimacs(fh.read())
    except (OSError, DimacsError) as exc:
        print(f"c error: {exc}", file=sys.stderr)
        return 1
    model = solve(cnf, restarts=args.restarts)
    if model is None:
        print("s UNSATISFIABLE")
        return 20
    print("s SATISFIABLE")
    print(format_model(model))
    return 10


if __name__ == "__main__":
    sys.exit(main())
