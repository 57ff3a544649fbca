"""Kripke semantics, model extraction from SAT assignments, and a reference oracle."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from . import formula as fm
from .errors import ModelCheckError, OracleGuardError
from .formula import FALSE, TRUE, Formula, Not, Tag, classify


@dataclass
class KripkeModel:
    """States are label strings; the root state is ``"1"``."""

    states: list = field(default_factory=lambda: ["1"])
    valuation: dict = field(default_factory=dict)  # (state, atom index) -> bool
    relations: dict = field(default_factory=dict)  # modality -> set of (parent, child)

    def __post_init__(self):
        self._succ = None

    def successors(self, state, r):
        if self._succ is None:
            succ = defaultdict(list)
            for mod, pairs in self.relations.items():
                for parent, child in sorted(pairs):
                    succ[(parent, mod)].append(child)
            self._succ = succ
        return self._succ.get((state, r), [])

    def add_edge(self, r, parent, child):
        self.relations.setdefault(r, set()).add((parent, child))
        self._succ = None

    def dump(self) -> str:
        lines = [f"s {s}" for s in self.states]
        for (s, a), val in sorted(self.valuation.items()):
            lines.append(f"v {s} {a} {int(val)}")
        for r in sorted(self.relations):
            for parent, child in sorted(self.relations[r]):
                lines.append(f"r {r} {parent} {child}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "KripkeModel":
        m = cls(states=[])
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "s":
                m.states.append(parts[1])
            elif parts[0] == "v":
                m.valuation[(parts[1], int(parts[2]))] = parts[3] == "1"
            elif parts[0] == "r":
                m.add_edge(int(parts[1]), parts[2], parts[3])
            else:
                raise ValueError(f"bad model line {line!r}")
        return m


def evaluate(model: KripkeModel, state: str, f: Formula) -> bool:
    """``model, state |= f`` for formulas in any shape (NNF, BNF or mixed)."""
    if state not in set(model.states):
        raise KeyError(f"unknown state {state!r}")
    memo = {}

    def holds(s, g):
        key = (s, g)
        r = memo.get(key)
        if r is not None:
            return r
        cat = classify(g)
        tag = cat.tag
        if tag == Tag.CONSTANT:
            r = g is TRUE
        elif tag == Tag.LITERAL:
            if g.kind == fm.ATOM_K:
                r = model.valuation.get((s, g.num), False)
            else:
                r = not model.valuation.get((s, g.args[0].num), False)
        elif tag == Tag.ALPHA:
            r = all(holds(s, p) for p in cat.parts)
        elif tag == Tag.BETA:
            r = any(holds(s, p) for p in cat.parts)
        elif tag == Tag.PI:
            r = any(holds(t, cat.body) for t in model.successors(s, cat.modality))
        else:
            r = all(holds(t, cat.body) for t in model.successors(s, cat.modality))
        memo[key] = r
        return r

    return holds(state, f)


# public alias; ``evaluate`` avoids shadowing the builtin inside this module
eval_formula = evaluate


def extract_model(f: Formula, enc, assignment: dict, check: bool = True) -> KripkeModel:
    """Build the Kripke model induced by a satisfying assignment of an encoding.

    States are the labels of the encoding, atoms take the value of their
    variables and ``sigma -R_r-> sigma.i`` holds when the pi literal that
    created ``sigma.i`` is true.  With ``check`` the model is verified against
    ``f`` at the root and :class:`ModelCheckError` is raised on failure.
    """
    if enc.trivial == "unsat":
        raise ModelCheckError("the encoding is the trivial contradiction; no model exists")
    mu = dict(assignment)
    mu.update(enc.fixed)
    if not enc.cnf.evaluate(mu):
        raise ModelCheckError("assignment does not satisfy the encoding")

    def lit_true(lit):
        return mu.get(abs(lit), False) == (lit > 0)

    names = [enc.label_name(i) for i in range(len(enc.labels))] or ["1"]
    model = KripkeModel(states=names)
    for var, (lab, node) in enc.varmap.items():
        if node.kind == fm.ATOM_K:
            model.valuation[(names[lab], node.num)] = mu.get(var, False)
    for edge in enc.pi_edges:
        if lit_true(edge.lit):
            model.add_edge(edge.modality, names[edge.label], names[edge.child])
    if check and not evaluate(model, "1", f):
        raise ModelCheckError("extracted model does not satisfy the formula at the root")
    return model


class _Oracle:
    def __init__(self):
        self.memo = {}

    def world(self, items: frozenset) -> bool:
        r = self.memo.get(items)
        if r is None:
            r = self.search(list(items), frozenset(), (), (), ())
            self.memo[items] = r
        return r

    def search(self, pending, asserted, betas, pis, nus) -> bool:
        asserted = set(asserted)
        betas = list(betas)
        pis = list(pis)
        nus = list(nus)
        while True:
            while pending:
                g = pending.pop()
                if g in asserted or g is TRUE:
                    continue
                if g is FALSE or Not(g) in asserted:
                    return False
                asserted.add(g)
                cat = classify(g)
                if cat.tag == Tag.ALPHA:
                    pending.extend(cat.parts)
                elif cat.tag == Tag.BETA:
                    betas.append(g)
                elif cat.tag == Tag.PI:
                    pis.append(g)
                elif cat.tag == Tag.NU:
                    nus.append(g)
            open_betas = []
            for b in betas:
                parts = classify(b).parts
                if any(p in asserted or p is TRUE for p in parts):
                    continue
                live = [p for p in parts if p is not FALSE and Not(p) not in asserted]
                if not live:
                    return False
                if len(live) == 1:
                    pending.append(live[0])
                else:
                    open_betas.append((b, live))
            betas = [b for b, _ in open_betas]
            if not pending:
                break
        if open_betas:
            b, live = min(open_betas, key=lambda item: len(item[1]))
            rest = [x for x in betas if x is not b]
            for i, p in enumerate(live):
                # semantic branching: later branches assume the earlier disjuncts false
                branch = [Not(q) for q in live[:i]] + [p]
                if self.search(branch, frozenset(asserted), rest, pis, nus):
                    return True
            return False
        by_mod = defaultdict(list)
        for nu in nus:
            cat = classify(nu)
            by_mod[cat.modality].append(cat.body)
        for pi in pis:
            cat = classify(pi)
            if not self.world(frozenset([cat.body, *by_mod.get(cat.modality, ())])):
                return False
        return True


def brute_force_oracle(f: Formula, max_depth: int = 3, max_modal_atoms=12) -> bool:
    """Decide K_m satisfiability by exhaustive tableau search over tree models.

    At each world the search branches on disjunctions (with semantic
    branching), then checks every diamond-like formula together with the
    matching box-like bodies in a fresh successor.  Independent of the
    encoder.  Guards: modal depth and number of distinct modal atoms
    (``None`` disables a guard).
    """
    if max_depth is not None and fm.depth(f) > max_depth:
        raise OracleGuardError(f"formula depth {fm.depth(f)} exceeds oracle guard {max_depth}")
    if max_modal_atoms is not None:
        boxes = {g for g in fm.subformulas(f) if g.kind in (fm.BOX_K, fm.DIA_K)}
        if len(boxes) > max_modal_atoms:
            raise OracleGuardError(
                f"{len(boxes)} modal atoms exceed oracle guard {max_modal_atoms}")
    return _Oracle().world(frozenset([f]))
