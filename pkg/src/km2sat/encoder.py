"""K_m2SAT: translate a K_m formula into an equisatisfiable propositional CNF.

Every labeled formula <sigma, psi> (psi not a negation) gets a Boolean
variable.  ``Def(sigma, psi)`` obligations are expanded breadth-first over
labels; inside one label the order is alpha/beta, then pi, then nu, so that
each nu clause sees every pi successor of its label.

Optional on-the-fly passes: unit propagation while clauses are produced
(``bcp``), pure-literal reduction when a label is finished (``plr``), and
demand tracking so that definitions nobody relies on are never expanded.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from . import formula as fm
from .errors import BudgetExhausted, Timeout
from .formula import FALSE, NOT_K, TRUE, Formula, Tag, classify
from .satsolver import CnfFormula

PENDING, EXPANDED, SKIPPED = 0, 1, 2


@dataclass(frozen=True)
class EncodeOptions:
    fmt: str = "bnf"
    lift: str = "no"
    plr: bool = False
    bcp: bool = False
    simplify: bool = False
    max_clauses: int = 1 << 26
    max_labels: int = 1 << 22
    deadline: Optional[float] = None  # absolute time.monotonic() value
    trace: bool = False

    @property
    def name(self) -> str:
        lift = {"no": "nolift", "lift": "lift", "ctrl": "ctrllift"}[self.lift]
        parts = [self.fmt, lift]
        if self.plr:
            parts.append("plr")
        if self.bcp:
            parts.append("bcp")
        if self.simplify:
            parts.append("simp")
        return "-".join(parts)

    @classmethod
    def from_name(cls, name: str, **kw) -> "EncodeOptions":
        fmt, lift = "bnf", "no"
        flags = {"plr": False, "bcp": False, "simplify": False}
        for tok in name.split("-"):
            if tok in fm.FORMATS:
                fmt = tok
            elif tok in ("nolift", "lift", "ctrllift"):
                lift = {"nolift": "no", "lift": "lift", "ctrllift": "ctrl"}[tok]
            elif tok in ("plr", "bcp"):
                flags[tok] = True
            elif tok == "simp":
                flags["simplify"] = True
            else:
                raise ValueError(f"unknown option token {tok!r} in {name!r}")
        return cls(fmt=fmt, lift=lift, **flags, **kw)


def option_matrix(**kw) -> list:
    """The twelve format x lifting x (plr+bcp) combinations."""
    return [
        EncodeOptions(fmt=fmt, lift=lift, plr=on, bcp=on, **kw)
        for fmt in fm.FORMATS
        for lift in fm.LIFT_MODES
        for on in (False, True)
    ]


def label_text(path: tuple) -> str:
    parts = ["1"]
    for n, r in path:
        parts.append(str(n) if r == 1 else f"{n}^{r}")
    return ".".join(parts)


def parse_label(text: str) -> tuple:
    items = text.split(".")
    if items[0] != "1":
        raise ValueError(f"label must start at the root 1: {text!r}")
    path = []
    for item in items[1:]:
        n, _, r = item.partition("^")
        path.append((int(n), int(r) if r else 1))
    return tuple(path)


@dataclass
class PiEdge:
    label: int  # label id of sigma
    modality: int
    child: int  # label id of sigma.j
    lit: int  # L<sigma, pi>


@dataclass
class EncodeStats:
    labels: int = 0
    vars: int = 0
    clauses: int = 0
    groups: int = 0
    plr_dropped: int = 0
    bcp_skipped: int = 0
    valid_dropped: int = 0
    expanded: int = 0

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class EncodeResult:
    cnf: CnfFormula
    root_var: Optional[int]
    stats: EncodeStats
    trivial: Optional[str] = None  # "unsat" for the contradiction sentinel
    formula: Optional[Formula] = None  # the preprocessed input that was encoded
    labels: list = field(default_factory=list)  # label paths by id
    varmap: dict = field(default_factory=dict)  # var -> (label id, node)
    fixed: dict = field(default_factory=dict)  # var -> bool decided while encoding
    pi_edges: list = field(default_factory=list)
    trace: Optional[list] = None
    options: Optional[EncodeOptions] = None

    def label_name(self, label_id: int) -> str:
        return label_text(self.labels[label_id])

    def var_of(self, label: str, node: Formula) -> Optional[int]:
        path = parse_label(label)
        for v, (lab, n) in self.varmap.items():
            if n is node and self.labels[lab] == path:
                return v
        return None

    def sidecar_lines(self):
        for v in sorted(self.varmap):
            lab, node = self.varmap[v]
            yield f"{v} {self.label_name(lab)} {fm.to_text(node)}"


class _Conflict(Exception):
    pass


class _Ob:
    __slots__ = ("label", "node", "status", "demanders", "tag")

    def __init__(self, label, node, tag):
        self.label = label
        self.node = node
        self.status = PENDING
        self.demanders = []
        self.tag = tag


class _LabelState:
    __slots__ = ("ab", "pi", "nu", "vars", "counters", "done")

    def __init__(self):
        self.ab = deque()
        self.pi = []
        self.nu = []
        self.vars = []
        self.counters = {}
        self.done = False


class Encoder:
    """One encoding run.  Use :func:`encode` unless the internals are needed."""

    def __init__(self, opts: EncodeOptions):
        self.opts = opts
        self.labels = []  # paths
        self.lstate = []
        self.var_index = {}  # (label id, node) -> var
        self.var_key = [None]  # var -> (label id, node)
        self.value = [0]  # var -> 0 / 1 / -1
        self.clauses = []
        self.alive = []
        self.group_of = []
        self.occ = {}  # literal -> clause ids
        self.obs = {}
        self.pi_edges = []
        self.edges_at = {}  # (label id, r) -> expanded pi edges
        self.stats = EncodeStats()
        self.trace = [] if opts.trace else None
        self._groups = 0
        self._ticks = 0
        self._plr_active = False
        self.root_ob = None

    # -- variables and literals ------------------------------------------

    def _new_label(self, path):
        if len(self.labels) >= self.opts.max_labels:
            raise BudgetExhausted(f"label budget {self.opts.max_labels} exhausted")
        self.labels.append(path)
        self.lstate.append(_LabelState())
        return len(self.labels) - 1

    def _var(self, label, node):
        key = (label, node)
        v = self.var_index.get(key)
        if v is None:
            v = len(self.var_key)
            self.var_index[key] = v
            self.var_key.append(key)
            self.value.append(0)
            self.lstate[label].vars.append(v)
        return v

    def _lit(self, label, node):
        if node.kind == fm.NOT_K:
            return -self._var(label, node.args[0])
        return self._var(label, node)

    def _val(self, lit):
        v = self.value[abs(lit)]
        return v if lit > 0 else -v

    # -- obligations -----------------------------------------------------

    def _register(self, label, node):
        """Make sure Def(label, node) is known; literals and constants need none."""
        key = (label, node)
        ob = self.obs.get(key)
        if ob is None:
            tag = classify(node).tag
            if tag in (Tag.LITERAL, Tag.CONSTANT):
                return None
            ob = _Ob(label, node, tag)
            self.obs[key] = ob
            self._enqueue(ob)
        return ob

    def _enqueue(self, ob):
        st = self.lstate[ob.label]
        if ob.tag in (Tag.ALPHA, Tag.BETA):
            st.ab.append(ob)
        elif ob.tag == Tag.PI:
            st.pi.append(ob)
        else:
            st.nu.append(ob)

    def _needed(self, ob):
        if ob is self.root_ob:
            return True
        val = self._val(self._lit(ob.label, ob.node))
        if val:
            return val > 0
        alive = self.alive
        return any(alive[c] for c in ob.demanders)

    # -- clause database -------------------------------------------------

    def _emit(self, heads, implicates, group):
        """Emit one clause: the negated premises ``heads`` plus implied parts.

        Valid clauses are never stored; with bcp the clause is simplified
        against the current assignment first.  Returns True when stored.
        """
        self._ticks += 1
        if self.opts.deadline is not None and (self._ticks & 255) == 0:
            if time.monotonic() > self.opts.deadline:
                raise Timeout("encoding deadline reached")
        if len(heads) == 2 and heads[0] == -heads[1]:
            self.stats.valid_dropped += 1
            return False
        lits = list(heads)
        parts = []
        var_index = self.var_index
        for label, node in implicates:
            if node is TRUE:
                self.stats.valid_dropped += 1
                return False
            if node is FALSE:
                continue
            if node.kind == NOT_K:
                v = var_index.get((label, node.args[0]))
                lit = -(v or self._var(label, node.args[0]))
            else:
                lit = var_index.get((label, node)) or self._var(label, node)
            if -lit in lits:
                self.stats.valid_dropped += 1
                return False
            if lit not in lits:
                lits.append(lit)
                parts.append((lit, label, node))
        obs = [(lit, self._register(label, node)) for lit, label, node in parts]

        if self.opts.bcp:
            value = self.value
            kept = []
            for lit in lits:
                val = value[lit] if lit > 0 else -value[-lit]
                if val > 0:
                    return False
                if val == 0:
                    kept.append(lit)
            if not kept:
                raise _Conflict()
            lits = kept
        elif not lits:
            raise _Conflict()

        if len(self.clauses) >= self.opts.max_clauses:
            raise BudgetExhausted(f"clause budget {self.opts.max_clauses} exhausted")
        cid = len(self.clauses)
        self.clauses.append(lits)
        self.alive.append(True)
        self.group_of.append(group)
        occ = self.occ
        for lit in lits:
            lst = occ.get(lit)
            if lst is None:
                occ[lit] = [cid]
            else:
                lst.append(cid)
        for lit, ob in obs:
            if ob is not None and lit in lits:
                ob.demanders.append(cid)
                if ob.status == SKIPPED:
                    ob.status = PENDING
                    self._enqueue(ob)
        if self.opts.bcp and len(lits) == 1:
            self._assign(lits[0])
        return True

    def _assign(self, lit):
        """Fix ``lit`` true; with bcp, propagate units to fixpoint."""
        queue = [lit]
        value, alive, clauses, occ = self.value, self.alive, self.clauses, self.occ
        propagate = self.opts.bcp
        while queue:
            l = queue.pop()
            v = abs(l)
            cur = value[v]
            want = 1 if l > 0 else -1
            if cur == want:
                continue
            if cur == -want:
                raise _Conflict()
            value[v] = want
            for c in occ.get(l, ()):
                if alive[c]:
                    alive[c] = False
                    if self._plr_active:
                        self.stats.plr_dropped += 1
            if not propagate:
                continue
            for c in occ.get(-l, ()):
                if not alive[c]:
                    continue
                unit = None
                count = 0
                for x in clauses[c]:
                    xv = value[abs(x)]
                    if xv == 0:
                        count += 1
                        unit = x
                        if count > 1:
                            break
                    elif (xv > 0) == (x > 0):
                        count = -1
                        break
                if count == 0:
                    raise _Conflict()
                if count == 1:
                    queue.append(unit)

    # -- expansion -------------------------------------------------------

    def _new_group(self):
        self._groups += 1
        return self._groups

    def _expand_ab(self, ob):
        label, node = ob.label, ob.node
        cat = classify(node)
        head = -self._lit(label, node)
        group = self._new_group()
        if cat.tag == Tag.ALPHA:
            seen = set()
            for part in cat.parts:
                if part in seen:
                    continue
                seen.add(part)
                self._emit([head], [(label, part)], group)
        else:
            self._emit([head], [(label, p) for p in cat.parts], group)

    def _expand_label(self, sigma):
        st = self.lstate[sigma]
        while st.ab or st.pi or st.nu:
            while st.ab:
                ob = st.ab.popleft()
                if ob.status != PENDING:
                    continue
                if not self._needed(ob):
                    ob.status = SKIPPED
                    self.stats.bcp_skipped += 1
                    continue
                ob.status = EXPANDED
                self.stats.expanded += 1
                self._expand_ab(ob)
            if st.pi:
                pis, st.pi = st.pi, []
                # pi formulas with a trivial body go last: they may reuse a successor
                pis.sort(key=lambda o: classify(o.node).body is TRUE)
                for ob in pis:
                    self._expand_pi(sigma, ob)
                continue
            if st.nu:
                nus, st.nu = st.nu, []
                for ob in nus:
                    self._expand_nu(sigma, ob)
        st.done = True
        if self.opts.plr:
            self._plr(sigma)

    def _expand_pi(self, sigma, ob):
        if ob.status != PENDING:
            return
        cat = classify(ob.node)
        r = cat.modality
        st = self.lstate[sigma]
        if not self._needed(ob):
            ob.status = SKIPPED
            self.stats.bcp_skipped += 1
            if cat.body is not TRUE:
                st.counters[r] = st.counters.get(r, 0) + 1
            return
        ob.status = EXPANDED
        self.stats.expanded += 1
        lit = self._lit(sigma, ob.node)
        existing = self.edges_at.setdefault((sigma, r), [])
        if cat.body is TRUE and existing:
            child = existing[0].child
        else:
            j = st.counters.get(r, 0) + 1
            st.counters[r] = j
            child = self._new_label(self.labels[sigma] + ((j, r),))
        edge = PiEdge(sigma, r, child, lit)
        existing.append(edge)
        self.pi_edges.append(edge)
        if self.trace is not None:
            self.trace.append(("pi", sigma, r))
        self._emit([-lit], [(child, cat.body)], self._new_group())

    def _expand_nu(self, sigma, ob):
        if ob.status != PENDING:
            return
        if not self._needed(ob):
            ob.status = SKIPPED
            self.stats.bcp_skipped += 1
            return
        ob.status = EXPANDED
        self.stats.expanded += 1
        cat = classify(ob.node)
        lit = self._lit(sigma, ob.node)
        for edge in self.edges_at.get((sigma, cat.modality), ()):
            if self.trace is not None:
                self.trace.append(("nu", sigma, cat.modality))
            self._emit([-lit, -edge.lit], [(edge.child, cat.body)], self._new_group())

    def _plr(self, sigma):
        value, alive, occ = self.value, self.alive, self.occ
        self._plr_active = True
        try:
            changed = True
            while changed:
                changed = False
                for v in self.lstate[sigma].vars:
                    if value[v]:
                        continue
                    pos = any(alive[c] for c in occ.get(v, ()))
                    neg = any(alive[c] for c in occ.get(-v, ()))
                    if pos == neg:
                        continue
                    self._assign(v if pos else -v)
                    changed = True
        finally:
            self._plr_active = False

    # -- driver ----------------------------------------------------------

    def run(self, f: Formula) -> EncodeResult:
        if f is FALSE:
            return self._trivial_unsat(f)
        root_label = self._new_label(())
        if f is TRUE:
            self.stats.labels = 1
            return EncodeResult(
                CnfFormula(0, []), None, self.stats, formula=f, labels=list(self.labels),
                options=self.opts,
            )
        try:
            root_lit = self._lit(root_label, f)
            if self.opts.bcp:
                self._force_clause([root_lit], self._new_group())
            else:
                self._emit([root_lit], [], self._new_group())
            self.root_ob = self._register(root_label, f)
            sigma = 0
            while sigma < len(self.labels):
                self._expand_label(sigma)
                sigma += 1
        except _Conflict:
            return self._trivial_unsat(f)
        return self._result(f, abs(root_lit))

    def _force_clause(self, lits, group):
        """Store a clause verbatim and assign its unit (bcp mode root assertion)."""
        cid = len(self.clauses)
        self.clauses.append(list(lits))
        self.alive.append(True)
        self.group_of.append(group)
        self._assign(lits[0])
        self.alive[cid] = True

    def _result(self, f, root_var):
        value = self.value
        out = []
        groups = set()
        for cid, lits in enumerate(self.clauses):
            if not self.alive[cid]:
                continue
            if cid == 0:
                out.append(list(lits))
            else:
                out.append([l for l in lits if value[abs(l)] == 0])
            groups.add(self.group_of[cid])
        nvars = len(self.var_key) - 1
        self.stats.labels = len(self.labels)
        self.stats.vars = nvars
        self.stats.clauses = len(out)
        self.stats.groups = len(groups)
        fixed = {v: value[v] > 0 for v in range(1, nvars + 1) if value[v]}
        return EncodeResult(
            cnf=CnfFormula.trusted(nvars, out),
            root_var=root_var,
            stats=self.stats,
            formula=f,
            labels=list(self.labels),
            varmap={v: self.var_key[v] for v in range(1, nvars + 1)},
            fixed=fixed,
            pi_edges=list(self.pi_edges),
            trace=self.trace,
            options=self.opts,
        )

    def _trivial_unsat(self, f):
        self.stats.labels = len(self.labels)
        self.stats.vars = 1
        self.stats.clauses = 2
        self.stats.groups = 0
        return EncodeResult(
            cnf=CnfFormula(1, [[1], [-1]]),
            root_var=None,
            stats=self.stats,
            trivial="unsat",
            formula=f,
            labels=list(self.labels),
            trace=self.trace,
            options=self.opts,
        )


def prepare(f: Formula, opts: EncodeOptions) -> Formula:
    return fm.preprocess(f, fmt=opts.fmt, lift=opts.lift, simplify_=opts.simplify)


def encode(f: Formula, opts: Optional[EncodeOptions] = None, prepared: bool = False) -> EncodeResult:
    """Encode ``f`` (preprocessed per ``opts`` unless ``prepared``)."""
    opts = opts or EncodeOptions()
    g = f if prepared else prepare(f, opts)
    return Encoder(opts).run(g)


def with_deadline(opts: EncodeOptions, seconds: Optional[float]) -> EncodeOptions:
    if seconds is None:
        return opts
    return replace(opts, deadline=time.monotonic() + seconds)
