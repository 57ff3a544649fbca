"""K_m formulas as a hash-consed DAG, plus parsing, printing and normal forms.

Every structurally distinct formula exists exactly once: the constructors
(``Atom``, ``Not``, ``And``, ``Or``, ``Box``, ``Dia``) intern their result, so
identity comparison is structural equality and each node carries a dense
integer ``id``.  Constructors are "smart": ``Not(Not(x))`` is ``x``, negated
constants fold, and ``True``/``False`` operands of ``And``/``Or`` are absorbed.

The node table is a single-writer structure.  Nodes are immutable once built.
"""

from __future__ import annotations

import enum
import re
from collections import defaultdict
from dataclasses import dataclass

from .errors import ParseError

# Kind codes double as the canonical sort rank of a node.
TRUE_K, FALSE_K, ATOM_K, NOT_K, BOX_K, DIA_K, AND_K, OR_K = range(8)

_KIND_NAMES = ("true", "false", "atom", "not", "box", "dia", "and", "or")


class Formula:
    __slots__ = ("kind", "num", "args", "id", "_key", "_depth", "_cat", "__weakref__")

    def __init__(self, kind, num, args, ident):
        self.kind = kind
        # atom index for atoms, modality index for boxes/diamonds, 0 otherwise
        self.num = num
        self.args = args
        self.id = ident
        self._key = None
        self._depth = None
        self._cat = None

    def __repr__(self):
        return f"<Formula #{self.id} {to_text(self)}>"

    def __str__(self):
        return to_text(self)

    @property
    def child(self):
        return self.args[0]

    @property
    def sort_key(self):
        """Structural key used for canonical child ordering."""
        key = self._key
        if key is None:
            key = (self.kind, self.num, tuple(a.sort_key for a in self.args))
            self._key = key
        return key

    def is_literal(self):
        return self.kind == ATOM_K or (self.kind == NOT_K and self.args[0].kind == ATOM_K)

    def is_constant(self):
        return self.kind <= FALSE_K


_table: dict = {}
_nodes: list = []


def _make(kind, num=0, args=()):
    key = (kind, num, tuple(a.id for a in args))
    node = _table.get(key)
    if node is None:
        node = Formula(kind, num, tuple(args), len(_nodes))
        _nodes.append(node)
        _table[key] = node
    return node


def node_by_id(ident):
    return _nodes[ident]


TRUE = _make(TRUE_K)
FALSE = _make(FALSE_K)


def Atom(index):
    if index < 1:
        raise ValueError(f"atom index must be >= 1, got {index}")
    return _make(ATOM_K, index)


def Not(f):
    if f.kind == NOT_K:
        return f.args[0]
    if f is TRUE:
        return FALSE
    if f is FALSE:
        return TRUE
    return _make(NOT_K, 0, (f,))


def _nary(kind, unit, zero, fs):
    if len(fs) == 1 and not isinstance(fs[0], Formula):
        fs = tuple(fs[0])
    kept = []
    for f in fs:
        if f is zero:
            return zero
        if f is not unit:
            kept.append(f)
    if not kept:
        return unit
    if len(kept) == 1:
        return kept[0]
    return _make(kind, 0, kept)


def And(*fs):
    return _nary(AND_K, TRUE, FALSE, fs)


def Or(*fs):
    return _nary(OR_K, FALSE, TRUE, fs)


def Box(r, f):
    if r < 1:
        raise ValueError(f"modality index must be >= 1, got {r}")
    return _make(BOX_K, r, (f,))


def Dia(r, f):
    if r < 1:
        raise ValueError(f"modality index must be >= 1, got {r}")
    return _make(DIA_K, r, (f,))


def Implies(a, b):
    return Or(Not(a), b)


def Iff(a, b):
    return And(Or(Not(a), b), Or(Not(b), a))


def box_power(r, i, f):
    for _ in range(i):
        f = Box(r, f)
    return f


# ---------------------------------------------------------------------------
# Fitting classification


class Tag(enum.Enum):
    ALPHA = "alpha"
    BETA = "beta"
    PI = "pi"
    NU = "nu"
    LITERAL = "literal"
    CONSTANT = "constant"


@dataclass(frozen=True)
class Category:
    tag: Tag
    parts: tuple = ()
    modality: int = 0

    @property
    def body(self):
        """pi_0 / nu_0 of a modal formula."""
        return self.parts[0]


def classify(f: Formula) -> Category:
    """Uniform alpha/beta/pi/nu view of ``f``, valid for NNF, BNF and mixed shapes."""
    cat = f._cat
    if cat is not None:
        return cat
    k = f.kind
    if k <= FALSE_K:
        cat = Category(Tag.CONSTANT)
    elif k == ATOM_K:
        cat = Category(Tag.LITERAL)
    elif k == AND_K:
        cat = Category(Tag.ALPHA, f.args)
    elif k == OR_K:
        cat = Category(Tag.BETA, f.args)
    elif k == BOX_K:
        cat = Category(Tag.NU, f.args, f.num)
    elif k == DIA_K:
        cat = Category(Tag.PI, f.args, f.num)
    else:
        g = f.args[0]
        gk = g.kind
        if gk == ATOM_K:
            cat = Category(Tag.LITERAL)
        elif gk == OR_K:
            cat = Category(Tag.ALPHA, tuple(Not(a) for a in g.args))
        elif gk == AND_K:
            cat = Category(Tag.BETA, tuple(Not(a) for a in g.args))
        elif gk == BOX_K:
            cat = Category(Tag.PI, (Not(g.args[0]),), g.num)
        elif gk == DIA_K:
            cat = Category(Tag.NU, (Not(g.args[0]),), g.num)
        else:  # pragma: no cover - smart constructors rule this out
            raise AssertionError(f"unexpected negated kind {gk}")
    f._cat = cat
    return cat


# ---------------------------------------------------------------------------
# Text syntax

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_ATOM_TOKEN = re.compile(r"p(\d+)\Z")


def _tokenize(text):
    line, line_start = 1, 0
    pos = 0
    out = []
    for m in _TOKEN.finditer(text):
        gap = text[pos:m.start()]
        if gap.strip():  # pragma: no cover - the regex consumes every non-space char
            raise ParseError("unexpected character", line, pos - line_start + 1)
        for i, ch in enumerate(gap):
            if ch == "\n":
                line += 1
                line_start = pos + i + 1
        out.append((m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    return out


def parse(text: str) -> Formula:
    """Parse one formula written in the s-expression grammar.

    ``true | false | pK | (~ F) | (& F F+) | (| F F+) | (-> F F) | (<-> F F)
    | (box R F) | (dia R F)``
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty input", 1, 1)
    pos = 0

    def expect_int(what):
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError(f"expected {what}, got end of input", *_end())
        tok, ln, col = tokens[pos]
        if not tok.isdigit():
            raise ParseError(f"expected {what}, got {tok!r}", ln, col)
        value = int(tok)
        if value < 1:
            raise ParseError(f"{what} must be >= 1", ln, col)
        pos += 1
        return value

    def _end():
        _, ln, col = tokens[-1]
        return ln, col + len(tokens[-1][0])

    def formula():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", *_end())
        tok, ln, col = tokens[pos]
        pos += 1
        if tok == "true":
            return TRUE
        if tok == "false":
            return FALSE
        if tok == ")":
            raise ParseError("unexpected ')'", ln, col)
        if tok != "(":
            m = _ATOM_TOKEN.match(tok)
            if not m:
                raise ParseError(f"unknown token {tok!r}", ln, col)
            index = int(m.group(1))
            if index < 1:
                raise ParseError("atom index must be >= 1", ln, col)
            return Atom(index)
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", *_end())
        op, oln, ocol = tokens[pos]
        pos += 1
        if op in ("box", "dia"):
            r = expect_int("modality index")
            body = formula()
            result = Box(r, body) if op == "box" else Dia(r, body)
        else:
            args = []
            while pos < len(tokens) and tokens[pos][0] != ")":
                args.append(formula())
            arity = {"~": (1, 1), "->": (2, 2), "<->": (2, 2), "&": (2, None), "|": (2, None)}
            if op not in arity:
                raise ParseError(f"unknown operator {op!r}", oln, ocol)
            lo, hi = arity[op]
            if len(args) < lo or (hi is not None and len(args) > hi):
                raise ParseError(f"wrong number of operands for {op!r}: {len(args)}", oln, ocol)
            if op == "~":
                result = Not(args[0])
            elif op == "->":
                result = Implies(*args)
            elif op == "<->":
                result = Iff(*args)
            elif op == "&":
                result = And(*args)
            else:
                result = Or(*args)
        if pos >= len(tokens):
            raise ParseError("missing ')'", *_end())
        tok, ln, col = tokens[pos]
        if tok != ")":
            raise ParseError(f"expected ')', got {tok!r}", ln, col)
        pos += 1
        return result

    result = formula()
    if pos != len(tokens):
        tok, ln, col = tokens[pos]
        raise ParseError(f"trailing input {tok!r}", ln, col)
    return result


def to_text(f: Formula) -> str:
    memo = {}

    def go(g):
        s = memo.get(g)
        if s is not None:
            return s
        k = g.kind
        if k == TRUE_K:
            s = "true"
        elif k == FALSE_K:
            s = "false"
        elif k == ATOM_K:
            s = f"p{g.num}"
        elif k == NOT_K:
            s = f"(~ {go(g.args[0])})"
        elif k == AND_K:
            s = "(& " + " ".join(go(a) for a in g.args) + ")"
        elif k == OR_K:
            s = "(| " + " ".join(go(a) for a in g.args) + ")"
        elif k == BOX_K:
            s = f"(box {g.num} {go(g.args[0])})"
        else:
            s = f"(dia {g.num} {go(g.args[0])})"
        memo[g] = s
        return s

    return go(f)


# ---------------------------------------------------------------------------
# Traversals


def subformulas(f: Formula):
    """All distinct nodes reachable from ``f``, children before parents."""
    seen = set()
    order = []
    stack = [(f, False)]
    while stack:
        g, expanded = stack.pop()
        if expanded:
            order.append(g)
            continue
        if g in seen:
            continue
        seen.add(g)
        stack.append((g, True))
        for a in reversed(g.args):
            if a not in seen:
                stack.append((a, False))
    return order


def dag_size(f: Formula) -> int:
    return len(subformulas(f))


def depth(f: Formula) -> int:
    """Maximum nesting of modal operators."""
    for g in subformulas(f):
        if g._depth is None:
            d = max((a._depth for a in g.args), default=0)
            if g.kind in (BOX_K, DIA_K):
                d += 1
            g._depth = d
    return f._depth


def atoms(f: Formula) -> list:
    return sorted({g.num for g in subformulas(f) if g.kind == ATOM_K})


def modalities(f: Formula) -> list:
    return sorted({g.num for g in subformulas(f) if g.kind in (BOX_K, DIA_K)})


def modal_atoms(f: Formula) -> list:
    return [g for g in subformulas(f) if g.kind in (BOX_K, DIA_K)]


def is_nnf(f: Formula) -> bool:
    return all(g.kind != NOT_K or g.args[0].kind == ATOM_K for g in subformulas(f))


def is_bnf(f: Formula) -> bool:
    return all(
        g.kind != DIA_K and (g.kind != NOT_K or g.args[0].kind in (ATOM_K, BOX_K))
        for g in subformulas(f)
    )


# ---------------------------------------------------------------------------
# Normal forms

FORMATS = ("bnf", "nnf")


def negate(f: Formula, fmt: str = "bnf") -> Formula:
    """The representation of the negation of ``f`` inside the given normal form."""
    memo = {}

    def go(g):
        r = memo.get(g)
        if r is not None:
            return r
        k = g.kind
        if k == NOT_K:
            r = g.args[0]
        elif k in (TRUE_K, FALSE_K, ATOM_K):
            r = Not(g)
        elif k == AND_K:
            r = Or(*[go(a) for a in g.args])
        elif k == OR_K:
            r = And(*[go(a) for a in g.args])
        elif k == DIA_K:
            r = Box(g.num, go(g.args[0]))
        elif fmt == "nnf":
            r = Dia(g.num, go(g.args[0]))
        else:
            r = Not(g)
        memo[g] = r
        return r

    return go(f)


def _convert(f, fmt):
    pos_memo, neg_memo = {}, {}

    def pos(g):
        r = pos_memo.get(g)
        if r is not None:
            return r
        k = g.kind
        if k <= ATOM_K:
            r = g
        elif k == NOT_K:
            r = neg(g.args[0])
        elif k == AND_K:
            r = And(*[pos(a) for a in g.args])
        elif k == OR_K:
            r = Or(*[pos(a) for a in g.args])
        elif k == BOX_K:
            r = Box(g.num, pos(g.args[0]))
        elif fmt == "nnf":
            r = Dia(g.num, pos(g.args[0]))
        else:
            r = Not(Box(g.num, neg(g.args[0])))
        pos_memo[g] = r
        return r

    def neg(g):
        r = neg_memo.get(g)
        if r is not None:
            return r
        k = g.kind
        if k <= ATOM_K:
            r = Not(g)
        elif k == NOT_K:
            r = pos(g.args[0])
        elif k == AND_K:
            r = Or(*[neg(a) for a in g.args])
        elif k == OR_K:
            r = And(*[neg(a) for a in g.args])
        elif k == DIA_K:
            r = Box(g.num, neg(g.args[0]))
        elif fmt == "nnf":
            r = Dia(g.num, neg(g.args[0]))
        else:
            r = Not(Box(g.num, pos(g.args[0])))
        neg_memo[g] = r
        return r

    return pos(f)


def to_nnf(f: Formula) -> Formula:
    return _convert(f, "nnf")


def to_bnf(f: Formula) -> Formula:
    return _convert(f, "bnf")


def _rebuild(g, args):
    k = g.kind
    if k == NOT_K:
        return Not(args[0])
    if k == AND_K:
        return And(*args)
    if k == OR_K:
        return Or(*args)
    if k == BOX_K:
        return Box(g.num, args[0])
    if k == DIA_K:
        return Dia(g.num, args[0])
    return g


def _canonical_nary(kind, args):
    """Flatten same-kind operands, drop duplicates and sort canonically."""
    flat = []
    seen = set()
    for a in args:
        items = a.args if a.kind == kind else (a,)
        for b in items:
            if b not in seen:
                seen.add(b)
                flat.append(b)
    flat.sort(key=lambda n: n.sort_key)
    return And(*flat) if kind == AND_K else Or(*flat)


def normalize_atoms(f: Formula) -> Formula:
    """Flatten nested conjunctions/disjunctions and sort their operands."""
    memo = {}
    for g in subformulas(f):
        if not g.args:
            memo[g] = g
            continue
        args = [memo[a] for a in g.args]
        if g.kind in (AND_K, OR_K):
            memo[g] = _canonical_nary(g.kind, args)
        else:
            memo[g] = _rebuild(g, args)
    return memo[f]


def parent_counts(f: Formula) -> dict:
    """Number of distinct parent nodes referencing each node of the DAG."""
    refs = defaultdict(int)
    for g in subformulas(f):
        for a in set(g.args):
            refs[a] += 1
    return refs


LIFT_MODES = ("no", "lift", "ctrl")


def box_lift(f: Formula, mode: str = "lift", fmt: str = "bnf") -> Formula:
    """Merge same-modality boxes: ``[]a & []b => [](a & b)`` and the dual
    ``~[]a | ~[]b => ~[](a & b)`` (``<>a | <>b => <>(a | b)`` in NNF).

    With ``mode="ctrl"`` a box takes part in a merge only if it is not shared
    in the input DAG (fewer than two parent references).
    """
    if mode == "no":
        return f
    if mode not in LIFT_MODES:
        raise ValueError(f"unknown lift mode {mode!r}")
    f = normalize_atoms(f)
    refs = parent_counts(f) if mode == "ctrl" else None

    def unshared(*nodes):
        return refs is None or all(refs.get(n, 0) < 2 for n in nodes)

    memo = {}

    def go(g):
        r = memo.get(g)
        if r is not None:
            return r
        if not g.args:
            r = g
        elif g.kind == AND_K:
            groups = defaultdict(list)
            rest = []
            for a in (go(c) for c in g.args):
                if a.kind == BOX_K and unshared(a):
                    groups[a.num].append(a.args[0])
                else:
                    rest.append(a)
            for mod in sorted(groups):
                bodies = groups[mod]
                if len(bodies) == 1:
                    rest.append(Box(mod, bodies[0]))
                else:
                    rest.append(Box(mod, go(_canonical_nary(AND_K, bodies))))
            r = _canonical_nary(AND_K, rest)
        elif g.kind == OR_K:
            groups = defaultdict(list)
            rest = []
            for a in (go(c) for c in g.args):
                if fmt == "nnf":
                    if a.kind == DIA_K and unshared(a):
                        groups[a.num].append(a.args[0])
                        continue
                elif a.kind == NOT_K and a.args[0].kind == BOX_K and unshared(a, a.args[0]):
                    groups[a.args[0].num].append(a.args[0].args[0])
                    continue
                rest.append(a)
            for mod in sorted(groups):
                bodies = groups[mod]
                if fmt == "nnf":
                    merged = bodies[0] if len(bodies) == 1 else go(_canonical_nary(OR_K, bodies))
                    rest.append(Dia(mod, merged))
                else:
                    merged = bodies[0] if len(bodies) == 1 else go(_canonical_nary(AND_K, bodies))
                    rest.append(Not(Box(mod, merged)))
            r = _canonical_nary(OR_K, rest)
        else:
            r = _rebuild(g, [go(a) for a in g.args])
        memo[g] = r
        return r

    while True:
        g = normalize_atoms(go(f))
        if g is f:
            return g
        f = g
        memo.clear()


def _simplify_nary(kind, args):
    # unit and zero laws are applied by the constructors
    node = _canonical_nary(kind, args)
    if node.kind != kind:
        return node
    items = list(node.args)
    present = set(items)
    zero = FALSE if kind == AND_K else TRUE
    for a in items:
        if Not(a) in present:
            return zero
    dual = OR_K if kind == AND_K else AND_K
    kept = []
    for a in items:
        if a.kind == dual:
            inner = set(a.args)
            absorbed = False
            for b in items:
                if b is a:
                    continue
                if b in inner or (b.kind == dual and set(b.args) < inner):
                    absorbed = True
                    break
            if absorbed:
                continue
        kept.append(a)
    return And(*kept) if kind == AND_K else Or(*kept)


def simplify(f: Formula) -> Formula:
    """Boolean simplification to fixpoint.

    Idempotence, absorption, complement, the unit laws for true/false and
    ``[]_r true => true``.  The result is in canonical (flattened, sorted) form.
    """
    while True:
        memo = {}
        for g in subformulas(f):
            if not g.args:
                memo[g] = g
                continue
            args = [memo[a] for a in g.args]
            if g.kind in (AND_K, OR_K):
                memo[g] = _simplify_nary(g.kind, args)
            elif g.kind == BOX_K and args[0] is TRUE:
                memo[g] = TRUE
            else:
                memo[g] = _rebuild(g, args)
        g = memo[f]
        if g is f:
            return g
        f = g


def preprocess(f: Formula, fmt: str = "bnf", lift: str = "no", simplify_: bool = True) -> Formula:
    """The encoder's front end: normal form, atom normalization, lifting, simplification."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    g = to_bnf(f) if fmt == "bnf" else to_nnf(f)
    g = normalize_atoms(g)
    g = box_lift(g, lift, fmt)
    if simplify_:
        g = simplify(g)
    return g
