import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from km2sat import formula as fm
from km2sat.errors import ParseError
from km2sat.formula import (FALSE, TRUE, And, Atom, Box, Dia, Not, Or, Tag, classify, parse,
                            to_text)
from km2sat.semantics import KripkeModel, evaluate


def formulas(max_atoms=3, max_mod=2):
    leaves = st.one_of(st.integers(1, max_atoms).map(Atom), st.sampled_from([TRUE, FALSE]))

    def extend(children):
        return st.one_of(
            children.map(Not),
            st.lists(children, min_size=2, max_size=3).map(lambda xs: And(*xs)),
            st.lists(children, min_size=2, max_size=3).map(lambda xs: Or(*xs)),
            st.tuples(st.integers(1, max_mod), children).map(lambda t: Box(*t)),
            st.tuples(st.integers(1, max_mod), children).map(lambda t: Dia(*t)),
        )

    return st.recursive(leaves, extend, max_leaves=8)


def small_models():
    """A handful of fixed Kripke models used as a semantic equivalence probe."""
    out = []
    for bits in range(8):
        m = KripkeModel(states=["1", "1.1", "1.2", "1.1.1"])
        for i, s in enumerate(m.states):
            for a in (1, 2, 3):
                m.valuation[(s, a)] = bool((bits >> ((i + a) % 3)) & 1) ^ (a == 2 and i % 2 == 1)
        m.add_edge(1, "1", "1.1")
        if bits & 1:
            m.add_edge(1, "1", "1.2")
        if bits & 2:
            m.add_edge(2, "1", "1.2")
        if bits & 4:
            m.add_edge(1, "1.1", "1.1.1")
        m.add_edge(2, "1.1", "1.1.1")
        out.append(m)
    out.append(KripkeModel())  # single state, no successors
    return out


MODELS = small_models()


def same_semantics(f, g):
    return all(evaluate(m, s, f) == evaluate(m, s, g) for m in MODELS for s in m.states)


def test_hash_consing_shares_nodes():
    a = And(Atom(1), Box(1, Atom(2)))
    b = And(Atom(1), Box(1, Atom(2)))
    assert a is b
    assert fm.dag_size(And(Box(1, Atom(2)), Or(Box(1, Atom(2)), Atom(3)))) == 5


def test_smart_constructors():
    p = Atom(1)
    assert Not(Not(p)) is p
    assert Not(TRUE) is FALSE
    assert And(p, TRUE) is p
    assert And(p, FALSE) is FALSE
    assert Or(p, TRUE) is TRUE
    assert Or(FALSE, FALSE) is FALSE
    assert And() is TRUE
    with pytest.raises(ValueError):
        Atom(0)
    with pytest.raises(ValueError):
        Box(0, p)


def test_classification():
    p, q = Atom(1), Atom(2)
    assert classify(And(p, q)).tag is Tag.ALPHA
    assert classify(Or(p, q)).tag is Tag.BETA
    assert classify(Not(Or(p, q))).tag is Tag.ALPHA
    assert classify(Not(And(p, q))).tag is Tag.BETA
    cat = classify(Not(Box(2, p)))
    assert cat.tag is Tag.PI and cat.modality == 2 and cat.body is Not(p)
    assert classify(Dia(1, q)).tag is Tag.PI
    assert classify(Box(1, q)).tag is Tag.NU
    assert classify(Not(Dia(1, q))).body is Not(q)
    assert classify(Not(p)).tag is Tag.LITERAL
    assert classify(TRUE).tag is Tag.CONSTANT


def test_parse_round_trip_examples():
    text = "(& (| (~ (box 1 (~ p1))) (dia 2 p3)) (box 1 true))"
    f = parse(text)
    assert to_text(f) == text
    assert parse("(-> p1 p2)") is Or(Not(Atom(1)), Atom(2))
    assert parse("(<-> p1 p2)") is And(Or(Not(Atom(1)), Atom(2)), Or(Not(Atom(2)), Atom(1)))


@pytest.mark.parametrize("text, where", [
    ("", "1:1"),
    ("(& p1", "1:2"),
    ("(& p1 p2", "1:9"),
    ("(foo p1 p2)", "1:2"),
    ("(~ p1 p2)", "1:2"),
    ("p0", "1:1"),
    ("(box x p1)", "1:6"),
    ("(& p1 p2) p3", "1:11"),
    ("(&\n  p1\n  q)", "3:3"),
    (")", "1:1"),
])
def test_parse_errors_carry_position(text, where):
    with pytest.raises(ParseError) as exc:
        parse(text)
    assert str(exc.value).startswith(where)


@given(formulas())
@settings(max_examples=150, deadline=None)
def test_text_round_trip(f):
    assert parse(to_text(f)) is f


@given(formulas())
@settings(max_examples=150, deadline=None)
def test_normal_forms_preserve_semantics(f):
    n, b = fm.to_nnf(f), fm.to_bnf(f)
    assert fm.is_nnf(n)
    assert fm.is_bnf(b)
    assert same_semantics(f, n)
    assert same_semantics(f, b)
    assert fm.depth(n) == fm.depth(f) == fm.depth(b)


@given(formulas())
@settings(max_examples=150, deadline=None)
def test_negate_is_complement(f):
    for fmt in fm.FORMATS:
        g = fm.to_bnf(f) if fmt == "bnf" else fm.to_nnf(f)
        ng = fm.negate(g, fmt)
        assert all(evaluate(m, s, ng) != evaluate(m, s, g) for m in MODELS for s in m.states)


@given(formulas(), st.sampled_from(fm.FORMATS), st.sampled_from(fm.LIFT_MODES), st.booleans())
@settings(max_examples=200, deadline=None)
def test_preprocess_is_equivalent_and_in_format(f, fmt, lift, simp):
    g = fm.preprocess(f, fmt=fmt, lift=lift, simplify_=simp)
    assert (fm.is_bnf if fmt == "bnf" else fm.is_nnf)(g)
    assert same_semantics(f, g)
    assert fm.preprocess(g, fmt=fmt, lift=lift, simplify_=simp) is g


def test_atom_normalization_identifies_permutations():
    a = Box(1, Or(Atom(2), Atom(1)))
    b = Box(1, Or(Atom(1), Atom(2)))
    assert a is not b
    assert fm.normalize_atoms(a) is fm.normalize_atoms(b)
    nested = And(Atom(3), And(Atom(1), Atom(2)), Atom(1))
    assert to_text(fm.normalize_atoms(nested)) == "(& p1 p2 p3)"


def test_box_lift_rules():
    p = [Atom(i) for i in (1, 2, 3)]
    f = And(Box(1, p[0]), Box(1, p[1]), Box(2, p[2]))
    assert fm.box_lift(f, "lift") is fm.normalize_atoms(And(Box(1, And(p[0], p[1])), Box(2, p[2])))
    g = Or(Not(Box(1, p[0])), Not(Box(1, p[1])))
    assert fm.box_lift(g, "lift", "bnf") is Not(Box(1, And(p[0], p[1])))
    h = Or(Dia(1, p[0]), Dia(1, p[1]))
    assert fm.box_lift(h, "lift", "nnf") is Dia(1, Or(p[0], p[1]))
    assert fm.box_lift(f, "no") is f


def test_controlled_lift_keeps_shared_boxes():
    shared = Box(1, Not(Atom(1)))
    f = And(Or(Not(shared), Not(Box(1, Atom(2)))), shared, Box(1, Atom(3)))
    lifted = fm.box_lift(f, "ctrl")
    assert shared in fm.subformulas(lifted)
    full = fm.box_lift(f, "lift")
    assert shared not in fm.subformulas(full)


def test_simplify_rules():
    p, q = Atom(1), Atom(2)
    assert fm.simplify(And(p, Not(p))) is FALSE
    assert fm.simplify(Or(p, Not(p))) is TRUE
    assert fm.simplify(And(p, Or(p, q))) is p
    assert fm.simplify(Or(p, And(p, q))) is p
    assert fm.simplify(And(p, p, q)) is And(p, q)
    assert fm.simplify(Box(1, Or(p, Not(p)))) is TRUE
    lifted = parse("(& (~ (box 1 (& (~ p1) (~ p2)))) (box 1 (& (~ p1) (~ p2))))")
    assert fm.simplify(lifted) is FALSE


def test_traversal_helpers():
    f = parse("(& (box 2 (dia 1 p4)) (| p1 (~ p2)))")
    assert fm.atoms(f) == [1, 2, 4]
    assert fm.modalities(f) == [1, 2]
    assert fm.depth(f) == 2
    assert len(fm.modal_atoms(f)) == 2
    order = fm.subformulas(f)
    pos = {g: i for i, g in enumerate(order)}
    assert all(pos[a] < pos[g] for g in order for a in g.args)
    assert fm.box_power(1, 3, Atom(1)) is Box(1, Box(1, Box(1, Atom(1))))


def test_sort_key_is_a_total_structural_order():
    nodes = [TRUE, FALSE, Atom(1), Atom(2), Not(Atom(1)), Box(1, Atom(1)), Dia(1, Atom(1)),
             And(Atom(1), Atom(2)), Or(Atom(1), Atom(2))]
    keys = [n.sort_key for n in nodes]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)
    for a, b in itertools.combinations(nodes, 2):
        assert (a.sort_key == b.sort_key) == (a is b)
