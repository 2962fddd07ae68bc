import random

import pytest

from heaplets.model import (
    AbstractSentence,
    And,
    Atom,
    Call,
    Emp,
    Exists,
    FalseH,
    Negated,
    Not,
    Or,
    Points,
    PointsTo,
    PredCall,
    Star,
    Terminal,
    TrueH,
    Variable,
)
from heaplets.normalize import (
    MangleError,
    NormalizeError,
    decanonise_heads,
    demangle,
    desugar,
    lower_assertion,
    mangle,
    merge_programs,
    order_conjuncts,
    token_shape,
)
from heaplets.syntax import parse_program, parse_sentence, parse_term_text, render_program

from genutil import random_pointsto


def test_desugar_splits_semicolon_left_first():
    out = desugar(parse_program("b :- a0, a1; a2.\na0. a1. a2."))
    heads = [(c.head_name, len(c.body)) for c in out.clauses]
    assert heads[0] == ("b", 2)
    assert heads[1] == ("b", 1)
    assert out.clauses[0].body[0].name == "a0"
    assert out.clauses[1].body[0].name == "a2"


def test_desugar_keeps_facts():
    p = parse_program("a.")
    assert desugar(p) == p


def test_desugar_rejects_cut():
    with pytest.raises(NormalizeError, match="left-factoring"):
        desugar(parse_program("b :- a, !, c."))


def test_desugar_rejects_fail():
    with pytest.raises(NormalizeError, match="fail"):
        desugar(parse_program("b :- fail."))


def test_desugar_rejects_partial_heap_constants():
    with pytest.raises(NormalizeError, match="partial heap"):
        desugar(parse_program("b :- true."))
    with pytest.raises(NormalizeError, match="partial heap"):
        desugar(parse_program("b :- false."))


def test_desugar_drops_emp():
    out = desugar(parse_program("b :- emp, pointsto(x,1), emp."))
    assert [type(sg).__name__ for sg in out.clauses[0].body] == ["Terminal"]


def test_desugar_nested_alternatives_reach_fixpoint():
    out = desugar(parse_program("b :- a0; a1; a2.\na0. a1. a2."))
    assert [len(c.body) for c in out.clauses[:3]] == [1, 1, 1]
    assert [c.head_name for c in out.clauses[:3]] == ["b", "b", "b"]


# ---------------------------------------------------------------------------
# Assertion lowering
# ---------------------------------------------------------------------------

def _pt(loc: str, val: str) -> Points:
    return Points(PointsTo(Atom(loc), Atom(val)))


def test_lower_star_and_conjunction():
    alts = lower_assertion(Star(_pt("x", "a"), And(_pt("y", "b"), Call("p", ()))))
    assert len(alts) == 1
    assert [type(s).__name__ for s in alts[0]] == ["Terminal", "Terminal", "PredCall"]


def test_lower_or_gives_alternatives():
    alts = lower_assertion(Or(_pt("x", "a"), _pt("y", "b")))
    assert len(alts) == 2


def test_lower_emp_is_empty_sequence():
    assert lower_assertion(Emp()) == [()]
    alts = lower_assertion(Star(Emp(), _pt("x", "a")))
    assert len(alts) == 1 and len(alts[0]) == 1


def test_lower_not_wraps_each_alternative():
    alts = lower_assertion(Not(Or(_pt("x", "a"), _pt("y", "b"))))
    assert len(alts) == 1
    assert all(isinstance(s, Negated) for s in alts[0])
    assert len(alts[0]) == 2


def test_lower_exists_introduces_fresh_variable():
    body = Points(PointsTo(Atom("x"), Variable("V")))
    alts = lower_assertion(Exists("V", body), taken_vars={"X1"})
    term = alts[0][0]
    assert isinstance(term, Terminal)
    fresh = term.points.value
    assert isinstance(fresh, Variable) and fresh.name not in {"V", "X1"}


def test_lower_exists_respects_shadowing():
    inner = Exists("V", Points(PointsTo(Atom("x"), Variable("V"))))
    outer = Exists("V", Star(Points(PointsTo(Atom("y"), Variable("V"))), inner))
    alts = lower_assertion(outer)
    vals = [s.points.value.name for s in alts[0]]
    assert vals[0] != vals[1]


def test_lower_rejects_partial_heap_constants():
    with pytest.raises(NormalizeError):
        lower_assertion(TrueH())
    with pytest.raises(NormalizeError):
        lower_assertion(Star(FalseH(), _pt("x", "a")))


# ---------------------------------------------------------------------------
# Head decanonisation
# ---------------------------------------------------------------------------

def test_decanonise_moves_head_terms_to_relations():
    out = decanonise_heads(parse_program("p1(X,[X|Y]):-q(X).\nq(A)."))
    c = out.clauses[0]
    assert [a.name for a in c.head_args] == ["X1", "X2"]
    assert render_program(out).splitlines()[0] == "p1(X1,X2) :- X1 = X, X2 = [X|Y], q(X)."


def test_decanonise_distinct_variable_heads_unchanged():
    p = parse_program("p(A,B):-q(A).\nq(X).")
    assert decanonise_heads(p) == p


def test_decanonise_ground_head():
    out = decanonise_heads(parse_program("f(a)."))
    assert render_program(out) == "f(X1) :- X1 = a.\n"


def test_decanonise_repeated_head_variable():
    out = decanonise_heads(parse_program("p(X,X)."))
    c = out.clauses[0]
    assert len({a.name for a in c.head_args}) == 2
    assert len(c.body) == 2


def test_decanonise_preserves_ground_solutions():
    """Expanding a ground query must reach the same heaps before and after."""
    from heaplets.oracle import oracle_equal
    from heaplets.partition import build_env

    src = "f(a) :- pointsto(l1,v1).\nf(X) :- pointsto(l2,X)."
    before = build_env(desugar(parse_program(src)))
    after = build_env(decanonise_heads(desugar(parse_program(src))))
    query = parse_sentence("[f(a)]")
    heap1 = parse_sentence("[pointsto(l1,v1)]")
    heap2 = parse_sentence("[pointsto(l2,a)]")
    for heap in (heap1, heap2):
        assert oracle_equal(before, query, heap, 2) is True
        assert oracle_equal(after, query, heap, 2) is True
    assert oracle_equal(after, query, parse_sentence("[pointsto(l2,b)]"), 2) is False


# ---------------------------------------------------------------------------
# Conjunct ordering
# ---------------------------------------------------------------------------

def test_order_conjuncts_sorts_by_location_text():
    s = parse_sentence("[pointsto(y,1), pointsto(x,nil)]")
    out = order_conjuncts(s)
    assert [i.points.location.name for i in out.items] == ["x", "y"]


def test_order_conjuncts_empty():
    s = AbstractSentence(())
    assert order_conjuncts(s) == s


def test_order_conjuncts_nonterminals_keep_relative_order_after_terminals():
    s = parse_sentence("[q(a), pointsto(y,1), X = a, pointsto(x,2), p(b)]")
    out = order_conjuncts(s)
    kinds = [type(i).__name__ for i in out.items]
    assert kinds == ["Terminal", "Terminal", "PredCall", "Relation", "PredCall"]
    assert out.items[2].name == "q"
    assert out.items[4].name == "p"


def test_order_conjuncts_idempotent_permutation():
    rng = random.Random(31)
    from genutil import random_ground_sentence, random_heap_env

    for _ in range(100):
        env = random_heap_env(rng)
        s = random_ground_sentence(rng, env)
        if s is None:
            continue
        once = order_conjuncts(s)
        assert order_conjuncts(once) == once
        assert sorted(map(repr, once.items)) == sorted(map(repr, s.items))


# ---------------------------------------------------------------------------
# Mangling
# ---------------------------------------------------------------------------

def test_mangle_paper_scheme_examples():
    assert mangle(PointsTo(Atom("bar"), Atom("foo"))).name == "pt_3bar_3foo"
    assert mangle(PointsTo(Atom("x"), Atom("nil"))).name == "pt_1x_3nil"


def test_mangle_accessor_chains_concatenate_segmentwise():
    pt = PointsTo(parse_term_text("oa(p1,next)"), Atom("p2"))
    assert mangle(pt).name == "pt_2p14next_2p2"
    assert demangle("pt_2p14next_2p2") == pt


def test_demangle_malformed_tokens():
    for bad in ["pt_", "pt", "pt_3bar", "pt_3ba", "pt_3bar_3foo_1x", "pt_9x_1y", "xx_1a_1b"]:
        with pytest.raises(MangleError):
            demangle(bad)


def test_demangle_rejects_wildcard_shapes():
    with pytest.raises(MangleError, match="erased"):
        demangle("pt_W_3foo")


def test_token_shape_erases_variables():
    pt = PointsTo(Atom("loc2"), Variable("X"))
    assert token_shape(pt) == "pt_4loc2_W"


def test_mangle_roundtrip_and_injectivity_corpus():
    rng = random.Random(99)
    seen: dict[str, PointsTo] = {}
    produced = 0
    while produced < 1000:
        pt = random_pointsto(rng)
        tok = mangle(pt)
        assert demangle(tok.name) == pt
        if tok.name in seen:
            assert seen[tok.name] == pt, "token collision"
        else:
            seen[tok.name] = pt
        produced += 1
    distinct = len({repr(pt) for pt in seen.values()})
    assert distinct == len(seen)


# ---------------------------------------------------------------------------
# Merging definition files
# ---------------------------------------------------------------------------

def test_merge_programs_qualifies_clashing_names():
    p1 = parse_program("p(X) :- pointsto(l1,X).\nmain :- p(a).")
    p2 = parse_program("p(X) :- pointsto(l2,X).")
    merged = merge_programs([("one", p1), ("two", p2)])
    names = [c.head_name for c in merged.clauses]
    assert names == ["one_p", "main", "two_p"]
    assert merged.clauses[1].body[0].name == "one_p"


def test_merge_programs_without_clash_is_concatenation():
    p1 = parse_program("p(X).")
    p2 = parse_program("q(X) :- p(X).")
    merged = merge_programs([("a", p1), ("b", p2)])
    assert [c.head_name for c in merged.clauses] == ["p", "q"]
    assert merged.clauses[1].body[0].name == "p"


def test_merge_programs_ambiguous_external_call():
    p1 = parse_program("p(X).")
    p2 = parse_program("p(X).")
    p3 = parse_program("r :- p(a).")
    with pytest.raises(NormalizeError, match="ambiguous"):
        merge_programs([("a", p1), ("b", p2), ("c", p3)])
