import random

import pytest

from heaplets.model import (
    Atom,
    CutMarker,
    FailMarker,
    ListTerm,
    Negated,
    Number,
    OrMarker,
    PredCall,
    Relation,
    Terminal,
    Variable,
)
from heaplets.syntax import (
    ParseError,
    parse_program,
    parse_sentence,
    parse_term_text,
    render_program,
    render_sentence,
)

from genutil import random_program

FIG2 = """\
map([],P,[]).
map([X|Xs],P,[Y|Ys]) :-
    Goal =.. [P,X,Y],
    call(Goal), map(Xs,P,Ys).
"""


def test_parse_two_heaplet_clause():
    p = parse_program("p2(X,Y):-pointsto(loc2,X),pointsto(loc3,Y).")
    assert len(p.clauses) == 1
    c = p.clauses[0]
    assert (c.head_name, c.arity) == ("p2", 2)
    assert [type(sg).__name__ for sg in c.body] == ["Terminal", "Terminal"]
    assert c.body[0].points.location == Atom("loc2")
    assert c.body[0].points.value == Variable("X")


def test_empty_input_is_empty_program():
    assert parse_program("").clauses == ()


def test_map_example_parses_with_univ_and_call():
    p = parse_program(FIG2)
    assert len(p.clauses) == 2
    assert p.clauses[0].head_name == "map" and p.clauses[0].is_fact
    body = p.clauses[1].body
    univ = body[0]
    assert isinstance(univ, PredCall) and univ.name == "=.."
    assert univ.args[0] == Variable("Goal")
    assert isinstance(univ.args[1], ListTerm)
    assert isinstance(body[1], PredCall) and body[1].name == "call" and len(body[1].args) == 1
    assert isinstance(body[2], PredCall) and body[2].name == "map"


def test_sentence_example_from_heap_state():
    s = parse_sentence("[pointsto(x,nil),pointsto(y,1),member(x,[y])]")
    kinds = [type(i).__name__ for i in s.items]
    assert kinds == ["Terminal", "Terminal", "PredCall"]
    assert s.items[1].points.value == Number(1)
    assert s.items[2].args == (Atom("x"), ListTerm((Atom("y"),)))


def test_sentence_with_relation():
    s = parse_sentence("[pointsto(X,5),X=Y]")
    assert isinstance(s.items[1], Relation)
    assert s.items[1].op == "="


def test_sentence_duplicate_location_cites_both_coordinates():
    with pytest.raises(ParseError) as exc:
        parse_sentence("[pointsto(x,1),pointsto(x,2)]")
    diags = exc.value.diagnostics
    assert len(diags) == 2
    assert {d.column for d in diags} == {2, 16}


def test_sentence_rejects_cut_and_fail():
    with pytest.raises(ParseError, match="'!'"):
        parse_sentence("[!]")
    with pytest.raises(ParseError, match="fail"):
        parse_sentence("[fail]")


def test_sentence_negated_fragment():
    s = parse_sentence("[pointsto(x,1), ~(pointsto(y,2), q(y))]")
    neg = s.items[1]
    assert isinstance(neg, Negated)
    assert [type(i).__name__ for i in neg.body] == ["Terminal", "PredCall"]


def test_semicolon_and_cut_parse_structurally():
    p = parse_program("b :- a0, a1; a2.\nc :- !, d.")
    body = p.clauses[0].body
    assert [type(sg).__name__ for sg in body] == ["PredCall", "PredCall", "OrMarker", "PredCall"]
    assert isinstance(p.clauses[1].body[0], CutMarker)


def test_fail_subgoal_and_fail_functor_are_distinct():
    p = parse_program("a :- fail.\nb :- fail(X).")
    assert isinstance(p.clauses[0].body[0], FailMarker)
    assert isinstance(p.clauses[1].body[0], PredCall)


def test_comments_and_layout_are_skipped():
    p = parse_program("% a comment\np(X) :-\n   q(X). % trailing\n")
    assert len(p.clauses) == 1


def test_clause_order_preserved():
    p = parse_program("a(1).\nb(2).\na(3).")
    assert [c.head_name for c in p.clauses] == ["a", "b", "a"]


def test_anonymous_variables_are_fresh_per_occurrence():
    p = parse_program("m(X) :- member(X,[_|_]), q(_).")
    sub = p.clauses[0].body[0]
    lst = sub.args[1]
    names = {lst.prefix[0].name, lst.tail.name, p.clauses[0].body[1].args[0].name}
    assert len(names) == 3
    for n in names:
        assert n.startswith("_A")


def test_anonymous_names_avoid_user_variables():
    p = parse_program("m(_A1, _) .")
    args = p.clauses[0].head_args
    assert args[0] == Variable("_A1")
    assert args[1] != Variable("_A1")


def test_zero_arity_functor_collapses_to_atom():
    p = parse_program("p :- q().")
    call = p.clauses[0].body[0]
    assert isinstance(call, PredCall) and call.name == "q" and call.args == ()


def test_decimals_and_negative_numbers():
    s = parse_sentence("[pointsto(x,1.50), pointsto(y,-3)]")
    assert s.items[0].points.value == Number(__import__("decimal").Decimal("1.50"))
    assert s.items[1].points.value == Number(-3)


def test_number_location_is_rejected_with_position():
    with pytest.raises(ParseError) as exc:
        parse_program("p :- pointsto(3,a).")
    assert exc.value.diagnostics[0].line == 1


def test_diagnostics_carry_in_bounds_coordinates():
    bad = ["p(", "p :- q", "p :- ,.", "[pointsto(x,1)", "p :- pointsto(x,1)"]
    for src in bad:
        with pytest.raises(ParseError) as exc:
            if src.startswith("["):
                parse_sentence(src)
            else:
                parse_program(src)
        for d in exc.value.diagnostics:
            lines = src.splitlines() or [""]
            assert 1 <= d.line <= len(lines)
            assert 1 <= d.column <= len(lines[d.line - 1]) + 2


def test_render_parse_roundtrip_spec_example():
    src = "p1(X,Y):-pointsto(loc1,val1),p2(X,Y)."
    p = parse_program(src)
    assert parse_program(render_program(p)) == p


def test_render_empty_program():
    assert render_program(parse_program("")) == ""


def test_roundtrip_200_random_programs():
    rng = random.Random(2024)
    for _ in range(200):
        p = random_program(rng)
        rendered = render_program(p)
        assert parse_program(rendered) == p, rendered


def test_roundtrip_random_sentences():
    rng = random.Random(9)
    from genutil import random_ground_sentence, random_heap_env

    for _ in range(100):
        env = random_heap_env(rng)
        s = random_ground_sentence(rng, env)
        if s is None:
            continue
        assert parse_sentence(render_sentence(s)) == s


def test_roundtrip_structural_bodies():
    src = "b :- a0, a1; a2.\nc :- !, fail.\nd :- ~(pointsto(x,1)), X =.. [f,Y]."
    p = parse_program(src)
    assert parse_program(render_program(p)) == p


def test_parse_term_text():
    t = parse_term_text("f(X,[a,b|T])")
    assert t.functor == "f"
    with pytest.raises(ParseError):
        parse_term_text("f(X) extra")
