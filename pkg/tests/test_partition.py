import random

import pytest

from heaplets.model import Atom
from heaplets.partition import (
    HeapGraphError,
    UndefinedPredicateError,
    build_env,
    build_heap_graph,
    dependency_edges,
    env_program,
    partitions,
)
from heaplets.syntax import parse_program, parse_sentence, parse_term_text, render_term

from genutil import random_heap_env

TWO_CLAUSE = "p2(X,Y):-pointsto(loc2,X),pointsto(loc3,Y).\np1(X,Y):-pointsto(loc1,val1),p2(X,Y)."


def test_build_env_groups_by_name_and_arity():
    env = build_env(parse_program(TWO_CLAUSE))
    assert set(env.order) == {("p1", 2), ("p2", 2)}
    assert len(env.clauses_for("p1", 2)) == 1
    assert len(env.clauses_for("p2", 2)) == 1


def test_build_env_empty():
    env = build_env(parse_program(""))
    assert env.order == ()


def test_build_env_keeps_clause_order_within_a_name():
    env = build_env(parse_program("a(1).\na(2).\na(3)."))
    assert len(env.clauses_for("a", 1)) == 3
    args = [c.head_args[0].value for c in env.clauses_for("a", 1)]
    assert args == [1, 2, 3]


def test_partition_of_calling_pair():
    env = build_env(parse_program(TWO_CLAUSE))
    parts = partitions(env)
    assert len(parts) == 1
    assert parts[0].members == frozenset({("p1", 2), ("p2", 2)})
    assert parts[0].entry_points == frozenset({("p1", 2)})


def test_independent_predicates_get_own_partitions():
    env = build_env(parse_program("a :- pointsto(x,1).\nb :- pointsto(y,2)."))
    assert len(partitions(env)) == 2


def test_self_recursive_predicate_is_its_own_entry():
    env = build_env(parse_program("member(X,[X|T]).\nmember(X,[H|T]) :- member(X,T)."))
    parts = partitions(env)
    assert len(parts) == 1
    assert parts[0].members == parts[0].entry_points == frozenset({("member", 2)})


def test_pure_cycle_makes_every_member_an_entry():
    env = build_env(parse_program("a :- b.\nb :- a."))
    parts = partitions(env)
    assert parts[0].entry_points == parts[0].members


def test_undefined_call_is_a_hard_error_with_sites():
    env = build_env(parse_program("a :- missing(x), pointsto(l,1).\nb :- missing(y)."))
    with pytest.raises(UndefinedPredicateError) as exc:
        partitions(env)
    assert ("missing", 1) in exc.value.missing
    assert len(exc.value.missing[("missing", 1)]) == 2
    assert "missing/1" in str(exc.value)


def test_negated_calls_count_as_dependencies():
    env = build_env(parse_program("a :- ~(b).\nb :- pointsto(x,1)."))
    parts = partitions(env)
    assert len(parts) == 1
    assert parts[0].members == frozenset({("a", 0), ("b", 0)})


def test_every_predicate_in_exactly_one_partition():
    rng = random.Random(17)
    for _ in range(60):
        env = random_heap_env(rng)
        parts = partitions(env)
        seen = [k for p in parts for k in p.members]
        assert sorted(seen) == sorted(env.order)


def test_partitions_are_maximal_components():
    rng = random.Random(18)
    for _ in range(60):
        env = random_heap_env(rng)
        parts = partitions(env)
        edges = dependency_edges(env)
        for i, a in enumerate(parts):
            for b in parts[i + 1 :]:
                for x, y in edges:
                    crossing = (x in a.members and y in b.members) or (
                        x in b.members and y in a.members
                    )
                    assert not crossing


def test_env_program_roundtrip():
    env = build_env(parse_program(TWO_CLAUSE))
    assert build_env(env_program(env)) == env


# ---------------------------------------------------------------------------
# Heap graphs
# ---------------------------------------------------------------------------

def test_heap_graph_chain_to_sink():
    g = build_heap_graph(parse_sentence("[pointsto(x,y), pointsto(y,nil)]"))
    assert g.vertices == frozenset({Atom("x"), Atom("y"), Atom("nil")})
    assert (Atom("x"), Atom("y")) in g.edges
    assert g.connected


def test_heap_graph_alias_pair_for_shared_target():
    g = build_heap_graph(
        parse_sentence("[pointsto(oa(p1,next),p2), pointsto(oa(p3,next),p2)]")
    )
    assert len(g.aliases) == 1
    pair = next(iter(g.aliases))
    assert {render_term(t) for t in pair} == {"oa(p1,next)", "oa(p3,next)"}


def test_heap_graph_empty_sentence_vacuously_connected():
    g = build_heap_graph(parse_sentence("[]"))
    assert g.vertices == frozenset()
    assert g.connected


def test_heap_graph_requires_ground_terminals():
    with pytest.raises(HeapGraphError):
        build_heap_graph(parse_sentence("[pointsto(X,1)]"))


def test_heap_graph_embedded_location_edge():
    g = build_heap_graph(parse_sentence("[pointsto(x,f(y,z)), pointsto(y,nil)]"))
    assert (Atom("x"), Atom("y")) in g.edges


def test_heap_graph_edge_count_bounded_by_embedded_targets():
    rng = random.Random(4)
    from genutil import random_ground_sentence

    for _ in range(80):
        env = random_heap_env(rng)
        s = random_ground_sentence(rng, env)
        if s is None:
            continue
        terminals = [i for i in s.items if type(i).__name__ == "Terminal"]
        only_terms = parse_sentence(
            "[" + ",".join(
                f"pointsto({render_term(t.points.location)},{render_term(t.points.value)})"
                for t in terminals
            )
            + "]"
        ) if terminals else parse_sentence("[]")
        g = build_heap_graph(only_terms)
        # single-location values: one edge per heaplet at most
        assert len(g.edges) <= len(terminals)
