"""Predicate environment, call-dependency partitions, and heap graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from .model import (
    AbstractSentence,
    Clause,
    Negated,
    Origin,
    PredCall,
    Program,
    Subgoal,
    Term,
    Terminal,
    is_ground,
)
from .syntax import render_term

PredKey = tuple[str, int]


@dataclass(frozen=True)
class PredicateEnv:
    """Clauses grouped by name/arity, keeping source order within a group
    and first-definition order across groups."""

    rules: dict[PredKey, tuple[Clause, ...]] = field(default_factory=dict)
    order: tuple[PredKey, ...] = ()

    def clauses_for(self, name: str, arity: int) -> tuple[Clause, ...]:
        return self.rules.get((name, arity), ())

    def all_clauses(self) -> Iterator[tuple[PredKey, Clause]]:
        for key in self.order:
            for clause in self.rules[key]:
                yield key, clause

    def __contains__(self, key: PredKey) -> bool:
        return key in self.rules

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, PredicateEnv)
            and self.order == other.order
            and self.rules == other.rules
        )


def build_env(p: Program) -> PredicateEnv:
    rules: dict[PredKey, list[Clause]] = {}
    order: list[PredKey] = []
    for clause in p.clauses:
        key = (clause.head_name, clause.arity)
        if key not in rules:
            rules[key] = []
            order.append(key)
        rules[key].append(clause)
    return PredicateEnv({k: tuple(v) for k, v in rules.items()}, tuple(order))


def env_program(env: PredicateEnv) -> Program:
    """The environment flattened back to a program, name-major."""
    return Program(tuple(c for _, c in env.all_clauses()))


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """A connected component of the call-dependency graph.

    Entry points are the members no other member calls; a pure cycle has
    no such member, in which case every member is an entry point.
    """

    members: frozenset[PredKey]
    entry_points: frozenset[PredKey]


class UndefinedPredicateError(Exception):
    def __init__(self, missing: dict[PredKey, list[Origin | None]]):
        self.missing = missing
        parts = []
        for (name, arity), sites in sorted(missing.items()):
            where = ", ".join(
                f"{o.file or '<input>'}:{o.line}:{o.column}" for o in sites if o is not None
            )
            parts.append(f"{name}/{arity}" + (f" (called at {where})" if where else ""))
        super().__init__("undefined predicates: " + "; ".join(parts))


def _body_calls(sg: Subgoal) -> Iterator[PredCall]:
    if isinstance(sg, PredCall):
        yield sg
    elif isinstance(sg, Negated):
        for inner in sg.body:
            yield from _body_calls(inner)


def check_defined(env: PredicateEnv, calls: Iterator[PredCall]) -> None:
    missing: dict[PredKey, list[Origin | None]] = {}
    for call in calls:
        key = (call.name, len(call.args))
        if key not in env:
            missing.setdefault(key, []).append(call.origin)
    if missing:
        raise UndefinedPredicateError(missing)


def _env_calls(env: PredicateEnv) -> Iterator[PredCall]:
    for _, clause in env.all_clauses():
        for sg in clause.body:
            yield from _body_calls(sg)


def dependency_edges(env: PredicateEnv) -> set[tuple[PredKey, PredKey]]:
    """Directed caller -> callee edges; negated calls count too."""
    edges: set[tuple[PredKey, PredKey]] = set()
    for key in env.order:
        for clause in env.rules[key]:
            for sg in clause.body:
                for call in _body_calls(sg):
                    edges.add((key, (call.name, len(call.args))))
    return edges


def partitions(env: PredicateEnv) -> list[Partition]:
    """Connected components of the symmetric closure of the dependency
    graph, in first-definition order. Calls of undefined predicates are a
    hard error: they would leave the generated grammar ill-formed."""
    check_defined(env, _env_calls(env))
    edges = dependency_edges(env)
    neighbours: dict[PredKey, set[PredKey]] = {k: set() for k in env.order}
    for a, b in edges:
        neighbours[a].add(b)
        neighbours[b].add(a)
    seen: set[PredKey] = set()
    out: list[Partition] = []
    for key in env.order:
        if key in seen:
            continue
        component: set[PredKey] = set()
        stack = [key]
        while stack:
            k = stack.pop()
            if k in component:
                continue
            component.add(k)
            stack.extend(neighbours[k] - component)
        seen |= component
        called_by_others = {
            callee for caller, callee in edges if caller in component and caller != callee
        }
        entries = frozenset(component - called_by_others) or frozenset(component)
        out.append(Partition(frozenset(component), entries))
    return out


# ---------------------------------------------------------------------------
# Heap graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeapGraph:
    vertices: frozenset[Term]
    edges: frozenset[tuple[Term, Term]]
    aliases: frozenset[tuple[Term, Term]]
    connected: bool


class HeapGraphError(Exception):
    pass


def _embeds(value: Term, target: Term) -> bool:
    if value == target:
        return True
    from .model import Compound, ListTerm

    if isinstance(value, Compound):
        return any(_embeds(a, target) for a in value.args)
    if isinstance(value, ListTerm):
        if any(_embeds(a, target) for a in value.prefix):
            return True
        return value.tail is not None and _embeds(value.tail, target)
    return False


def build_heap_graph(s: AbstractSentence) -> HeapGraph:
    """Directed graph of a ground sentence's heaplets.

    An edge runs from a location to every vertex its value is or embeds;
    values touching no location become sink vertices. Two in-edges on one
    vertex record the pointing locations as an alias pair. Connectivity is
    reported, never enforced.
    """
    heaplets = []
    for item in s.items:
        if isinstance(item, Terminal):
            if not is_ground(item.points.location) or not is_ground(item.points.value):
                raise HeapGraphError(
                    f"heap graphs need ground heaplets: {render_term(item.points.location)}"
                )
            heaplets.append(item.points)
    locations = {pt.location for pt in heaplets}
    vertices = set(locations)
    edges: set[tuple[Term, Term]] = set()
    for pt in heaplets:
        targets = {loc for loc in locations if _embeds(pt.value, loc)}
        if targets:
            edges |= {(pt.location, t) for t in targets}
        else:
            vertices.add(pt.value)
            edges.add((pt.location, pt.value))
    aliases: set[tuple[Term, Term]] = set()
    preds: dict[Term, list[Term]] = {}
    for frm, to in sorted(edges, key=lambda e: (render_term(e[0]), render_term(e[1]))):
        preds.setdefault(to, []).append(frm)
    for to, sources in preds.items():
        for i in range(len(sources)):
            for j in range(i + 1, len(sources)):
                pair = tuple(sorted((sources[i], sources[j]), key=render_term))
                aliases.add(pair)  # type: ignore[arg-type]
    connected = _is_connected(vertices, edges)
    return HeapGraph(frozenset(vertices), frozenset(edges), frozenset(aliases), connected)


def _is_connected(vertices: set[Term], edges: set[tuple[Term, Term]]) -> bool:
    if not vertices:
        return True
    neighbours: dict[Term, set[Term]] = {v: set() for v in vertices}
    for a, b in edges:
        neighbours[a].add(b)
        neighbours[b].add(a)
    start = next(iter(vertices))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in neighbours[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen == vertices
