"""Brute-force bounded-depth derivation enumeration.

This is the ground-truth reference the test suite compares the recogniser
and the grammar analyses against. It exhaustively expands every predicate
call through every clause alternative and matches terminal multisets by
enumerating bijections with backtracking unification. It deliberately
shares only the term model and the unifier with the recogniser.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .model import (
    AbstractSentence,
    Clause,
    Compound,
    ListTerm,
    Negated,
    Number,
    PointsTo,
    PredCall,
    Relation,
    Subgoal,
    Term,
    Terminal,
    Variable,
    is_ground,
)
from .partition import PredicateEnv
from .syntax import render_term
from .unify import Substitution, UnifyFailure, apply, unify

MAX_DEPTH = 8

_fresh = itertools.count(1)


class OracleError(Exception):
    pass


@dataclass(frozen=True)
class DerivationSet:
    """Terminal-only normal forms reachable within the unfold bound,
    each with its accumulated substitution."""

    normal_forms: tuple[tuple[tuple[PointsTo, ...], Substitution], ...]
    truncated: bool


def _rename_term(t: Term, mapping: dict[str, str]) -> Term:
    if isinstance(t, Variable):
        return Variable(mapping[t.name])
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_rename_term(a, mapping) for a in t.args))
    if isinstance(t, ListTerm):
        tail = _rename_term(t.tail, mapping) if t.tail is not None else None
        return ListTerm(tuple(_rename_term(a, mapping) for a in t.prefix), tail)
    return t


def _rename_subgoal(sg: Subgoal, mapping: dict[str, str]) -> Subgoal:
    if isinstance(sg, Terminal):
        return Terminal(
            PointsTo(
                _rename_term(sg.points.location, mapping),
                _rename_term(sg.points.value, mapping),
            ),
            origin=sg.origin,
        )
    if isinstance(sg, PredCall):
        return PredCall(sg.name, tuple(_rename_term(a, mapping) for a in sg.args), origin=sg.origin)
    if isinstance(sg, Relation):
        return Relation(
            _rename_term(sg.lhs, mapping), sg.op, _rename_term(sg.rhs, mapping), origin=sg.origin
        )
    raise OracleError(f"the oracle does not handle {type(sg).__name__} subgoals")


def _rename_clause_apart(clause: Clause) -> Clause:
    from .model import clause_vars

    n = next(_fresh)
    mapping = {v: f"_O{n}_{v}" for v in clause_vars(clause)}
    return Clause(
        clause.head_name,
        tuple(_rename_term(a, mapping) for a in clause.head_args),
        tuple(_rename_subgoal(sg, mapping) for sg in clause.body),
    )


def _guard_holds(rel: Relation, sigma: Substitution) -> Substitution | None:
    """Same reading as the recogniser: '=' unifies, the rest need ground
    sides; None means the branch fails."""
    if rel.op == "=":
        out = unify(rel.lhs, rel.rhs, sigma)
        return None if isinstance(out, UnifyFailure) else out
    lhs = apply(sigma, rel.lhs)
    rhs = apply(sigma, rel.rhs)
    if not (is_ground(lhs) and is_ground(rhs)):
        raise OracleError(f"unresolved guard: {render_term(lhs)} {rel.op} {render_term(rhs)}")
    if rel.op == "\\=":
        return sigma if isinstance(unify(lhs, rhs, sigma), UnifyFailure) else None
    if not (isinstance(lhs, Number) and isinstance(rhs, Number)):
        raise OracleError(f"numeric comparison on non-numbers: {render_term(lhs)} {rel.op} {render_term(rhs)}")
    ok = {
        "<": lhs.value < rhs.value,
        "<=": lhs.value <= rhs.value,
        ">": lhs.value > rhs.value,
        ">=": lhs.value >= rhs.value,
    }[rel.op]
    return sigma if ok else None


def derivations(env: PredicateEnv, s: AbstractSentence, depth: int) -> DerivationSet:
    """Every expansion sequence of every call through every clause
    alternative, collecting terminal-only forms with their substitutions."""
    if depth > MAX_DEPTH:
        raise ValueError(f"oracle depth capped at {MAX_DEPTH}")
    normal: list[tuple[tuple[PointsTo, ...], Substitution]] = []
    seen: set[str] = set()
    truncated = False

    # (items, substitution, unfolds used)
    stack: list[tuple[tuple[Subgoal, ...], Substitution, int]] = [
        (tuple(s.items), Substitution.empty(), 0)
    ]
    while stack:
        items, sigma, used = stack.pop()

        # settle guards first; a failing guard kills the state
        settled: list[Subgoal] = []
        failed = False
        progress = True
        while progress:
            progress = False
            rest: list[Subgoal] = []
            for sg in items:
                if isinstance(sg, Relation):
                    if sg.op == "=" or (
                        is_ground(apply(sigma, sg.lhs)) and is_ground(apply(sigma, sg.rhs))
                    ):
                        out = _guard_holds(sg, sigma)
                        if out is None:
                            failed = True
                            break
                        sigma = out
                        progress = True
                        continue
                rest.append(sg)
            if failed:
                break
            items = tuple(rest)
        if failed:
            continue

        call_at = next((i for i, sg in enumerate(items) if isinstance(sg, PredCall)), None)
        if call_at is None:
            leftover = [sg for sg in items if isinstance(sg, Relation)]
            if leftover:
                bad = leftover[0]
                raise OracleError(
                    f"unresolved guard at a normal form: {render_term(apply(sigma, bad.lhs))} {bad.op} {render_term(apply(sigma, bad.rhs))}"
                )
            terminals = tuple(
                PointsTo(apply(sigma, sg.points.location), apply(sigma, sg.points.value))
                for sg in items
                if isinstance(sg, Terminal)
            )
            key = "|".join(
                f"{render_term(p.location)}>{render_term(p.value)}" for p in terminals
            ) + "//" + ";".join(
                f"{v}={render_term(t)}" for v, t in sorted(sigma.items())
            )
            if key not in seen:
                seen.add(key)
                normal.append((terminals, sigma))
            continue

        if used >= depth:
            truncated = True
            continue
        call = items[call_at]
        assert isinstance(call, PredCall)
        for clause in env.clauses_for(call.name, len(call.args)):
            if clause.arity != len(call.args):
                continue
            fresh_clause = _rename_clause_apart(clause)
            out: Substitution | UnifyFailure = sigma
            for a, y in zip(call.args, fresh_clause.head_args):
                out = unify(a, y, out)  # type: ignore[arg-type]
                if isinstance(out, UnifyFailure):
                    break
            if isinstance(out, UnifyFailure):
                continue
            new_items = items[:call_at] + fresh_clause.body + items[call_at + 1 :]
            stack.append((new_items, out, used + 1))

    return DerivationSet(tuple(normal), truncated)


def _merge(into: Substitution, other: Substitution) -> Substitution | None:
    merged: Substitution | UnifyFailure = into
    for v, t in sorted(other.items()):
        merged = unify(Variable(v), t, merged)  # type: ignore[arg-type]
        if isinstance(merged, UnifyFailure):
            return None
    return merged


def _match_multisets(
    left: list[PointsTo], right: list[PointsTo], sigma: Substitution
) -> Substitution | None:
    """Backtracking enumeration of bijections between two terminal lists."""
    if not left:
        return sigma if not right else None
    if len(left) != len(right):
        return None
    head, rest = left[0], left[1:]
    for i, cand in enumerate(right):
        out = unify(head.location, cand.location, sigma)
        if isinstance(out, UnifyFailure):
            continue
        out = unify(head.value, cand.value, out)
        if isinstance(out, UnifyFailure):
            continue
        found = _match_multisets(rest, right[:i] + right[i + 1 :], out)
        if found is not None:
            return found
    return None


def oracle_equal(
    env: PredicateEnv, a1: AbstractSentence, a2: AbstractSentence, depth: int
) -> bool | None:
    """True/False when decidable within the bound; None when inconclusive
    (some side was truncated before an intersection was found)."""
    d1 = derivations(env, a1, depth)
    d2 = derivations(env, a2, depth)
    for t1, s1 in d1.normal_forms:
        for t2, s2 in d2.normal_forms:
            merged = _merge(s2, s1)
            if merged is None:
                continue
            if _match_multisets(list(t1), list(t2), merged) is not None:
                return True
    if d1.truncated or d2.truncated:
        return None
    return False
