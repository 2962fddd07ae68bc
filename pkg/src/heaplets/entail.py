"""The entailment engine.

Two sentences are equivalent when some sequence of predicate unfoldings
on either side, together with one substitution, makes their heaplet
multisets equal, satisfies every relation guard and leaves no negated
fragment matchable. The naive shift/reduce loop sketch for this problem
is incomplete on reorderable conjuncts, so the engine keeps its move set
(shift matching heaplets, match predicate pairs, unfold either side,
guided by first-set intersection) but explores it with full backtracking
under explicit budgets:

  * guards are settled as soon as they are ground ('=' immediately);
  * negated fragments block a branch iff their body can be matched into
    the opposite side's remainder, without binding outside variables;
  * the leftmost unresolved left item is the focus: a heaplet is shifted
    against unifiable opposite heaplets or the opposite side is unfolded
    where it can still produce a compatible token, a call is first paired
    with an equal call opposite (folding shortcut) and then unfolded,
    later-defined clauses first;
  * states that exhausted all alternatives without hitting a budget are
    memoized by an alpha-normalized fingerprint of both sides, so only
    genuine failures are cached and a budget cutoff never masquerades as
    a refutation.

Exceeded budgets yield DepthExceeded, never Refuted.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass, field

from .grammar import FirstFollowTables, TerminalShape
from .model import (
    AbstractSentence,
    Clause,
    Compound,
    ListTerm,
    Negated,
    Number,
    Origin,
    PointsTo,
    PredCall,
    Relation,
    Subgoal,
    Term,
    Terminal,
    Variable,
    clause_vars,
    is_ground,
    sentence_vars,
    subgoal_vars,
)
from .normalize import token_shape
from .partition import PredicateEnv, check_defined
from .syntax import render_subgoal, render_term
from .unify import Substitution, UnifyFailure, apply, unify


class EntailError(Exception):
    pass


class GuardError(EntailError):
    pass


@dataclass(frozen=True)
class EntailConfig:
    max_depth: int = 64
    max_steps: int = 1_000_000
    order_conjuncts: bool = True

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.max_steps < self.max_depth:
            raise ValueError("max_steps must be at least max_depth")


# ---------------------------------------------------------------------------
# Trace events
# ---------------------------------------------------------------------------

class TraceEvent:
    __slots__ = ()


@dataclass(frozen=True)
class ShiftEvent(TraceEvent):
    left: PointsTo
    right: PointsTo


@dataclass(frozen=True)
class PredPairEvent(TraceEvent):
    left: PredCall
    right: PredCall


@dataclass(frozen=True)
class UnfoldEvent(TraceEvent):
    side: str  # "left" or "right"
    call: PredCall
    clause_origin: Origin | None
    body: tuple[Subgoal, ...]


@dataclass(frozen=True)
class GuardEvent(TraceEvent):
    side: str
    relation: Relation


@dataclass(frozen=True)
class NegCheckEvent(TraceEvent):
    side: str
    body: tuple[Subgoal, ...]


def _apply_event(sigma: "Substitution", ev: TraceEvent) -> TraceEvent:
    """Instantiate an event's payload under the final bindings so traces
    can be replayed against the witness."""
    if isinstance(ev, ShiftEvent):
        return ShiftEvent(_apply_pts(sigma, ev.left), _apply_pts(sigma, ev.right))
    if isinstance(ev, PredPairEvent):
        return PredPairEvent(
            _apply_subgoal(sigma, ev.left), _apply_subgoal(sigma, ev.right)
        )
    if isinstance(ev, UnfoldEvent):
        return UnfoldEvent(
            ev.side,
            _apply_subgoal(sigma, ev.call),
            ev.clause_origin,
            tuple(_apply_subgoal(sigma, sg) for sg in ev.body),
        )
    if isinstance(ev, GuardEvent):
        return GuardEvent(ev.side, _apply_subgoal(sigma, ev.relation))
    if isinstance(ev, NegCheckEvent):
        return NegCheckEvent(ev.side, tuple(_apply_subgoal(sigma, sg) for sg in ev.body))
    return ev


def _apply_pts(sigma: "Substitution", pt: PointsTo) -> PointsTo:
    from .unify import apply as _apply

    return PointsTo(_apply(sigma, pt.location), _apply(sigma, pt.value))


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Position:
    index: int | None
    origin: Origin | None


@dataclass(frozen=True)
class RefutationReport:
    left: Position
    right: Position
    expected: frozenset[TerminalShape]
    found: str | None
    exhausted_alternatives: int


@dataclass(frozen=True)
class Entailed:
    witness: Substitution
    trace: tuple[TraceEvent, ...]
    steps: int = field(default=0, compare=False)
    depth: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Refuted:
    report: RefutationReport
    steps: int = field(default=0, compare=False)
    depth: int = field(default=0, compare=False)


@dataclass(frozen=True)
class DepthExceeded:
    partial_trace: tuple[TraceEvent, ...]
    steps: int = field(default=0, compare=False)
    depth: int = field(default=0, compare=False)


Verdict = Entailed | Refuted | DepthExceeded


# ---------------------------------------------------------------------------
# Clause expansion (unfolding)
# ---------------------------------------------------------------------------

_module_fresh = itertools.count(1)


def _rename_term(t: Term, mapping: dict[str, str]) -> Term:
    if isinstance(t, Variable):
        return Variable(mapping.get(t.name, t.name))
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_rename_term(a, mapping) for a in t.args))
    if isinstance(t, ListTerm):
        tail = _rename_term(t.tail, mapping) if t.tail is not None else None
        return ListTerm(tuple(_rename_term(a, mapping) for a in t.prefix), tail)
    return t


def _rename_subgoal(sg: Subgoal, mapping: dict[str, str]) -> Subgoal:
    if isinstance(sg, Terminal):
        pt = PointsTo(
            _rename_term(sg.points.location, mapping),
            _rename_term(sg.points.value, mapping),
        )
        return Terminal(pt, origin=sg.origin)
    if isinstance(sg, PredCall):
        return PredCall(sg.name, tuple(_rename_term(a, mapping) for a in sg.args), origin=sg.origin)
    if isinstance(sg, Relation):
        return Relation(
            _rename_term(sg.lhs, mapping), sg.op, _rename_term(sg.rhs, mapping), origin=sg.origin
        )
    if isinstance(sg, Negated):
        return Negated(tuple(_rename_subgoal(i, mapping) for i in sg.body), origin=sg.origin)
    raise EntailError(f"cannot instantiate subgoal {sg!r}")


def rename_clause(clause: Clause, prefix: str, n: int) -> Clause:
    mapping = {v: f"{prefix}{n}_{v}" for v in clause_vars(clause)}
    return Clause(
        clause.head_name,
        tuple(_rename_term(a, mapping) for a in clause.head_args),
        tuple(_rename_subgoal(sg, mapping) for sg in clause.body),
        origin=clause.origin,
    )


def expand(
    call: PredCall,
    clause: Clause,
    under: Substitution,
    *,
    prefix: str = "_E",
    suffix: int | None = None,
) -> tuple[tuple[Subgoal, ...], Substitution] | UnifyFailure:
    """Unfold `call` through `clause`: rename the clause apart, unify the
    argument vectors pairwise, and return the instantiated body."""
    if clause.head_name != call.name or clause.arity != len(call.args):
        raise EntailError(
            f"clause {clause.head_name}/{clause.arity} does not define "
            f"{call.name}/{len(call.args)}"
        )
    n = suffix if suffix is not None else next(_module_fresh)
    fresh = rename_clause(clause, prefix, n)
    sigma: Substitution | UnifyFailure = under
    for a, y in zip(call.args, fresh.head_args):
        sigma = unify(a, y, sigma)  # type: ignore[arg-type]
        if isinstance(sigma, UnifyFailure):
            return sigma
    body = tuple(_apply_subgoal(sigma, sg) for sg in fresh.body)
    return body, sigma


def _apply_subgoal(sigma: Substitution, sg: Subgoal) -> Subgoal:
    if isinstance(sg, Terminal):
        return Terminal(
            PointsTo(apply(sigma, sg.points.location), apply(sigma, sg.points.value)),
            origin=sg.origin,
        )
    if isinstance(sg, PredCall):
        return PredCall(sg.name, tuple(apply(sigma, a) for a in sg.args), origin=sg.origin)
    if isinstance(sg, Relation):
        return Relation(apply(sigma, sg.lhs), sg.op, apply(sigma, sg.rhs), origin=sg.origin)
    if isinstance(sg, Negated):
        return Negated(tuple(_apply_subgoal(sigma, i) for i in sg.body), origin=sg.origin)
    return sg


# ---------------------------------------------------------------------------
# Guards
# ---------------------------------------------------------------------------

def guard_ready(rel: Relation, sigma: Substitution) -> bool:
    if rel.op == "=":
        return True
    return is_ground(apply(sigma, rel.lhs)) and is_ground(apply(sigma, rel.rhs))


def evaluate_guard(rel: Relation, under: Substitution) -> Substitution | None:
    """'=' unifies; '\\=' needs ground sides and succeeds when they clash;
    the numeric comparisons need ground numbers. None means the guard
    failed; GuardError means it cannot be evaluated."""
    if rel.op == "=":
        out = unify(rel.lhs, rel.rhs, under)
        return None if isinstance(out, UnifyFailure) else out
    lhs = apply(under, rel.lhs)
    rhs = apply(under, rel.rhs)
    if not (is_ground(lhs) and is_ground(rhs)):
        raise GuardError(
            f"unresolved guard: {render_term(lhs)} {rel.op} {render_term(rhs)}"
        )
    if rel.op == "\\=":
        return under if isinstance(unify(lhs, rhs, under), UnifyFailure) else None
    if not (isinstance(lhs, Number) and isinstance(rhs, Number)):
        raise GuardError(
            f"numeric comparison on non-numbers: {render_term(lhs)} {rel.op} {render_term(rhs)}"
        )
    holds = {
        "<": lhs.value < rhs.value,
        "<=": lhs.value <= rhs.value,
        ">": lhs.value > rhs.value,
        ">=": lhs.value >= rhs.value,
    }[rel.op]
    return under if holds else None


# ---------------------------------------------------------------------------
# Shift enumeration (public operation)
# ---------------------------------------------------------------------------

def shift_terms(
    a1: AbstractSentence, a2: AbstractSentence, under: Substitution | None = None
) -> list[tuple[AbstractSentence, AbstractSentence, Substitution]]:
    """Enumerate the maximal heaplet matchings between the two sentences,
    left-to-right in a1 with a2 candidates in sentence order, removing
    every matched pair."""
    sigma0 = under if under is not None else Substitution.empty()
    results: list[tuple[AbstractSentence, AbstractSentence, Substitution]] = []
    seen: set[tuple[tuple[tuple[int, int], ...], str]] = set()

    lefts = list(a1.items)
    rights = list(a2.items)

    def go(i: int, used: set[int], sigma: Substitution, picked: list[tuple[int, int]]) -> None:
        while i < len(lefts) and not isinstance(lefts[i], Terminal):
            i += 1
        if i >= len(lefts):
            key = (
                tuple(sorted(picked)),
                ";".join(f"{v}={render_term(t)}" for v, t in sorted(sigma.items())),
            )
            if key in seen:
                return
            seen.add(key)
            li = tuple(x for k, x in enumerate(lefts) if k not in {p for p, _ in picked})
            ri = tuple(x for k, x in enumerate(rights) if k not in {q for _, q in picked})
            results.append((AbstractSentence(li), AbstractSentence(ri), sigma))
            return
        item = lefts[i]
        assert isinstance(item, Terminal)
        matched = False
        for j, cand in enumerate(rights):
            if j in used or not isinstance(cand, Terminal):
                continue
            out = unify(item.points.location, cand.points.location, sigma)
            if isinstance(out, UnifyFailure):
                continue
            out = unify(item.points.value, cand.points.value, out)
            if isinstance(out, UnifyFailure):
                continue
            matched = True
            go(i + 1, used | {j}, out, picked + [(i, j)])
        if not matched:
            go(i + 1, used, sigma, picked)

    go(0, set(), sigma0, [])
    return results


# ---------------------------------------------------------------------------
# Reachable token shapes (first-set guidance over full derivations)
# ---------------------------------------------------------------------------

def reachable_shapes(env: PredicateEnv) -> dict[tuple[str, int], set[TerminalShape]]:
    """Every heaplet token shape a predicate can emit in any derivation;
    an over-approximation used to skip unfoldings that can never produce a
    wanted token."""
    reach: dict[tuple[str, int], set[TerminalShape]] = {k: set() for k in env.order}
    changed = True
    while changed:
        changed = False
        for key in env.order:
            for clause in env.rules[key]:
                for sg in clause.body:
                    add: set[TerminalShape] = set()
                    if isinstance(sg, Terminal):
                        add = {TerminalShape(token_shape(sg.points), sg.points)}
                    elif isinstance(sg, PredCall):
                        add = reach.get((sg.name, len(sg.args)), set())
                    if not add <= reach[key]:
                        reach[key] |= add
                        changed = True
    return reach


_compat_fresh = itertools.count(1)


def shapes_compatible(a: PointsTo, b: PointsTo) -> bool:
    """Could tokens of these two patterns ever unify? Both sides' variables
    are renamed apart, so this is unification of the erased patterns."""
    n = next(_compat_fresh)
    ma = {v: f"_Ca{n}_{v}" for v in subgoal_vars(Terminal(a))}
    mb = {v: f"_Cb{n}_{v}" for v in subgoal_vars(Terminal(b))}
    pa = PointsTo(_rename_term(a.location, ma), _rename_term(a.value, ma))
    pb = PointsTo(_rename_term(b.location, mb), _rename_term(b.value, mb))
    out = unify(pa.location, pb.location)
    if isinstance(out, UnifyFailure):
        return False
    return not isinstance(unify(pa.value, pb.value, out), UnifyFailure)


def expected_shapes(
    tables: FirstFollowTables, item: Subgoal, sigma: Substitution
) -> frozenset[TerminalShape]:
    """The analyzer's prediction for what tokens should have matched an
    item: the sound first set for a call, the item's own shape for a
    heaplet."""
    if isinstance(item, PredCall):
        return frozenset(tables.first_ext.get(f"{item.name}/{len(item.args)}", frozenset()))
    if isinstance(item, Terminal):
        pt = PointsTo(apply(sigma, item.points.location), apply(sigma, item.points.value))
        return frozenset([TerminalShape(token_shape(pt), pt)])
    return frozenset()


# ---------------------------------------------------------------------------
# The search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Item:
    sub: Subgoal
    index: int | None  # position in the original sentence, None if unfolded
    blame_index: int | None
    blame_origin: Origin | None
    blame_sub: Subgoal


_SUCCESS, _FAIL, _CUTOFF = 0, 1, 2


def _wrap_items(sentence: AbstractSentence) -> list[_Item]:
    return [
        _Item(sub, i, i, sub.origin, sub) for i, sub in enumerate(sentence.items)
    ]


def _order_items(items: list[_Item]) -> list[_Item]:
    terminals = [it for it in items if isinstance(it.sub, Terminal)]
    rest = [it for it in items if not isinstance(it.sub, Terminal)]
    terminals.sort(key=lambda it: render_term(it.sub.points.location))
    return terminals + rest


def _fingerprint(left: list[_Item], right: list[_Item], sigma: Substitution) -> str:
    """Alpha-normalized rendering of both sides' multisets. Equal prints
    mean permutation-plus-renaming-equivalent states, which have identical
    outcomes; distinct prints for equivalent states only cost memo misses."""

    def render_erased(sg: Subgoal, out: list[str], names: list[str] | None) -> None:
        # one walk produces either the sort key (variables erased) or the
        # final form (variables numbered by first occurrence)
        def term(t: Term) -> None:
            if isinstance(t, Variable):
                if names is None:
                    out.append("_")
                else:
                    try:
                        idx = names.index(t.name)
                    except ValueError:
                        idx = len(names)
                        names.append(t.name)
                    out.append(f"_{idx}")
            elif isinstance(t, Compound):
                out.append(t.functor)
                out.append("(")
                for a in t.args:
                    term(a)
                    out.append(",")
                out.append(")")
            elif isinstance(t, ListTerm):
                out.append("[")
                for a in t.prefix:
                    term(a)
                    out.append(",")
                if t.tail is not None:
                    out.append("|")
                    term(t.tail)
                out.append("]")
            else:
                out.append(render_term(t))

        if isinstance(sg, Terminal):
            out.append("pt:")
            term(sg.points.location)
            out.append(">")
            term(sg.points.value)
        elif isinstance(sg, PredCall):
            out.append(f"c:{sg.name}/{len(sg.args)}(")
            for a in sg.args:
                term(a)
                out.append(",")
            out.append(")")
        elif isinstance(sg, Relation):
            out.append("r:")
            term(sg.lhs)
            out.append(sg.op)
            term(sg.rhs)
        elif isinstance(sg, Negated):
            out.append("~(")
            for inner in sg.body:
                render_erased(inner, out, names)
                out.append("&")
            out.append(")")
        else:
            raise EntailError(f"cannot fingerprint {sg!r}")

    def side(items: list[_Item]) -> list[Subgoal]:
        applied = [_apply_subgoal(sigma, it.sub) for it in items]

        def key(sg: Subgoal) -> str:
            buf: list[str] = []
            render_erased(sg, buf, None)
            return "".join(buf)

        applied.sort(key=key)
        return applied

    names: list[str] = []
    buf: list[str] = []
    for sg in side(left):
        render_erased(sg, buf, names)
        buf.append("&")
    buf.append("||")
    for sg in side(right):
        render_erased(sg, buf, names)
        buf.append("&")
    return "".join(buf)


class _Search:
    def __init__(
        self,
        env: PredicateEnv,
        tables: FirstFollowTables,
        cfg: EntailConfig,
        taken_names: set[str],
    ):
        self.env = env
        self.tables = tables
        self.cfg = cfg
        self.reach = reachable_shapes(env)
        self.steps = 0
        self.max_depth_seen = 0
        self.counter = 0
        self.memo: set[str] = set()
        self.compat: dict[tuple[str, str], bool] = {}
        self.guard_error: GuardError | None = None
        self.best_fail: tuple[int, RefutationReport] | None = None
        self.longest_trace: tuple[TraceEvent, ...] = ()
        self.failed_alternatives = 0
        prefix = "_R"
        while any(name.startswith(prefix) for name in taken_names):
            prefix += "x"
        self.prefix = prefix

    def compatible(self, fpat: PointsTo, ftok: str, shape: TerminalShape) -> bool:
        key = (ftok, shape.token)
        hit = self.compat.get(key)
        if hit is None:
            hit = shapes_compatible(fpat, shape.pattern)
            self.compat[key] = hit
        return hit

    def uncovered(
        self, left: list[_Item], right: list[_Item], sigma: Substitution
    ) -> tuple[_Item, bool] | None:
        """Every heaplet needs a potential partner opposite: a heaplet of
        compatible shape, or a call that can still emit one. Returns a
        partnerless heaplet and its side; such a state can never reach
        multiset equality."""
        for mine, other, on_left in ((left, right, True), (right, left, False)):
            partners: list[TerminalShape] = []
            for it in other:
                if isinstance(it.sub, Terminal):
                    pt = _apply_pts(sigma, it.sub.points)
                    partners.append(TerminalShape(token_shape(pt), pt))
                elif isinstance(it.sub, PredCall):
                    partners.extend(self.reach.get((it.sub.name, len(it.sub.args)), ()))
            for it in mine:
                if not isinstance(it.sub, Terminal):
                    continue
                pt = _apply_pts(sigma, it.sub.points)
                tok = token_shape(pt)
                if not any(self.compatible(pt, tok, shape) for shape in partners):
                    return it, on_left
        return None

    def fresh_suffix(self) -> int:
        self.counter += 1
        return self.counter

    # -- failure bookkeeping -------------------------------------------------

    def note_failure(
        self,
        left: list[_Item],
        right: list[_Item],
        sigma: Substitution,
        trace: tuple[TraceEvent, ...],
        focus: _Item | None,
        focus_on_left: bool,
    ) -> None:
        progress = len(trace)
        if self.best_fail is not None and self.best_fail[0] >= progress:
            return
        blamed = focus
        if blamed is None:
            blamed = next(iter(left), None) or next(iter(right), None)
            focus_on_left = bool(left)
        expected: frozenset[TerminalShape] = frozenset()
        if blamed is not None:
            expected = expected_shapes(self.tables, blamed.blame_sub, sigma)
        mine = Position(
            blamed.blame_index if blamed else None,
            blamed.blame_origin if blamed else None,
        )
        other_items = right if focus_on_left else left
        other_first = next((it for it in other_items if it.index is not None), None)
        if other_first is None:
            other_first = next(iter(other_items), None)
        other = Position(
            other_first.blame_index if other_first else None,
            other_first.blame_origin if other_first else None,
        )
        found = (
            render_subgoal(_apply_subgoal(sigma, other_first.sub))
            if other_first is not None
            else None
        )
        report = RefutationReport(
            left=mine if focus_on_left else other,
            right=other if focus_on_left else mine,
            expected=expected,
            found=found,
            exhausted_alternatives=self.failed_alternatives,
        )
        self.best_fail = (progress, report)

    # -- negation containment --------------------------------------------------

    def neg_blocked(
        self,
        body: tuple[Subgoal, ...],
        opposite: list[_Item],
        sigma: Substitution,
        depth: int,
    ) -> int:
        """Containment: can the negated body be matched into the opposite
        remainder (surplus allowed)? Bindings are discarded."""
        items = [
            _Item(sg, None, None, sg.origin, sg) for sg in body
        ]
        return self.contain(items, list(opposite), sigma, depth)

    def contain(
        self,
        need: list[_Item],
        pool: list[_Item],
        sigma: Substitution,
        depth: int,
        path: frozenset[str] = frozenset(),
    ) -> int:
        self.steps += 1
        if self.steps > self.cfg.max_steps:
            return _CUTOFF
        fp = "contain:" + _fingerprint(need, pool, sigma)
        if fp in path:
            return _FAIL
        path = path | {fp}
        # settle ready guards in the needed part
        for i, it in enumerate(need):
            if isinstance(it.sub, Relation) and guard_ready(it.sub, sigma):
                try:
                    out = evaluate_guard(it.sub, sigma)
                except GuardError as exc:
                    self.guard_error = exc
                    return _FAIL
                if out is None:
                    return _FAIL
                return self.contain(need[:i] + need[i + 1 :], pool, out, depth, path)
        focus_at = next(
            (i for i, it in enumerate(need) if isinstance(it.sub, (Terminal, PredCall))),
            None,
        )
        if focus_at is None:
            leftover = [it for it in need if isinstance(it.sub, Relation)]
            if leftover:
                self.guard_error = GuardError(
                    f"unresolved guard in negated fragment: "
                    f"{render_subgoal(leftover[0].sub)}"
                )
                return _FAIL
            # nested negation inside a negated fragment: ignore the leftovers,
            # the body has been fully matched
            return _SUCCESS
        focus = need[focus_at]
        rest = need[:focus_at] + need[focus_at + 1 :]
        saw_cutoff = False
        if isinstance(focus.sub, Terminal):
            for j, cand in enumerate(pool):
                if not isinstance(cand.sub, Terminal):
                    continue
                out = unify(focus.sub.points.location, cand.sub.points.location, sigma)
                if isinstance(out, UnifyFailure):
                    continue
                out = unify(focus.sub.points.value, cand.sub.points.value, out)
                if isinstance(out, UnifyFailure):
                    continue
                res = self.contain(rest, pool[:j] + pool[j + 1 :], out, depth, path)
                if res == _SUCCESS:
                    return res
                saw_cutoff |= res == _CUTOFF
            # or some opposite call produces it after unfolding
            fpat = PointsTo(
                apply(sigma, focus.sub.points.location),
                apply(sigma, focus.sub.points.value),
            )
            ftok = token_shape(fpat)
            for j, cand in enumerate(pool):
                if not isinstance(cand.sub, PredCall):
                    continue
                key = (cand.sub.name, len(cand.sub.args))
                if not any(
                    self.compatible(fpat, ftok, shape)
                    for shape in self.reach.get(key, ())
                ):
                    continue
                res = self._contain_expand(need, pool, j, sigma, depth, path)
                if res == _SUCCESS:
                    return res
                saw_cutoff |= res == _CUTOFF
            return _CUTOFF if saw_cutoff else _FAIL
        assert isinstance(focus.sub, PredCall)
        for j, cand in enumerate(pool):
            if not isinstance(cand.sub, PredCall):
                continue
            if cand.sub.name != focus.sub.name or len(cand.sub.args) != len(focus.sub.args):
                continue
            out: Substitution | UnifyFailure = sigma
            for a, b in zip(focus.sub.args, cand.sub.args):
                out = unify(a, b, out)  # type: ignore[arg-type]
                if isinstance(out, UnifyFailure):
                    break
            if isinstance(out, UnifyFailure):
                continue
            res = self.contain(rest, pool[:j] + pool[j + 1 :], out, depth, path)
            if res == _SUCCESS:
                return res
            saw_cutoff |= res == _CUTOFF
        # unfold the needed call itself
        if depth >= self.cfg.max_depth:
            return _CUTOFF
        for clause in reversed(self.env.clauses_for(focus.sub.name, len(focus.sub.args))):
            out = expand(
                focus.sub, clause, sigma, prefix=self.prefix, suffix=self.fresh_suffix()
            )
            if isinstance(out, UnifyFailure):
                continue
            body, out_sigma = out
            new_items = [
                _Item(sg, None, focus.blame_index, focus.blame_origin, focus.blame_sub)
                for sg in body
            ]
            res = self.contain(new_items + rest, pool, out_sigma, depth + 1, path)
            if res == _SUCCESS:
                return res
            saw_cutoff |= res == _CUTOFF
        return _CUTOFF if saw_cutoff else _FAIL

    def _contain_expand(
        self,
        need: list[_Item],
        pool: list[_Item],
        j: int,
        sigma: Substitution,
        depth: int,
        path: frozenset[str] = frozenset(),
    ) -> int:
        if depth >= self.cfg.max_depth:
            return _CUTOFF
        cand = pool[j]
        assert isinstance(cand.sub, PredCall)
        saw_cutoff = False
        for clause in reversed(self.env.clauses_for(cand.sub.name, len(cand.sub.args))):
            out = expand(
                cand.sub, clause, sigma, prefix=self.prefix, suffix=self.fresh_suffix()
            )
            if isinstance(out, UnifyFailure):
                continue
            body, out_sigma = out
            new_pool = (
                pool[:j]
                + [
                    _Item(sg, None, cand.blame_index, cand.blame_origin, cand.blame_sub)
                    for sg in body
                ]
                + pool[j + 1 :]
            )
            res = self.contain(need, new_pool, out_sigma, depth + 1, path)
            if res == _SUCCESS:
                return res
            saw_cutoff |= res == _CUTOFF
        return _CUTOFF if saw_cutoff else _FAIL

    # -- main recursion --------------------------------------------------------

    def run(
        self,
        left: list[_Item],
        right: list[_Item],
        sigma: Substitution,
        depth: int,
        trace: tuple[TraceEvent, ...],
        path: frozenset[str] = frozenset(),
        just_unfolded: bool = False,
    ) -> tuple[int, Substitution | None, tuple[TraceEvent, ...]]:
        self.steps += 1
        self.max_depth_seen = max(self.max_depth_seen, depth)
        if len(trace) > len(self.longest_trace):
            self.longest_trace = trace
        if self.steps > self.cfg.max_steps:
            return _CUTOFF, None, trace

        # 1. settle ready guards
        for side_name, items in (("left", left), ("right", right)):
            for i, it in enumerate(items):
                if isinstance(it.sub, Relation) and guard_ready(it.sub, sigma):
                    try:
                        out = evaluate_guard(it.sub, sigma)
                    except GuardError as exc:
                        self.guard_error = exc
                        self.note_failure(left, right, sigma, trace, it, side_name == "left")
                        return _FAIL, None, trace
                    if out is None:
                        self.note_failure(left, right, sigma, trace, it, side_name == "left")
                        return _FAIL, None, trace
                    rest = items[:i] + items[i + 1 :]
                    ev = trace + (GuardEvent(side_name, it.sub),)
                    if side_name == "left":
                        return self.run(rest, right, out, depth, ev, path, just_unfolded)
                    return self.run(left, rest, out, depth, ev, path, just_unfolded)

        # 2. discharge negated fragments against the opposite remainder
        for side_name, items, opposite in (("left", left, right), ("right", right, left)):
            for i, it in enumerate(items):
                if isinstance(it.sub, Negated):
                    res = self.neg_blocked(it.sub.body, opposite, sigma, depth)
                    if res == _CUTOFF:
                        return _CUTOFF, None, trace
                    if res == _SUCCESS:  # body matchable: branch blocked
                        self.note_failure(left, right, sigma, trace, it, side_name == "left")
                        return _FAIL, None, trace
                    rest = items[:i] + items[i + 1 :]
                    ev = trace + (NegCheckEvent(side_name, it.sub.body),)
                    if side_name == "left":
                        return self.run(rest, right, sigma, depth, ev, path, just_unfolded)
                    return self.run(left, rest, sigma, depth, ev, path, just_unfolded)

        # 3. accept or pick a focus
        def focus_of(items: list[_Item]) -> int | None:
            return next(
                (i for i, it in enumerate(items) if isinstance(it.sub, (Terminal, PredCall))),
                None,
            )

        lfocus = focus_of(left)
        rfocus = focus_of(right)
        if lfocus is None and rfocus is None:
            leftover = [it for it in left + right if isinstance(it.sub, Relation)]
            if leftover:
                self.guard_error = GuardError(
                    f"unresolved guard: {render_subgoal(leftover[0].sub)}"
                )
                self.note_failure(left, right, sigma, trace, leftover[0], True)
                return _FAIL, None, trace
            return _SUCCESS, sigma, trace

        # Fingerprints are only needed where unfolding may have looped or
        # recreated a known-dead state; shrinking moves cannot cycle.
        fp: str | None = None
        if just_unfolded:
            fp = _fingerprint(left, right, sigma)
            if fp in self.memo:
                return _FAIL, None, trace
            if fp in path:
                # the same state already lies on this branch: any solution
                # from here exists from the earlier occurrence too, so the
                # cycle contributes nothing new
                return _FAIL, None, trace
            path = path | {fp}
            partnerless = self.uncovered(left, right, sigma)
            if partnerless is not None:
                item, on_left = partnerless
                self.note_failure(left, right, sigma, trace, item, on_left)
                self.memo.add(fp)
                return _FAIL, None, trace

        focus_on_left = lfocus is not None
        focus_at = lfocus if focus_on_left else rfocus
        assert focus_at is not None
        mine = left if focus_on_left else right
        other = right if focus_on_left else left
        focus = mine[focus_at]
        side_name = "left" if focus_on_left else "right"
        other_name = "right" if focus_on_left else "left"

        saw_cutoff = False
        tried = 0

        def child(
            new_mine: list[_Item],
            new_other: list[_Item],
            new_sigma: Substitution,
            new_depth: int,
            ev: TraceEvent,
            unfolded: bool = False,
        ) -> tuple[int, Substitution | None, tuple[TraceEvent, ...]]:
            if focus_on_left:
                return self.run(
                    new_mine, new_other, new_sigma, new_depth, trace + (ev,), path, unfolded
                )
            return self.run(
                new_other, new_mine, new_sigma, new_depth, trace + (ev,), path, unfolded
            )

        mine_rest = mine[:focus_at] + mine[focus_at + 1 :]

        if isinstance(focus.sub, Terminal):
            fpat = PointsTo(
                apply(sigma, focus.sub.points.location),
                apply(sigma, focus.sub.points.value),
            )
            ftok = token_shape(fpat)
            # shift against each unifiable opposite heaplet
            for j, cand in enumerate(other):
                if self.steps > self.cfg.max_steps:
                    saw_cutoff = True
                    break
                if not isinstance(cand.sub, Terminal):
                    continue
                out = unify(focus.sub.points.location, cand.sub.points.location, sigma)
                if isinstance(out, UnifyFailure):
                    continue
                out = unify(focus.sub.points.value, cand.sub.points.value, out)
                if isinstance(out, UnifyFailure):
                    continue
                tried += 1
                lpt = PointsTo(
                    apply(out, focus.sub.points.location), apply(out, focus.sub.points.value)
                )
                rpt = PointsTo(
                    apply(out, cand.sub.points.location), apply(out, cand.sub.points.value)
                )
                ev = ShiftEvent(lpt, rpt) if focus_on_left else ShiftEvent(rpt, lpt)
                res, w, tr = child(mine_rest, other[:j] + other[j + 1 :], out, depth, ev)
                if res == _SUCCESS:
                    return res, w, tr
                saw_cutoff |= res == _CUTOFF
                self.failed_alternatives += 1
            # or unfold an opposite call that can still produce this token
            for j, cand in enumerate(other):
                if self.steps > self.cfg.max_steps:
                    saw_cutoff = True
                    break
                if not isinstance(cand.sub, PredCall):
                    continue
                key = (cand.sub.name, len(cand.sub.args))
                if not any(
                    self.compatible(fpat, ftok, shape)
                    for shape in self.reach.get(key, ())
                ):
                    continue
                if depth >= self.cfg.max_depth:
                    saw_cutoff = True
                    continue
                for clause in reversed(self.env.clauses_for(*key)):
                    if self.steps > self.cfg.max_steps:
                        saw_cutoff = True
                        break
                    out = expand(
                        cand.sub, clause, sigma, prefix=self.prefix, suffix=self.fresh_suffix()
                    )
                    if isinstance(out, UnifyFailure):
                        continue
                    tried += 1
                    body, out_sigma = out
                    unfolded = [
                        _Item(sg, None, cand.blame_index, cand.blame_origin, cand.blame_sub)
                        for sg in body
                    ]
                    new_other = other[:j] + unfolded + other[j + 1 :]
                    ev = UnfoldEvent(other_name, cand.sub, clause.origin, body)
                    res, w, tr = child(mine, new_other, out_sigma, depth + 1, ev, True)
                    if res == _SUCCESS:
                        return res, w, tr
                    saw_cutoff |= res == _CUTOFF
                    self.failed_alternatives += 1
        else:
            assert isinstance(focus.sub, PredCall)
            # folding shortcut: same predicate, unifiable arguments opposite
            for j, cand in enumerate(other):
                if self.steps > self.cfg.max_steps:
                    saw_cutoff = True
                    break
                if not isinstance(cand.sub, PredCall):
                    continue
                if (
                    cand.sub.name != focus.sub.name
                    or len(cand.sub.args) != len(focus.sub.args)
                ):
                    continue
                out: Substitution | UnifyFailure = sigma
                for a, b in zip(focus.sub.args, cand.sub.args):
                    out = unify(a, b, out)  # type: ignore[arg-type]
                    if isinstance(out, UnifyFailure):
                        break
                if isinstance(out, UnifyFailure):
                    continue
                tried += 1
                ev = (
                    PredPairEvent(focus.sub, cand.sub)
                    if focus_on_left
                    else PredPairEvent(cand.sub, focus.sub)
                )
                res, w, tr = child(mine_rest, other[:j] + other[j + 1 :], out, depth, ev)
                if res == _SUCCESS:
                    return res, w, tr
                saw_cutoff |= res == _CUTOFF
                self.failed_alternatives += 1
            # unfold the call itself, later-defined clauses first
            if depth >= self.cfg.max_depth:
                saw_cutoff = True
            else:
                for clause in reversed(
                    self.env.clauses_for(focus.sub.name, len(focus.sub.args))
                ):
                    if self.steps > self.cfg.max_steps:
                        saw_cutoff = True
                        break
                    out = expand(
                        focus.sub, clause, sigma, prefix=self.prefix, suffix=self.fresh_suffix()
                    )
                    if isinstance(out, UnifyFailure):
                        continue
                    tried += 1
                    body, out_sigma = out
                    unfolded = [
                        _Item(sg, None, focus.blame_index, focus.blame_origin, focus.blame_sub)
                        for sg in body
                    ]
                    new_mine = mine[:focus_at] + unfolded + mine[focus_at + 1 :]
                    ev = UnfoldEvent(side_name, focus.sub, clause.origin, body)
                    res, w, tr = child(new_mine, list(other), out_sigma, depth + 1, ev, True)
                    if res == _SUCCESS:
                        return res, w, tr
                    saw_cutoff |= res == _CUTOFF
                    self.failed_alternatives += 1

        if tried == 0:
            self.note_failure(left, right, sigma, trace, focus, focus_on_left)
        if saw_cutoff:
            return _CUTOFF, None, trace
        if fp is not None:
            self.memo.add(fp)
        return _FAIL, None, trace


def check(
    env: PredicateEnv,
    tables: FirstFollowTables,
    a1: AbstractSentence,
    a2: AbstractSentence,
    cfg: EntailConfig | None = None,
) -> Verdict:
    """Decide whether the two sentences denote the same heap shape."""
    cfg = cfg if cfg is not None else EntailConfig()

    def walk(sg: Subgoal):
        if isinstance(sg, PredCall):
            yield sg
        elif isinstance(sg, Negated):
            for inner in sg.body:
                yield from walk(inner)

    def all_calls():
        for s in (a1, a2):
            for item in s.items:
                yield from walk(item)
        for _, clause in env.all_clauses():
            for item in clause.body:
                yield from walk(item)

    check_defined(env, all_calls())

    limit = sys.getrecursionlimit()
    if limit < 50_000:
        sys.setrecursionlimit(50_000)

    taken = set(sentence_vars(a1)) | set(sentence_vars(a2))
    for _, clause in env.all_clauses():
        taken |= clause_vars(clause)

    search = _Search(env, tables, cfg, taken)

    left = _wrap_items(a1)
    right = _wrap_items(a2)
    if cfg.order_conjuncts:
        # Sort the worklists, not the sentences: reported indices must refer
        # to the items as the caller wrote them.
        left = _order_items(left)
        right = _order_items(right)
    status, sigma, trace = search.run(left, right, Substitution.empty(), 0, ())

    if status == _SUCCESS:
        assert sigma is not None
        visible = sentence_vars(a1) | sentence_vars(a2)
        witness = Substitution(
            {v: t for v, t in sigma.items() if v in visible}
        )
        final_trace = tuple(_apply_event(sigma, ev) for ev in trace)
        return Entailed(witness, final_trace, steps=search.steps, depth=search.max_depth_seen)
    if status == _FAIL:
        if search.guard_error is not None:
            raise search.guard_error
        if search.best_fail is not None:
            report = search.best_fail[1]
        else:
            report = RefutationReport(
                Position(None, None), Position(None, None), frozenset(), None, 0
            )
        return Refuted(report, steps=search.steps, depth=search.max_depth_seen)
    return DepthExceeded(
        search.longest_trace, steps=search.steps, depth=search.max_depth_seen
    )
