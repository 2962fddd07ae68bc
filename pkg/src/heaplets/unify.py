"""First-order term unification with a mandatory occurs-check.

Substitutions are idempotent: no bound variable occurs in any binding's
range, so applying a substitution once is a fixpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterator, Mapping

from .model import Compound, ListTerm, Number, Term, Variable, free_vars


@dataclass(frozen=True)
class Substitution:
    bindings: Mapping[str, Term] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "bindings", MappingProxyType(dict(self.bindings)))

    @staticmethod
    def empty() -> "Substitution":
        return _EMPTY

    def get(self, name: str) -> Term | None:
        return self.bindings.get(name)

    def items(self) -> Iterator[tuple[str, Term]]:
        return iter(self.bindings.items())

    def __len__(self) -> int:
        return len(self.bindings)

    def __bool__(self) -> bool:
        return bool(self.bindings)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Substitution) and dict(self.bindings) == dict(other.bindings)

    def bind(self, name: str, term: Term) -> "Substitution":
        """Extend with name -> term, keeping the substitution idempotent.

        The caller must have applied self to term and run the occurs-check.
        """
        one = Substitution({name: term})
        merged = {v: apply(one, t) for v, t in self.bindings.items()}
        merged[name] = term
        return Substitution(_drop_trivial(merged))


_EMPTY = Substitution()


def _drop_trivial(bindings: dict[str, Term]) -> dict[str, Term]:
    return {
        v: t
        for v, t in bindings.items()
        if not (isinstance(t, Variable) and t.name == v)
    }


@dataclass(frozen=True)
class UnifyFailure:
    """Why two terms did not unify: a symbol clash or an occurs-check hit."""

    kind: str  # "clash" or "occurs"
    left: Term
    right: Term


def apply(s: Substitution, t: Term) -> Term:
    """Simultaneously replace bound variables in t."""
    if isinstance(t, Variable):
        bound = s.get(t.name)
        return t if bound is None else bound
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(apply(s, a) for a in t.args))
    if isinstance(t, ListTerm):
        prefix = tuple(apply(s, a) for a in t.prefix)
        tail = apply(s, t.tail) if t.tail is not None else None
        # ListTerm construction flattens a list that got substituted into
        # the tail position.
        return ListTerm(prefix, tail)
    return t


def compose(s1: Substitution, s2: Substitution) -> Substitution:
    """Composition: apply(compose(s1, s2), t) == apply(s1, apply(s2, t))."""
    merged = {v: apply(s1, t) for v, t in s2.items()}
    for v, t in s1.items():
        if v not in merged:
            merged[v] = t
    return Substitution(_drop_trivial(merged))


def unify(t1: Term, t2: Term, under: Substitution | None = None) -> Substitution | UnifyFailure:
    """Most general unifier of t1 and t2 extending `under`.

    Failures carry the mismatching sub-terms and whether the cause was a
    clash or the occurs-check; X = f(X) always fails (recursive terms are
    rejected on purpose).
    """
    sigma = under if under is not None else _EMPTY
    work: list[tuple[Term, Term]] = [(t1, t2)]
    while work:
        a, b = work.pop()
        try:
            a = apply(sigma, a)
            b = apply(sigma, b)
        except ValueError:
            # a binding put a non-list into a list tail: no solution in the
            # term sorts, report it as a clash
            return UnifyFailure("clash", a, b)
        if a == b:
            continue
        if isinstance(a, Variable):
            if a.name in free_vars(b):
                return UnifyFailure("occurs", a, b)
            try:
                sigma = sigma.bind(a.name, b)
            except ValueError:
                return UnifyFailure("clash", a, b)
            continue
        if isinstance(b, Variable):
            if b.name in free_vars(a):
                return UnifyFailure("occurs", b, a)
            try:
                sigma = sigma.bind(b.name, a)
            except ValueError:
                return UnifyFailure("clash", b, a)
            continue
        if isinstance(a, Compound) and isinstance(b, Compound):
            if a.functor != b.functor or len(a.args) != len(b.args):
                return UnifyFailure("clash", a, b)
            work.extend(zip(a.args, b.args))
            continue
        if isinstance(a, ListTerm) and isinstance(b, ListTerm):
            failure = _push_list_pairs(a, b, work)
            if failure is not None:
                return failure
            continue
        # Atom/Number mismatches and cross-kind pairs.
        return UnifyFailure("clash", a, b)
    return sigma


def _push_list_pairs(
    a: ListTerm, b: ListTerm, work: list[tuple[Term, Term]]
) -> UnifyFailure | None:
    n = min(len(a.prefix), len(b.prefix))
    work.extend(zip(a.prefix[:n], b.prefix[:n]))
    arest, brest = a.prefix[n:], b.prefix[n:]
    if not arest and not brest:
        ta = a.tail if a.tail is not None else ListTerm(())
        tb = b.tail if b.tail is not None else ListTerm(())
        if not (a.tail is None and b.tail is None):
            work.append((ta, tb))
        return None
    # One side has leftover prefix elements; the other must be an open tail.
    long_rest, long_tail, short = (arest, a.tail, b) if arest else (brest, b.tail, a)
    if short.tail is None:
        return UnifyFailure("clash", a, b)
    work.append((short.tail, ListTerm(tuple(long_rest), long_tail)))
    return None
