"""Immutable core data types: terms, heaplets, heap assertions, clauses, sentences.

Everything here is a frozen dataclass; values are safe to share between
threads and usable as dict keys (source coordinates are excluded from
equality and hashing so that reparsing rendered output yields equal values).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal


@dataclass(frozen=True)
class Origin:
    """Source coordinates of a construct; None file means synthetic."""

    file: str | None
    line: int
    column: int


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

class Term:
    """Base class for first-order terms."""

    __slots__ = ()


@dataclass(frozen=True)
class Variable(Term):
    name: str

    def __post_init__(self) -> None:
        if not self.name or not (self.name[0].isupper() or self.name[0] == "_"):
            raise ValueError(f"variable name must start uppercase or '_': {self.name!r}")


@dataclass(frozen=True)
class Atom(Term):
    name: str

    def __post_init__(self) -> None:
        if not self.name or not self.name[0].islower():
            raise ValueError(f"atom name must start lowercase: {self.name!r}")


@dataclass(frozen=True, eq=False)
class Number(Term):
    """Exact integer or exact decimal literal.

    Structural equality is textual (1.5 and 1.50 are distinct terms);
    ordering guards compare numerically.
    """

    value: int | Decimal

    def __post_init__(self) -> None:
        if not isinstance(self.value, (int, Decimal)) or isinstance(self.value, bool):
            raise ValueError(f"number must be int or Decimal: {self.value!r}")

    def _key(self) -> tuple[bool, str]:
        return (isinstance(self.value, Decimal), str(self.value))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Number) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash(("Number", self._key()))

    def __repr__(self) -> str:
        return f"Number({self.value})"


@dataclass(frozen=True)
class ListTerm(Term):
    """A list with an explicit prefix and an optional open tail.

    Construction normalizes nested list tails ([a|[b]] becomes [a,b]) so
    that structural equality coincides with list equality; afterwards the
    tail is either a Variable or absent.
    """

    prefix: tuple[Term, ...]
    tail: Term | None = None

    def __post_init__(self) -> None:
        prefix, tail = self.prefix, self.tail
        while isinstance(tail, ListTerm):
            prefix = prefix + tail.prefix
            tail = tail.tail
        if tail is not None and not isinstance(tail, Variable):
            raise ValueError(f"list tail must be a variable, a list, or absent: {tail!r}")
        if tail is not None and not prefix:
            raise ValueError("a list with an open tail needs at least one prefix element")
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "tail", tail)


@dataclass(frozen=True)
class Compound(Term):
    functor: str
    args: tuple[Term, ...]

    def __post_init__(self) -> None:
        if not self.args:
            raise ValueError("compound terms need at least one argument")


# ---------------------------------------------------------------------------
# Heaplets and heap assertions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointsTo:
    """One heaplet: a location holding a value.

    Locations are identifiers or field accessors (oa(obj, field) chains),
    never numbers.
    """

    location: Term
    value: Term

    def __post_init__(self) -> None:
        if isinstance(self.location, Number):
            raise ValueError(f"a location cannot be a number: {self.location!r}")


class HeapAssertion:
    """Base class for the in-memory heap assertion tree."""

    __slots__ = ()


@dataclass(frozen=True)
class Emp(HeapAssertion):
    pass


@dataclass(frozen=True)
class TrueH(HeapAssertion):
    pass


@dataclass(frozen=True)
class FalseH(HeapAssertion):
    pass


@dataclass(frozen=True)
class Points(HeapAssertion):
    points: PointsTo


@dataclass(frozen=True)
class Star(HeapAssertion):
    left: HeapAssertion
    right: HeapAssertion


@dataclass(frozen=True)
class And(HeapAssertion):
    left: HeapAssertion
    right: HeapAssertion


@dataclass(frozen=True)
class Or(HeapAssertion):
    left: HeapAssertion
    right: HeapAssertion


@dataclass(frozen=True)
class Not(HeapAssertion):
    body: HeapAssertion


@dataclass(frozen=True)
class Exists(HeapAssertion):
    var: str
    body: HeapAssertion


@dataclass(frozen=True)
class Call(HeapAssertion):
    name: str
    args: tuple[Term, ...]


# ---------------------------------------------------------------------------
# Subgoals, clauses, programs
# ---------------------------------------------------------------------------

RELATION_OPS = ("=", "\\=", "<", "<=", ">", ">=")


class Subgoal:
    """Base class for clause-body and sentence items."""

    __slots__ = ()


@dataclass(frozen=True)
class Terminal(Subgoal):
    points: PointsTo
    origin: Origin | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class PredCall(Subgoal):
    name: str
    args: tuple[Term, ...]
    origin: Origin | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Relation(Subgoal):
    lhs: Term
    op: str
    rhs: Term
    origin: Origin | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.op not in RELATION_OPS:
            raise ValueError(f"unknown relation operator: {self.op!r}")


@dataclass(frozen=True)
class Negated(Subgoal):
    body: tuple[Subgoal, ...]
    origin: Origin | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CutMarker(Subgoal):
    origin: Origin | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class FailMarker(Subgoal):
    origin: Origin | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class OrMarker(Subgoal):
    """Structural ';' separating body alternatives until desugaring."""

    origin: Origin | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Clause:
    head_name: str
    head_args: tuple[Term, ...]
    body: tuple[Subgoal, ...]
    origin: Origin | None = field(default=None, compare=False, repr=False)

    @property
    def is_fact(self) -> bool:
        return not self.body

    @property
    def arity(self) -> int:
        return len(self.head_args)


@dataclass(frozen=True)
class Program:
    """Clauses in definition order; later clauses of a name take precedence."""

    clauses: tuple[Clause, ...]


SENTENCE_ITEM_TYPES = (Terminal, PredCall, Relation, Negated)


@dataclass(frozen=True)
class AbstractSentence:
    """A star-conjunction of heaplets, predicate calls, relations and
    negated fragments.

    Two heaplets with equal ground locations are rejected: separation makes
    such a conjunction unsatisfiable.
    """

    items: tuple[Subgoal, ...]

    def __post_init__(self) -> None:
        seen: dict[Term, int] = {}
        for i, item in enumerate(self.items):
            if not isinstance(item, SENTENCE_ITEM_TYPES):
                raise ValueError(f"item {i} not allowed in a sentence: {item!r}")
            if isinstance(item, Terminal) and is_ground(item.points.location):
                loc = item.points.location
                if loc in seen:
                    raise ValueError(
                        f"duplicate ground location at items {seen[loc]} and {i}: {loc!r}"
                    )
                seen[loc] = i

    @property
    def terminals(self) -> tuple[Terminal, ...]:
        return tuple(i for i in self.items if isinstance(i, Terminal))


# ---------------------------------------------------------------------------
# Term traversals
# ---------------------------------------------------------------------------

def free_vars(t: Term) -> set[str]:
    """Names of the variables occurring in t."""
    out: set[str] = set()
    _collect_vars(t, out)
    return out


def _collect_vars(t: Term, out: set[str]) -> None:
    if isinstance(t, Variable):
        out.add(t.name)
    elif isinstance(t, Compound):
        for a in t.args:
            _collect_vars(a, out)
    elif isinstance(t, ListTerm):
        for a in t.prefix:
            _collect_vars(a, out)
        if t.tail is not None:
            _collect_vars(t.tail, out)


def variable_occurrences(t: Term) -> list[Variable]:
    """All variable occurrences in t, preorder, with repetitions."""
    out: list[Variable] = []

    def walk(s: Term) -> None:
        if isinstance(s, Variable):
            out.append(s)
        elif isinstance(s, Compound):
            for a in s.args:
                walk(a)
        elif isinstance(s, ListTerm):
            for a in s.prefix:
                walk(a)
            if s.tail is not None:
                walk(s.tail)

    walk(t)
    return out


def is_ground(t: Term) -> bool:
    if isinstance(t, Variable):
        return False
    if isinstance(t, Compound):
        return all(is_ground(a) for a in t.args)
    if isinstance(t, ListTerm):
        return all(is_ground(a) for a in t.prefix) and (
            t.tail is None or is_ground(t.tail)
        )
    return True


def subgoal_terms(s: Subgoal) -> list[Term]:
    """The immediate terms of a subgoal (recursing through negation)."""
    if isinstance(s, Terminal):
        return [s.points.location, s.points.value]
    if isinstance(s, PredCall):
        return list(s.args)
    if isinstance(s, Relation):
        return [s.lhs, s.rhs]
    if isinstance(s, Negated):
        out: list[Term] = []
        for inner in s.body:
            out.extend(subgoal_terms(inner))
        return out
    return []


def subgoal_vars(s: Subgoal) -> set[str]:
    out: set[str] = set()
    for t in subgoal_terms(s):
        out |= free_vars(t)
    return out


def clause_vars(c: Clause) -> set[str]:
    out: set[str] = set()
    for t in c.head_args:
        out |= free_vars(t)
    for s in c.body:
        out |= subgoal_vars(s)
    return out


def sentence_vars(s: AbstractSentence) -> set[str]:
    out: set[str] = set()
    for item in s.items:
        out |= subgoal_vars(item)
    return out


def alpha_equal(t1: Term, t2: Term) -> bool:
    """True iff a bijective variable renaming maps t1 onto t2."""
    fwd: dict[str, str] = {}
    bwd: dict[str, str] = {}
    return _alpha(t1, t2, fwd, bwd)


def _alpha(t1: Term, t2: Term, fwd: dict[str, str], bwd: dict[str, str]) -> bool:
    if isinstance(t1, Variable) and isinstance(t2, Variable):
        a, b = t1.name, t2.name
        if fwd.get(a, b) != b or bwd.get(b, a) != a:
            return False
        fwd[a] = b
        bwd[b] = a
        return True
    if isinstance(t1, Atom) and isinstance(t2, Atom):
        return t1.name == t2.name
    if isinstance(t1, Number) and isinstance(t2, Number):
        return t1 == t2
    if isinstance(t1, Compound) and isinstance(t2, Compound):
        if t1.functor != t2.functor or len(t1.args) != len(t2.args):
            return False
        return all(_alpha(a, b, fwd, bwd) for a, b in zip(t1.args, t2.args))
    if isinstance(t1, ListTerm) and isinstance(t2, ListTerm):
        if len(t1.prefix) != len(t2.prefix) or (t1.tail is None) != (t2.tail is None):
            return False
        if not all(_alpha(a, b, fwd, bwd) for a, b in zip(t1.prefix, t2.prefix)):
            return False
        if t1.tail is not None:
            return _alpha(t1.tail, t2.tail, fwd, bwd)
        return True
    return False
