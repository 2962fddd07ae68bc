"""Desugaring and canonisation passes.

Covers splitting ';' bodies into clause alternatives, rejecting '!' and
'fail', lowering heap-assertion connectives to subgoal form, head
decanonisation, conjunct ordering, heaplet token mangling, and merging
definition files with clash-resolving name qualification.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Sequence

from .model import (
    AbstractSentence,
    And,
    Atom,
    Call,
    Clause,
    Compound,
    CutMarker,
    Emp,
    Exists,
    FailMarker,
    FalseH,
    HeapAssertion,
    ListTerm,
    Negated,
    Not,
    Number,
    Or,
    Origin,
    OrMarker,
    Points,
    PointsTo,
    PredCall,
    Program,
    Relation,
    Star,
    Subgoal,
    Term,
    Terminal,
    TrueH,
    Variable,
    clause_vars,
)
from .syntax import render_term


class NormalizeError(Exception):
    def __init__(self, message: str, origin: Origin | None = None):
        self.origin = origin
        if origin is not None:
            message = f"{origin.file or '<input>'}:{origin.line}:{origin.column}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# Fresh variable names
# ---------------------------------------------------------------------------

class FreshNames:
    """Monotone counter producing X1, X2, ... while skipping taken names."""

    def __init__(self, taken: Iterable[str], prefix: str = "X"):
        self._taken = set(taken)
        self._prefix = prefix
        self._n = 0

    def next(self) -> str:
        while True:
            self._n += 1
            name = f"{self._prefix}{self._n}"
            if name not in self._taken:
                self._taken.add(name)
                return name


# ---------------------------------------------------------------------------
# Desugaring ';', '!', 'fail', emp, true, false
# ---------------------------------------------------------------------------

def desugar(p: Program) -> Program:
    """Split ';' alternatives into separate clauses and reject what has no
    grammar reading: '!' (would need left-factoring), 'fail', and the
    partial-heap constants."""
    out: list[Clause] = []
    for clause in p.clauses:
        for alt in _split_alternatives(clause.body):
            body = tuple(_scrub_subgoals(alt))
            out.append(Clause(clause.head_name, clause.head_args, body, origin=clause.origin))
    return Program(tuple(out))


def _split_alternatives(body: tuple[Subgoal, ...]) -> list[list[Subgoal]]:
    alts: list[list[Subgoal]] = [[]]
    for item in body:
        if isinstance(item, OrMarker):
            alts.append([])
        else:
            alts[-1].append(item)
    return alts


def _scrub_subgoals(items: Iterable[Subgoal]) -> list[Subgoal]:
    out: list[Subgoal] = []
    for item in items:
        if isinstance(item, CutMarker):
            raise NormalizeError("cut requires left-factoring, unsupported", item.origin)
        if isinstance(item, FailMarker):
            raise NormalizeError("'fail' has no grammar reading", item.origin)
        if isinstance(item, OrMarker):
            raise NormalizeError("';' not allowed here", item.origin)
        if isinstance(item, PredCall) and not item.args and item.name in ("true", "false"):
            raise NormalizeError("partial heap constants out of scope", item.origin)
        if isinstance(item, PredCall) and not item.args and item.name == "emp":
            continue  # the empty heap is the unit of '*': dropping it is sound
        if isinstance(item, Negated):
            out.append(Negated(tuple(_scrub_subgoals(item.body)), origin=item.origin))
            continue
        out.append(item)
    return out


# ---------------------------------------------------------------------------
# Heap assertion lowering
# ---------------------------------------------------------------------------

def lower_assertion(
    assertion: HeapAssertion, taken_vars: Iterable[str] = ()
) -> list[tuple[Subgoal, ...]]:
    """Lower an assertion tree to a list of subgoal-sequence alternatives.

    Conjunctions become subgoal enumerations, disjunctions become separate
    alternatives, negation wraps each alternative of its operand, and each
    existential introduces a fresh variable next to the existing ones.
    """
    fresh = FreshNames(taken_vars)
    return _lower(assertion, fresh)


def _lower(a: HeapAssertion, fresh: FreshNames) -> list[tuple[Subgoal, ...]]:
    if isinstance(a, Emp):
        return [()]
    if isinstance(a, (TrueH, FalseH)):
        raise NormalizeError("partial heap constants out of scope")
    if isinstance(a, Points):
        return [(Terminal(a.points),)]
    if isinstance(a, (Star, And)):
        left = _lower(a.left, fresh)
        right = _lower(a.right, fresh)
        return [l + r for l in left for r in right]
    if isinstance(a, Or):
        return _lower(a.left, fresh) + _lower(a.right, fresh)
    if isinstance(a, Not):
        alts = _lower(a.body, fresh)
        return [tuple(Negated(alt) for alt in alts)]
    if isinstance(a, Exists):
        name = fresh.next()
        return _lower(_rename_assertion(a.body, a.var, name), fresh)
    if isinstance(a, Call):
        return [(PredCall(a.name, a.args),)]
    raise TypeError(f"not a heap assertion: {a!r}")


def _rename_assertion(a: HeapAssertion, old: str, new: str) -> HeapAssertion:
    if isinstance(a, (Emp, TrueH, FalseH)):
        return a
    if isinstance(a, Points):
        return Points(PointsTo(_rename_term(a.points.location, old, new),
                               _rename_term(a.points.value, old, new)))
    if isinstance(a, (Star, And, Or)):
        return type(a)(_rename_assertion(a.left, old, new), _rename_assertion(a.right, old, new))
    if isinstance(a, Not):
        return Not(_rename_assertion(a.body, old, new))
    if isinstance(a, Exists):
        if a.var == old:  # inner binder shadows
            return a
        return Exists(a.var, _rename_assertion(a.body, old, new))
    if isinstance(a, Call):
        return Call(a.name, tuple(_rename_term(t, old, new) for t in a.args))
    raise TypeError(f"not a heap assertion: {a!r}")


def _rename_term(t: Term, old: str, new: str) -> Term:
    if isinstance(t, Variable):
        return Variable(new) if t.name == old else t
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_rename_term(a, old, new) for a in t.args))
    if isinstance(t, ListTerm):
        tail = _rename_term(t.tail, old, new) if t.tail is not None else None
        return ListTerm(tuple(_rename_term(a, old, new) for a in t.prefix), tail)
    return t


# ---------------------------------------------------------------------------
# Head decanonisation
# ---------------------------------------------------------------------------

def decanonise_heads(p: Program) -> Program:
    """Rewrite every head so its arguments are distinct fresh variables,
    moving the original argument terms into leading '=' relations."""
    return Program(tuple(_decanonise_clause(c) for c in p.clauses))


def _decanonise_clause(c: Clause) -> Clause:
    args = c.head_args
    if all(isinstance(a, Variable) for a in args) and len({a.name for a in args if isinstance(a, Variable)}) == len(args):
        return c
    fresh = FreshNames(clause_vars(c))
    new_args: list[Term] = []
    bindings: list[Subgoal] = []
    for arg in args:
        v = Variable(fresh.next())
        new_args.append(v)
        bindings.append(Relation(v, "=", arg, origin=c.origin))
    return Clause(c.head_name, tuple(new_args), tuple(bindings) + c.body, origin=c.origin)


# ---------------------------------------------------------------------------
# Conjunct ordering
# ---------------------------------------------------------------------------

def order_conjuncts(s: AbstractSentence) -> AbstractSentence:
    """Sort heaplets by rendered location text; everything else keeps its
    relative order after the heaplets. Sound because '*' is commutative."""
    terminals = [i for i in s.items if isinstance(i, Terminal)]
    rest = [i for i in s.items if not isinstance(i, Terminal)]
    terminals.sort(key=lambda t: render_term(t.points.location))
    return AbstractSentence(tuple(terminals) + tuple(rest))


# ---------------------------------------------------------------------------
# Token mangling
# ---------------------------------------------------------------------------
#
# A heaplet loc -> val becomes the token  pt_<loc-part>_<val-part>.
# Each part is a sequence of length-prefixed segments; a multi-segment part
# folds left-associatively into an oa(...) field-accessor chain, so
# oa(p1,next) -> "2p14next" while a.b -> "1a1b" (as the paper-style scheme
# pt_3bar_3foo suggests, with 3 the component length).
#
# Segment forms:
#   atom     <len><name>
#   variable V<len><name>          (W is the argument-erased wildcard)
#   number   N<len>x<text>
#   compound F<len><functor><arity>f<segments...>   (non-accessor functors)
#   list     L<count>l<segments...><tail-segment or E>

class MangleError(ValueError):
    pass


@dataclass(frozen=True)
class MangledToken:
    name: str
    source: PointsTo


_WILDCARD = Variable("_W")  # stand-in while parsing shapes; never leaks


def _encode_segment(t: Term, erase_vars: bool) -> str:
    if isinstance(t, Atom):
        return f"{len(t.name)}{t.name}"
    if isinstance(t, Variable):
        if erase_vars:
            return "W"
        return f"V{len(t.name)}{t.name}"
    if isinstance(t, Number):
        text = str(t.value)
        return f"N{len(text)}x{text}"
    if isinstance(t, Compound):
        inner = "".join(_encode_segment(a, erase_vars) for a in t.args)
        return f"F{len(t.functor)}{t.functor}{len(t.args)}f{inner}"
    if isinstance(t, ListTerm):
        inner = "".join(_encode_segment(a, erase_vars) for a in t.prefix)
        tail = "E" if t.tail is None else _encode_segment(t.tail, erase_vars)
        return f"L{len(t.prefix)}l{inner}{tail}"
    raise MangleError(f"cannot mangle term: {t!r}")


def _accessor_chain(t: Term) -> list[Term]:
    # Left-nested oa/2 chains flatten segment-wise; anything else is a
    # single segment (a right-nested oa argument stays one F segment).
    if isinstance(t, Compound) and t.functor == "oa" and len(t.args) == 2:
        return _accessor_chain(t.args[0]) + [t.args[1]]
    return [t]


def _encode_part(t: Term, erase_vars: bool) -> str:
    return "".join(_encode_segment(c, erase_vars) for c in _accessor_chain(t))


def mangle(pt: PointsTo) -> MangledToken:
    name = f"pt_{_encode_part(pt.location, False)}_{_encode_part(pt.value, False)}"
    return MangledToken(name, pt)


def token_shape(pt: PointsTo) -> str:
    """Token text with every variable occurrence erased to the W wildcard."""
    return f"pt_{_encode_part(pt.location, True)}_{_encode_part(pt.value, True)}"


class _SegmentReader:
    def __init__(self, text: str, token: str):
        self.text = text
        self.token = token
        self.i = 0

    def fail(self, msg: str) -> MangleError:
        return MangleError(f"malformed token {self.token!r} at offset {self.i}: {msg}")

    def eof(self) -> bool:
        return self.i >= len(self.text)

    def peek(self) -> str:
        return self.text[self.i] if self.i < len(self.text) else ""

    def _read_int(self) -> int:
        j = self.i
        while j < len(self.text) and self.text[j].isdigit():
            j += 1
        if j == self.i:
            raise self.fail("expected a length")
        n = int(self.text[self.i : j])
        self.i = j
        return n

    def _take(self, n: int) -> str:
        if self.i + n > len(self.text):
            raise self.fail(f"expected {n} more characters")
        out = self.text[self.i : self.i + n]
        self.i += n
        return out

    def _expect(self, c: str) -> None:
        if self.peek() != c:
            raise self.fail(f"expected {c!r}")
        self.i += 1

    def read_segment(self) -> Term:
        c = self.peek()
        if c.isdigit():
            name = self._take_counted()
            try:
                return Atom(name)
            except ValueError as exc:
                raise self.fail(str(exc)) from None
        if c == "W":
            self.i += 1
            return _WILDCARD
        if c == "V":
            self.i += 1
            n = self._read_int()
            if n == 0:
                raise self.fail("variable segments need a non-empty name")
            name = self._take(n)
            try:
                return Variable(name)
            except ValueError as exc:
                raise self.fail(str(exc)) from None
        if c == "N":
            self.i += 1
            n = self._read_int()
            self._expect("x")
            text = self._take(n)
            try:
                return Number(Decimal(text) if "." in text else int(text))
            except (ValueError, ArithmeticError) as exc:
                raise self.fail(str(exc)) from None
        if c == "F":
            self.i += 1
            n = self._read_int()
            functor = self._take(n)
            arity = self._read_int()
            self._expect("f")
            args = tuple(self.read_segment() for _ in range(arity))
            try:
                return Compound(functor, args)
            except ValueError as exc:
                raise self.fail(str(exc)) from None
        if c == "L":
            self.i += 1
            count = self._read_int()
            self._expect("l")
            prefix = tuple(self.read_segment() for _ in range(count))
            if self.peek() == "E":
                self.i += 1
                tail: Term | None = None
            else:
                tail = self.read_segment()
                if not isinstance(tail, Variable):
                    raise self.fail("list tail segment must be a variable")
            try:
                return ListTerm(prefix, tail)
            except ValueError as exc:
                raise self.fail(str(exc)) from None
        raise self.fail(f"unexpected segment start {c!r}")

    def _take_counted(self) -> str:
        n = self._read_int()
        return self._take(n)

    def read_part(self) -> Term:
        segments = [self.read_segment()]
        while not self.eof() and self.peek() != "_":
            segments.append(self.read_segment())
        term = segments[0]
        for nxt in segments[1:]:
            term = Compound("oa", (term, nxt))
        return term


def _parse_token(token: str) -> PointsTo:
    if not token.startswith("pt_"):
        raise MangleError(f"malformed token {token!r}: missing pt_ prefix")
    reader = _SegmentReader(token[3:], token)
    if reader.eof():
        raise MangleError(f"malformed token {token!r}: missing location")
    location = reader.read_part()
    if reader.peek() != "_":
        raise MangleError(f"malformed token {token!r}: missing value separator")
    reader.i += 1
    value = reader.read_part()
    if not reader.eof():
        raise MangleError(f"malformed token {token!r}: trailing characters")
    try:
        return PointsTo(location, value)
    except ValueError as exc:
        raise MangleError(f"malformed token {token!r}: {exc}") from None


def _count_wildcards(t: Term) -> int:
    if t is _WILDCARD:
        return 1
    if isinstance(t, Compound):
        return sum(_count_wildcards(a) for a in t.args)
    if isinstance(t, ListTerm):
        n = sum(_count_wildcards(a) for a in t.prefix)
        if t.tail is not None:
            n += _count_wildcards(t.tail)
        return n
    return 0


def _fill_wildcards(t: Term, slots: list[Term]) -> Term:
    if t is _WILDCARD:
        if not slots:
            raise MangleError("not enough slot terms for the wildcards in the token")
        return slots.pop(0)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_fill_wildcards(a, slots) for a in t.args))
    if isinstance(t, ListTerm):
        prefix = tuple(_fill_wildcards(a, slots) for a in t.prefix)
        tail = _fill_wildcards(t.tail, slots) if t.tail is not None else None
        return ListTerm(prefix, tail)
    return t


def demangle(token: str) -> PointsTo:
    """Inverse of mangle; rejects malformed tokens and wildcard shapes."""
    pt = _parse_token(token)
    if _count_wildcards(pt.location) or _count_wildcards(pt.value):
        raise MangleError(f"token {token!r} has erased argument slots; not demanglable")
    return pt


def parse_token(token: str, slots: Sequence[Term] = ()) -> PointsTo:
    """Decode a token, filling W wildcards with `slots` in reading order."""
    pt = _parse_token(token)
    want = _count_wildcards(pt.location) + _count_wildcards(pt.value)
    if want != len(slots):
        raise MangleError(
            f"token {token!r} has {want} argument slots, {len(slots)} terms given"
        )
    pool = list(slots)
    location = _fill_wildcards(pt.location, pool)
    value = _fill_wildcards(pt.value, pool)
    return PointsTo(location, value)


# ---------------------------------------------------------------------------
# Merging definition files
# ---------------------------------------------------------------------------

def merge_programs(named: Sequence[tuple[str, Program]]) -> Program:
    """Concatenate programs; a predicate defined in several sources gets its
    name qualified with the source file stem on all definition-local uses."""
    defined: dict[tuple[str, int], set[str]] = {}
    for stem, prog in named:
        for c in prog.clauses:
            defined.setdefault((c.head_name, c.arity), set()).add(stem)
    clashed = {key for key, stems in defined.items() if len(stems) > 1}

    out: list[Clause] = []
    for stem, prog in named:
        local = {(c.head_name, c.arity) for c in prog.clauses}
        for c in prog.clauses:
            name = c.head_name
            if (name, c.arity) in clashed:
                name = f"{_atom_stem(stem)}_{c.head_name}"
            body = tuple(_qualify(sg, stem, local, clashed) for sg in c.body)
            out.append(Clause(name, c.head_args, body, origin=c.origin))
    return Program(tuple(out))


def _qualify(
    sg: Subgoal, stem: str, local: set[tuple[str, int]], clashed: set[tuple[str, int]]
) -> Subgoal:
    if isinstance(sg, PredCall):
        key = (sg.name, len(sg.args))
        if key in clashed:
            if key not in local:
                raise NormalizeError(
                    f"call of {sg.name}/{len(sg.args)} is ambiguous: defined in several sources",
                    sg.origin,
                )
            return PredCall(f"{_atom_stem(stem)}_{sg.name}", sg.args, origin=sg.origin)
        return sg
    if isinstance(sg, Negated):
        return Negated(tuple(_qualify(i, stem, local, clashed) for i in sg.body), origin=sg.origin)
    return sg


def _atom_stem(stem: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9_]", "_", stem)
    if not cleaned or not cleaned[0].islower():
        cleaned = "f" + cleaned
    return cleaned
