"""Attributed-grammar transducers and first/follow analyses.

A predicate environment maps one-to-one onto an attributed context-free
grammar: one production per clause, heaplets as terminals, calls as
non-terminals, relations as transparent guards. Both directions are
implemented, together with nullable, first (pi), follow (sigma) and
left-recursion analyses and a deterministic text format.

The first/follow tables come in two flavours. `first`/`follow` follow the
lookahead definition this pipeline reports: the first set of a rule union
of its leading subgoals' first sets, computed as a least fixpoint in which
an empty-bodied predicate contributes nothing. `first_ext`/`follow_ext`
additionally skip across nullable non-terminals, which makes them sound
predictions for every reachable derivation; the recogniser and refutation
reports use these.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import (
    Clause,
    Negated,
    PointsTo,
    PredCall,
    Program,
    Relation,
    Subgoal,
    Term,
    Terminal,
    Variable,
    variable_occurrences,
)
from .normalize import MangleError, parse_token, token_shape
from .partition import PredicateEnv, build_env, partitions
from .syntax import (
    ParseDiagnostic,
    ParseError,
    parse_terms_csv,
    render_term,
)


# ---------------------------------------------------------------------------
# Symbols and grammars
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TerminalShape:
    """Terminal identity for the analyses: the token text with argument
    positions erased to ground value or wildcard."""

    token: str
    pattern: PointsTo = field(compare=False, repr=False)

    def __str__(self) -> str:
        return self.token


class GrammarSymbol:
    __slots__ = ()


@dataclass(frozen=True)
class TerminalSym(GrammarSymbol):
    points: PointsTo

    @property
    def shape(self) -> TerminalShape:
        return TerminalShape(token_shape(self.points), self.points)

    def slot_variables(self) -> tuple[Variable, ...]:
        return tuple(
            variable_occurrences(self.points.location)
            + variable_occurrences(self.points.value)
        )


@dataclass(frozen=True)
class NonTerminalSym(GrammarSymbol):
    name: str
    args: tuple[Term, ...]

    @property
    def key(self) -> str:
        return f"{self.name}/{len(self.args)}"


@dataclass(frozen=True)
class GuardSym(GrammarSymbol):
    lhs: Term
    op: str
    rhs: Term


@dataclass(frozen=True)
class NegGuardSym(GrammarSymbol):
    body: tuple[GrammarSymbol, ...]


@dataclass(frozen=True)
class Production:
    lhs: NonTerminalSym
    rhs: tuple[GrammarSymbol, ...]


@dataclass(frozen=True)
class AttributedGrammar:
    """Productions in environment order plus the start non-terminals (one
    per partition entry point; there is no single start symbol)."""

    productions: tuple[Production, ...]
    start_symbols: frozenset[str]


# ---------------------------------------------------------------------------
# Transducers
# ---------------------------------------------------------------------------

def _subgoal_symbol(sg: Subgoal) -> GrammarSymbol:
    if isinstance(sg, Terminal):
        return TerminalSym(sg.points)
    if isinstance(sg, PredCall):
        return NonTerminalSym(sg.name, sg.args)
    if isinstance(sg, Relation):
        return GuardSym(sg.lhs, sg.op, sg.rhs)
    if isinstance(sg, Negated):
        return NegGuardSym(tuple(_subgoal_symbol(i) for i in sg.body))
    raise ValueError(f"subgoal has no grammar reading: {sg!r}")


def _symbol_subgoal(sym: GrammarSymbol) -> Subgoal:
    if isinstance(sym, TerminalSym):
        return Terminal(sym.points)
    if isinstance(sym, NonTerminalSym):
        return PredCall(sym.name, sym.args)
    if isinstance(sym, GuardSym):
        return Relation(sym.lhs, sym.op, sym.rhs)
    if isinstance(sym, NegGuardSym):
        return Negated(tuple(_symbol_subgoal(i) for i in sym.body))
    raise TypeError(f"not a grammar symbol: {sym!r}")


def translate(env: PredicateEnv) -> AttributedGrammar:
    """One production per clause, in environment order; a fact becomes an
    epsilon production. Start symbols are the partition entry points."""
    entries: set[str] = set()
    for part in partitions(env):
        entries |= {f"{name}/{arity}" for name, arity in part.entry_points}
    productions = []
    for (name, arity), clause in env.all_clauses():
        lhs = NonTerminalSym(name, clause.head_args)
        rhs = tuple(_subgoal_symbol(sg) for sg in clause.body)
        productions.append(Production(lhs, rhs))
    return AttributedGrammar(tuple(productions), frozenset(entries))


def untranslate(g: AttributedGrammar) -> PredicateEnv:
    """Inverse transducer: every production back to a clause, grouped into
    an environment in production order."""
    clauses = []
    for prod in g.productions:
        body = tuple(_symbol_subgoal(sym) for sym in prod.rhs)
        clauses.append(Clause(prod.lhs.name, prod.lhs.args, body))
    return build_env(Program(tuple(clauses)))


# ---------------------------------------------------------------------------
# Analyses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FirstFollowTables:
    nullable: frozenset[str]
    first: dict
    follow: dict
    left_recursive: frozenset[str]
    first_ext: dict
    follow_ext: dict
    nonterminals: tuple[str, ...]
    terminals: tuple[TerminalShape, ...]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FirstFollowTables):
            return NotImplemented
        return (
            self.nullable == other.nullable
            and self.first == other.first
            and self.follow == other.follow
            and self.left_recursive == other.left_recursive
            and self.first_ext == other.first_ext
            and self.follow_ext == other.follow_ext
        )


def _significant(rhs: tuple[GrammarSymbol, ...]) -> list[GrammarSymbol]:
    # Guards and negated fragments are transparent: they consume no input.
    return [s for s in rhs if isinstance(s, (TerminalSym, NonTerminalSym))]


def _sym_key(sym: GrammarSymbol):
    if isinstance(sym, TerminalSym):
        return sym.shape
    if isinstance(sym, NonTerminalSym):
        return sym.key
    raise TypeError(f"no table key for {sym!r}")


def analyze(g: AttributedGrammar) -> FirstFollowTables:
    prods = [(p.lhs.key, _significant(p.rhs)) for p in g.productions]
    nts: list[str] = []
    shapes: dict[TerminalShape, None] = {}
    for p in g.productions:
        if p.lhs.key not in nts:
            nts.append(p.lhs.key)
    for _, rhs in prods:
        for sym in rhs:
            if isinstance(sym, TerminalSym):
                shapes.setdefault(sym.shape)
    terminals = tuple(shapes)

    # nullable
    nullable: set[str] = set()
    changed = True
    while changed:
        changed = False
        for lhs, rhs in prods:
            if lhs in nullable:
                continue
            if all(isinstance(s, NonTerminalSym) and s.key in nullable for s in rhs):
                nullable.add(lhs)
                changed = True

    # first, least fixpoint over the leading subgoal of each rule
    first: dict = {shape: frozenset([shape]) for shape in terminals}
    acc: dict[str, set[TerminalShape]] = {nt: set() for nt in nts}
    changed = True
    while changed:
        changed = False
        for lhs, rhs in prods:
            if not rhs:
                continue
            head = rhs[0]
            if isinstance(head, TerminalSym):
                add = {head.shape}
            else:
                add = acc.get(head.key, set())
            if not add <= acc[lhs]:
                acc[lhs] |= add
                changed = True
    first.update({nt: frozenset(v) for nt, v in acc.items()})

    # first_ext, skipping across nullable non-terminals
    acc_ext: dict[str, set[TerminalShape]] = {nt: set() for nt in nts}
    changed = True
    while changed:
        changed = False
        for lhs, rhs in prods:
            add: set[TerminalShape] = set()
            for sym in rhs:
                if isinstance(sym, TerminalSym):
                    add.add(sym.shape)
                    break
                add |= acc_ext.get(sym.key, set())
                if sym.key not in nullable:
                    break
            if not add <= acc_ext[lhs]:
                acc_ext[lhs] |= add
                changed = True
    first_ext: dict = {shape: frozenset([shape]) for shape in terminals}
    first_ext.update({nt: frozenset(v) for nt, v in acc_ext.items()})

    # follow: firsts of the successor subgoal, or the defining head's follow
    # at rightmost positions
    table_keys = list(nts) + list(terminals)
    for _, rhs in prods:
        for sym in rhs:
            if isinstance(sym, NonTerminalSym) and sym.key not in table_keys:
                table_keys.append(sym.key)
    fol: dict = {k: set() for k in table_keys}
    changed = True
    while changed:
        changed = False
        for lhs, rhs in prods:
            for i, sym in enumerate(rhs):
                key = _sym_key(sym)
                if i + 1 < len(rhs):
                    nxt = rhs[i + 1]
                    add = (
                        {nxt.shape}
                        if isinstance(nxt, TerminalSym)
                        else acc.get(nxt.key, set())
                    )
                else:
                    add = fol[lhs]
                if not add <= fol[key]:
                    fol[key] |= add
                    changed = True
    follow = {k: frozenset(v) for k, v in fol.items()}

    # follow_ext: successor firsts through nullable symbols, inheriting the
    # head's follow when the rest of the body can derive the empty heap
    fol_ext: dict = {k: set() for k in table_keys}
    changed = True
    while changed:
        changed = False
        for lhs, rhs in prods:
            for i, sym in enumerate(rhs):
                key = _sym_key(sym)
                add: set[TerminalShape] = set()
                reaches_end = True
                for nxt in rhs[i + 1 :]:
                    if isinstance(nxt, TerminalSym):
                        add.add(nxt.shape)
                        reaches_end = False
                        break
                    add |= acc_ext.get(nxt.key, set())
                    if nxt.key not in nullable:
                        reaches_end = False
                        break
                if reaches_end:
                    add |= fol_ext[lhs]
                if not add <= fol_ext[key]:
                    fol_ext[key] |= add
                    changed = True
    follow_ext = {k: frozenset(v) for k, v in fol_ext.items()}

    # left recursion: a non-terminal reachable from itself while scanning
    # the nullable prefix plus the first non-nullable symbol
    ldep: dict[str, set[str]] = {nt: set() for nt in nts}
    for lhs, rhs in prods:
        for sym in rhs:
            if isinstance(sym, TerminalSym):
                break
            ldep[lhs].add(sym.key)
            if sym.key not in nullable:
                break
    left_recursive = set()
    for nt in nts:
        seen: set[str] = set()
        stack = list(ldep.get(nt, ()))
        while stack:
            k = stack.pop()
            if k == nt:
                left_recursive.add(nt)
                break
            if k in seen:
                continue
            seen.add(k)
            stack.extend(ldep.get(k, ()))

    return FirstFollowTables(
        nullable=frozenset(nullable),
        first=first,
        follow=follow,
        left_recursive=frozenset(left_recursive),
        first_ext=first_ext,
        follow_ext=follow_ext,
        nonterminals=tuple(nts),
        terminals=terminals,
    )


# ---------------------------------------------------------------------------
# Emission format
# ---------------------------------------------------------------------------

HEADER = "heaplet-grammar v1"


def _emit_symbol(sym: GrammarSymbol) -> str:
    if isinstance(sym, TerminalSym):
        slots = sym.slot_variables()
        shape = token_shape(sym.points)
        if slots:
            return f"{shape}({','.join(v.name for v in slots)})"
        return shape
    if isinstance(sym, NonTerminalSym):
        return f"{sym.name}[{','.join(render_term(a) for a in sym.args)}]"
    if isinstance(sym, GuardSym):
        return f"{{ {render_term(sym.lhs)} {sym.op} {render_term(sym.rhs)} }}"
    if isinstance(sym, NegGuardSym):
        return f"~( {' '.join(_emit_symbol(i) for i in sym.body)} )"
    raise TypeError(f"not a grammar symbol: {sym!r}")


def emit(g: AttributedGrammar) -> str:
    lines = [HEADER]
    for prod in g.productions:
        rhs = " ".join(_emit_symbol(s) for s in prod.rhs) if prod.rhs else "eps"
        lhs = f"{prod.lhs.name}[{','.join(render_term(a) for a in prod.lhs.args)}]"
        lines.append(f"{lhs} -> {rhs} ;")
    return "\n".join(lines) + "\n"


class _LineScanner:
    def __init__(self, text: str, line_no: int):
        self.text = text
        self.line_no = line_no
        self.i = 0

    def error(self, msg: str) -> ParseError:
        return ParseError([ParseDiagnostic(msg, self.line_no, self.i + 1)])

    def skip_ws(self) -> None:
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def eof(self) -> bool:
        self.skip_ws()
        return self.i >= len(self.text)

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.i] if self.i < len(self.text) else ""

    def take_word(self) -> str:
        self.skip_ws()
        j = self.i
        while j < len(self.text) and (self.text[j].isalnum() or self.text[j] in "_.-"):
            j += 1
        if j == self.i:
            raise self.error("expected a symbol name")
        word = self.text[self.i : j]
        self.i = j
        return word

    def take_exact(self, s: str) -> None:
        self.skip_ws()
        if not self.text.startswith(s, self.i):
            raise self.error(f"expected {s!r}")
        self.i += len(s)

    def try_exact(self, s: str) -> bool:
        self.skip_ws()
        if self.text.startswith(s, self.i):
            self.i += len(s)
            return True
        return False

    def take_balanced(self, open_c: str, close_c: str) -> str:
        """Content between open_c and its matching close_c (cursor at open_c)."""
        self.take_exact(open_c)
        depth = 1
        j = self.i
        while j < len(self.text):
            c = self.text[j]
            if c == open_c:
                depth += 1
            elif c == close_c:
                depth -= 1
                if depth == 0:
                    content = self.text[self.i : j]
                    self.i = j + 1
                    return content
            j += 1
        raise self.error(f"unbalanced {open_c!r}")


def _read_symbol(sc: _LineScanner) -> GrammarSymbol:
    c = sc.peek()
    if c == "{":
        content = sc.take_balanced("{", "}")
        lhs, op, rhs = _parse_guard_text(content, sc)
        return GuardSym(lhs, op, rhs)
    if c == "~":
        sc.take_exact("~")
        sc.take_exact("(")
        body: list[GrammarSymbol] = []
        while sc.peek() != ")":
            if sc.eof():
                raise sc.error("unterminated '~('")
            body.append(_read_symbol(sc))
        sc.take_exact(")")
        return NegGuardSym(tuple(body))
    word = sc.take_word()
    if sc.peek() == "[":
        content = sc.take_balanced("[", "]")
        try:
            args = parse_terms_csv(content)
        except ParseError as exc:
            raise ParseError(
                [ParseDiagnostic(d.message, sc.line_no, sc.i + 1) for d in exc.diagnostics]
            ) from None
        return NonTerminalSym(word, args)
    if word.startswith("pt_"):
        slots: tuple[Term, ...] = ()
        if sc.peek() == "(":
            content = sc.take_balanced("(", ")")
            slots = parse_terms_csv(content)
        try:
            return TerminalSym(parse_token(word, slots))
        except MangleError as exc:
            raise sc.error(str(exc)) from None
    raise sc.error(f"unknown symbol {word!r} (non-terminals need an attribute list)")


def _parse_guard_text(content: str, sc: _LineScanner) -> tuple[Term, str, Term]:
    from .syntax import _Parser  # the guard body reuses the term grammar

    parser = _Parser(content, None)
    lhs = parser.parse_term()
    tok = parser.peek()
    if tok.kind != "REL":
        raise sc.error("expected a relation operator inside '{ }'")
    parser.next()
    rhs = parser.parse_term()
    parser.expect_eof()
    return lhs, tok.text, rhs


def read(text: str) -> AttributedGrammar:
    """Parse the emission format back into a grammar; start symbols are
    recomputed from the productions, so read(emit(g)) == g."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise ParseError([ParseDiagnostic(f"expected header {HEADER!r}", 1, 1)])
    productions: list[Production] = []
    for no, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        sc = _LineScanner(raw, no)
        name = sc.take_word()
        if sc.peek() != "[":
            raise sc.error("expected '[' after the production name")
        attrs = parse_terms_csv(sc.take_balanced("[", "]"))
        sc.take_exact("->")
        rhs: list[GrammarSymbol] = []
        if sc.try_exact("eps"):
            pass
        else:
            while sc.peek() != ";":
                if sc.eof():
                    raise sc.error("missing ';' at end of production")
                rhs.append(_read_symbol(sc))
        sc.take_exact(";")
        if not sc.eof():
            raise sc.error("trailing input after ';'")
        productions.append(Production(NonTerminalSym(name, attrs), tuple(rhs)))
    env = untranslate(AttributedGrammar(tuple(productions), frozenset()))
    return translate(env) if productions else AttributedGrammar((), frozenset())
