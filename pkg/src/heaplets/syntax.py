"""Lexer, recursive-descent parser and pretty-printer.

Accepted input is the Prolog subset for heap predicate rules (heads,
','/';' bodies, '!', 'fail', relations, lists, functor terms, '=..')
plus the bracketed sentence notation where ',' stands for the separating
conjunction and '~( ... )' introduces a negated fragment.

The parser is reentrant and returns no partial results: any lexical or
grammatical violation raises ParseError carrying diagnostics with line
and column coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from .model import (
    AbstractSentence,
    Atom,
    Clause,
    Compound,
    CutMarker,
    FailMarker,
    ListTerm,
    Negated,
    Number,
    Origin,
    OrMarker,
    PointsTo,
    PredCall,
    Program,
    RELATION_OPS,
    Relation,
    Subgoal,
    Term,
    Terminal,
    Variable,
    is_ground,
)


@dataclass(frozen=True)
class ParseDiagnostic:
    message: str
    line: int
    column: int
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class ParseError(Exception):
    def __init__(self, diagnostics: list[ParseDiagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_PUNCT = {
    "(": "LP",
    ")": "RP",
    "[": "LB",
    "]": "RB",
    "|": "PIPE",
    ",": "COMMA",
    ";": "SEMI",
    "!": "BANG",
    "~": "TILDE",
    ".": "DOT",
}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _is_name_char(c: str) -> bool:
    return c.isalnum() or c == "_"


def _lex(src: str, file: str | None) -> list[_Token]:
    tokens: list[_Token] = []
    i, line, col = 0, 1, 1
    n = len(src)

    def err(msg: str) -> ParseError:
        return ParseError([ParseDiagnostic(msg, line, col)])

    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if c == "%":
            while i < n and src[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c == ":" and src[i : i + 2] == ":-":
            tokens.append(_Token("NECK", ":-", start_line, start_col))
            i += 2
            col += 2
            continue
        if c == "=" and src[i : i + 3] == "=..":
            tokens.append(_Token("UNIV", "=..", start_line, start_col))
            i += 3
            col += 3
            continue
        if c == "\\" and src[i : i + 2] == "\\=":
            tokens.append(_Token("REL", "\\=", start_line, start_col))
            i += 2
            col += 2
            continue
        if c in "<>" and src[i : i + 2] in ("<=", ">="):
            tokens.append(_Token("REL", src[i : i + 2], start_line, start_col))
            i += 2
            col += 2
            continue
        if c in "=<>":
            tokens.append(_Token("REL", c, start_line, start_col))
            i += 1
            col += 1
            continue
        if c == "." and i + 1 < n and src[i + 1].isdigit():
            raise err("numbers need a leading digit")
        if c in _PUNCT:
            tokens.append(_Token(_PUNCT[c], c, start_line, start_col))
            i += 1
            col += 1
            continue
        if c.isdigit() or (c == "-" and i + 1 < n and src[i + 1].isdigit()):
            j = i + 1
            while j < n and src[j].isdigit():
                j += 1
            # A '.' is a decimal point only when a digit follows; otherwise
            # it terminates the clause.
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            text = src[i:j]
            tokens.append(_Token("NUMBER", text, start_line, start_col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and _is_name_char(src[j]):
                j += 1
            text = src[i:j]
            kind = "VAR" if (c.isupper() or c == "_") else "ATOM"
            tokens.append(_Token(kind, text, start_line, start_col))
            col += j - i
            i = j
            continue
        raise err(f"unexpected character {c!r}")
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str, file: str | None):
        self.file = file
        self.tokens = _lex(src, file)
        self.pos = 0
        # Fresh names for '_' must not collide with any variable written
        # anywhere in this input; the token stream is complete, so the
        # taken set is known up front.
        self._taken = {t.text for t in self.tokens if t.kind == "VAR" and t.text != "_"}
        self._anon = 0

    # -- plumbing -----------------------------------------------------------

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise self.error(f"expected {what}, found {tok.text or 'end of input'!r}", tok)
        return self.next()

    def error(self, msg: str, tok: _Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError([ParseDiagnostic(msg, tok.line, tok.column)])

    def origin(self, tok: _Token) -> Origin:
        return Origin(self.file, tok.line, tok.column)

    def fresh_anonymous(self) -> str:
        while True:
            self._anon += 1
            name = f"_A{self._anon}"
            if name not in self._taken:
                return name

    # -- terms --------------------------------------------------------------

    def parse_term(self) -> Term:
        tok = self.peek()
        if tok.kind == "ATOM":
            self.next()
            if self.peek().kind == "LP":
                return self._functor_args(tok.text)
            return Atom(tok.text)
        if tok.kind == "VAR":
            self.next()
            name = self.fresh_anonymous() if tok.text == "_" else tok.text
            return Variable(name)
        if tok.kind == "NUMBER":
            self.next()
            if "." in tok.text:
                return Number(Decimal(tok.text))
            return Number(int(tok.text))
        if tok.kind == "LB":
            return self._parse_list()
        raise self.error(f"expected a term, found {tok.text or 'end of input'!r}", tok)

    def _functor_args(self, functor: str) -> Term:
        self.expect("LP", "'('")
        if self.peek().kind == "RP":
            # Zero-argument functor terms collapse to the bare atom.
            self.next()
            return Atom(functor)
        args = [self.parse_term()]
        while self.peek().kind == "COMMA":
            self.next()
            args.append(self.parse_term())
        self.expect("RP", "')'")
        return Compound(functor, tuple(args))

    def _parse_list(self) -> Term:
        open_tok = self.expect("LB", "'['")
        if self.peek().kind == "RB":
            self.next()
            return ListTerm(())
        prefix = [self.parse_term()]
        while self.peek().kind == "COMMA":
            self.next()
            prefix.append(self.parse_term())
        tail: Term | None = None
        if self.peek().kind == "PIPE":
            self.next()
            tail_tok = self.peek()
            tail = self.parse_term()
            if not isinstance(tail, (Variable, ListTerm)):
                raise self.error("list tail must be a variable or a list", tail_tok)
        self.expect("RB", "']'")
        try:
            return ListTerm(tuple(prefix), tail)
        except ValueError as exc:
            raise self.error(str(exc), open_tok) from None

    # -- subgoals -----------------------------------------------------------

    def parse_subgoal(self) -> Subgoal:
        tok = self.peek()
        org = self.origin(tok)
        if tok.kind == "BANG":
            self.next()
            return CutMarker(origin=org)
        if tok.kind == "ATOM" and tok.text == "fail" and self.peek(1).kind != "LP":
            self.next()
            return FailMarker(origin=org)
        if tok.kind == "TILDE":
            self.next()
            self.expect("LP", "'(' after '~'")
            body = [self.parse_subgoal()]
            while self.peek().kind == "COMMA":
                self.next()
                body.append(self.parse_subgoal())
            self.expect("RP", "')'")
            return Negated(tuple(body), origin=org)
        if tok.kind == "ATOM" and self.peek(1).kind == "LP":
            name = self.next().text
            term = self._functor_args(name)
            if self.peek().kind in ("REL", "UNIV"):
                return self._finish_relation(term, org)
            if isinstance(term, Atom):
                return PredCall(term.name, (), origin=org)
            assert isinstance(term, Compound)
            if term.functor == "pointsto" and len(term.args) == 2:
                try:
                    pt = PointsTo(term.args[0], term.args[1])
                except ValueError as exc:
                    raise self.error(str(exc), tok) from None
                return Terminal(pt, origin=org)
            return PredCall(term.functor, term.args, origin=org)
        if tok.kind == "ATOM" and self.peek(1).kind not in ("REL", "UNIV"):
            # Bare atom subgoal: a call of a zero-argument predicate.
            self.next()
            return PredCall(tok.text, (), origin=org)
        term = self.parse_term()
        if self.peek().kind in ("REL", "UNIV"):
            return self._finish_relation(term, org)
        raise self.error("expected a subgoal", tok)

    def _finish_relation(self, lhs: Term, org: Origin) -> Subgoal:
        op_tok = self.next()
        rhs = self.parse_term()
        if op_tok.kind == "UNIV":
            # 'Term =.. List' is a two-argument call of the '=..' builtin.
            return PredCall("=..", (lhs, rhs), origin=org)
        return Relation(lhs, op_tok.text, rhs, origin=org)

    # -- clauses and programs ------------------------------------------------

    def parse_clause(self) -> Clause:
        head_tok = self.expect("ATOM", "a predicate name")
        org = self.origin(head_tok)
        head_args: tuple[Term, ...] = ()
        if self.peek().kind == "LP":
            term = self._functor_args(head_tok.text)
            head_args = term.args if isinstance(term, Compound) else ()
        body: list[Subgoal] = []
        if self.peek().kind == "NECK":
            self.next()
            body.append(self.parse_subgoal())
            while self.peek().kind in ("COMMA", "SEMI"):
                sep = self.next()
                if sep.kind == "SEMI":
                    body.append(OrMarker(origin=self.origin(sep)))
                body.append(self.parse_subgoal())
        self.expect("DOT", "'.'")
        return Clause(head_tok.text, head_args, tuple(body), origin=org)

    def parse_program(self) -> Program:
        clauses: list[Clause] = []
        while self.peek().kind != "EOF":
            clauses.append(self.parse_clause())
        return Program(tuple(clauses))

    # -- sentences ------------------------------------------------------------

    def parse_sentence(self) -> AbstractSentence:
        self.expect("LB", "'['")
        items: list[Subgoal] = []
        if self.peek().kind != "RB":
            items.append(self._sentence_item())
            while self.peek().kind == "COMMA":
                self.next()
                items.append(self._sentence_item())
        self.expect("RB", "']'")
        self._check_duplicate_locations(items)
        return AbstractSentence(tuple(items))

    def _sentence_item(self) -> Subgoal:
        tok = self.peek()
        item = self.parse_subgoal()
        if isinstance(item, CutMarker):
            raise self.error("'!' is not allowed in a sentence", tok)
        if isinstance(item, FailMarker):
            raise self.error("'fail' is not allowed in a sentence", tok)
        return item

    def _check_duplicate_locations(self, items: list[Subgoal]) -> None:
        seen: dict[Term, Origin | None] = {}
        for item in items:
            if not isinstance(item, Terminal) or not is_ground(item.points.location):
                continue
            loc = item.points.location
            if loc in seen:
                first = seen[loc]
                diags = []
                for org in (first, item.origin):
                    if org is not None:
                        diags.append(
                            ParseDiagnostic(
                                f"duplicate ground location {render_term(loc)}",
                                org.line,
                                org.column,
                            )
                        )
                raise ParseError(diags)
            seen[loc] = item.origin

    def expect_eof(self) -> None:
        tok = self.peek()
        if tok.kind != "EOF":
            raise self.error(f"unexpected trailing input {tok.text!r}", tok)


def parse_program(src: str, file: str | None = None) -> Program:
    parser = _Parser(src, file)
    program = parser.parse_program()
    return program


def parse_sentence(src: str, file: str | None = None) -> AbstractSentence:
    parser = _Parser(src, file)
    sentence = parser.parse_sentence()
    parser.expect_eof()
    return sentence


def parse_term_text(src: str, file: str | None = None) -> Term:
    """Parse a single term from text (used by the CLI and grammar reader)."""
    parser = _Parser(src, file)
    term = parser.parse_term()
    parser.expect_eof()
    return term


def parse_terms_csv(src: str, file: str | None = None) -> tuple[Term, ...]:
    """Parse a comma-separated list of terms; empty input means no terms."""
    parser = _Parser(src, file)
    if parser.peek().kind == "EOF":
        return ()
    terms = [parser.parse_term()]
    while parser.peek().kind == "COMMA":
        parser.next()
        terms.append(parser.parse_term())
    parser.expect_eof()
    return tuple(terms)


# ---------------------------------------------------------------------------
# Renderer
# ---------------------------------------------------------------------------

def render_term(t: Term) -> str:
    if isinstance(t, Variable):
        return t.name
    if isinstance(t, Atom):
        return t.name
    if isinstance(t, Number):
        return str(t.value)
    if isinstance(t, Compound):
        return f"{t.functor}({','.join(render_term(a) for a in t.args)})"
    if isinstance(t, ListTerm):
        inner = ",".join(render_term(a) for a in t.prefix)
        if t.tail is not None:
            inner += f"|{render_term(t.tail)}"
        return f"[{inner}]"
    raise TypeError(f"not a term: {t!r}")


def render_subgoal(s: Subgoal) -> str:
    if isinstance(s, Terminal):
        return f"pointsto({render_term(s.points.location)},{render_term(s.points.value)})"
    if isinstance(s, PredCall):
        if s.name == "=.." and len(s.args) == 2:
            return f"{render_term(s.args[0])} =.. {render_term(s.args[1])}"
        if not s.args:
            return s.name
        return f"{s.name}({','.join(render_term(a) for a in s.args)})"
    if isinstance(s, Relation):
        return f"{render_term(s.lhs)} {s.op} {render_term(s.rhs)}"
    if isinstance(s, Negated):
        return f"~({','.join(render_subgoal(i) for i in s.body)})"
    if isinstance(s, CutMarker):
        return "!"
    if isinstance(s, FailMarker):
        return "fail"
    raise TypeError(f"cannot render {s!r} here")


def _render_body(body: tuple[Subgoal, ...]) -> str:
    parts: list[str] = []
    for item in body:
        if isinstance(item, OrMarker):
            parts.append(";")
        else:
            if parts and parts[-1] != ";":
                parts.append(",")
            parts.append(render_subgoal(item))
    out = ""
    for p in parts:
        if p in (",", ";"):
            out += p + " "
        else:
            out += p
    return out


def render_clause(c: Clause) -> str:
    head = c.head_name
    if c.head_args:
        head += f"({','.join(render_term(a) for a in c.head_args)})"
    if c.is_fact:
        return f"{head}."
    return f"{head} :- {_render_body(c.body)}."


def render_program(p: Program) -> str:
    if not p.clauses:
        return ""
    return "\n".join(render_clause(c) for c in p.clauses) + "\n"


def render_sentence(s: AbstractSentence) -> str:
    return f"[{', '.join(render_subgoal(i) for i in s.items)}]"
