"""Command-line front door.

Pipeline: load predicate definitions, desugar and decanonise them, build
the environment, translate to an attributed grammar, run the analyses,
then check sentences, emit the grammar, report partitions or mangle
tokens. Exit codes for `check`: 0 entailed, 1 refuted, 2 depth exceeded,
3 usage or parse errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .entail import (
    DepthExceeded,
    Entailed,
    EntailConfig,
    EntailError,
    Refuted,
    Verdict,
    check,
)
from .grammar import (
    AttributedGrammar,
    FirstFollowTables,
    HEADER,
    analyze,
    emit,
    read,
    translate,
)
from .model import AbstractSentence, PointsTo, Program
from .normalize import (
    MangleError,
    NormalizeError,
    decanonise_heads,
    demangle,
    desugar,
    mangle,
    merge_programs,
)
from .oracle import OracleError, oracle_equal
from .partition import (
    PredicateEnv,
    UndefinedPredicateError,
    build_env,
    build_heap_graph,
    HeapGraphError,
    partitions,
)
from .syntax import (
    ParseError,
    parse_program,
    parse_sentence,
    parse_term_text,
    render_term,
)

EXIT_ENTAILED = 0
EXIT_REFUTED = 1
EXIT_DEPTH = 2
EXIT_ERROR = 3


class CliError(Exception):
    pass


def _load_program(path: Path) -> Program:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file())
        if not files:
            raise CliError(f"no definition files in {path}")
        named = [(p.stem, parse_program(p.read_text(encoding="utf-8"), str(p))) for p in files]
        return merge_programs(named)
    return parse_program(path.read_text(encoding="utf-8"), str(path))


def _prepare(defs: str) -> tuple[PredicateEnv, AttributedGrammar, FirstFollowTables]:
    program = _load_program(Path(defs))
    env = build_env(decanonise_heads(desugar(program)))
    grammar = translate(env)
    return env, grammar, analyze(grammar)


def _sentence_arg(text: str) -> list[str]:
    """An inline sentence, or @path for a file (one sentence, or one per
    line in --each-line mode)."""
    if text.startswith("@"):
        return [Path(text[1:]).read_text(encoding="utf-8")]
    return [text]


def _sentences_from(text: str, each_line: bool, file: str | None) -> list[AbstractSentence]:
    if not each_line:
        return [parse_sentence(text.strip(), file)]
    out = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        out.append(parse_sentence(stripped, file))
    return out


def _verdict_exit(v: Verdict) -> int:
    if isinstance(v, Entailed):
        return EXIT_ENTAILED
    if isinstance(v, Refuted):
        return EXIT_REFUTED
    return EXIT_DEPTH


def _verdict_report(v: Verdict, ms: float) -> dict:
    report: dict = {
        "verdict": {Entailed: "entailed", Refuted: "refuted", DepthExceeded: "depth-exceeded"}[
            type(v)
        ],
        "witness": [],
        "refutation": None,
        "steps": v.steps,
        "depth": v.depth,
        "ms": round(ms, 3),
    }
    if isinstance(v, Entailed):
        report["witness"] = [
            {"var": name, "term": render_term(term)}
            for name, term in sorted(v.witness.items())
        ]
    if isinstance(v, Refuted):
        r = v.report
        report["refutation"] = {
            "left_pos": {
                "index": r.left.index,
                "line": r.left.origin.line if r.left.origin else None,
                "column": r.left.origin.column if r.left.origin else None,
            },
            "right_pos": {
                "index": r.right.index,
                "line": r.right.origin.line if r.right.origin else None,
                "column": r.right.origin.column if r.right.origin else None,
            },
            "expected": sorted(s.token for s in r.expected),
            "found": r.found,
        }
    return report


def _print_text_report(report: dict, out) -> None:
    print(f"verdict: {report['verdict']}", file=out)
    for w in report["witness"]:
        print(f"witness: {w['var']} = {w['term']}", file=out)
    r = report["refutation"]
    if r is not None:
        for side in ("left_pos", "right_pos"):
            pos = r[side]
            where = (
                f"index {pos['index']}, line {pos['line']}, column {pos['column']}"
                if pos["index"] is not None
                else "end of sentence"
            )
            print(f"{side.replace('_pos', '')}: {where}", file=out)
        print(f"expected: {' '.join(r['expected']) or '<none>'}", file=out)
        print(f"found: {r['found'] or '<none>'}", file=out)
    print(f"steps: {report['steps']}", file=out)
    print(f"depth: {report['depth']}", file=out)
    print(f"ms: {report['ms']}", file=out)


def cmd_check(args) -> int:
    env, _, tables = _prepare(args.defs)
    cfg = EntailConfig(
        max_depth=args.max_depth,
        max_steps=args.max_steps,
        order_conjuncts=not args.no_order,
    )
    left_raw = _sentence_arg(args.left)[0]
    right_raw = _sentence_arg(args.right)[0]
    lefts = _sentences_from(left_raw, args.each_line, args.left.lstrip("@"))
    rights = _sentences_from(right_raw, args.each_line, args.right.lstrip("@"))
    if len(lefts) != len(rights):
        raise CliError(
            f"--each-line needs matching line counts ({len(lefts)} vs {len(rights)})"
        )
    reports = []
    worst = EXIT_ENTAILED
    for a1, a2 in zip(lefts, rights):
        t0 = time.monotonic()
        verdict = check(env, tables, a1, a2, cfg)
        ms = (time.monotonic() - t0) * 1000.0
        reports.append(_verdict_report(verdict, ms))
        worst = max(worst, _verdict_exit(verdict))
    if args.json:
        doc = reports if args.each_line else reports[0]
        print(json.dumps(doc, sort_keys=True))
    else:
        for i, report in enumerate(reports):
            if args.each_line:
                print(f"pair {i + 1}:")
            _print_text_report(report, sys.stdout)
    return worst


def _tables_comment(tables: FirstFollowTables) -> str:
    lines = []
    lines.append("# nullable: " + (" ".join(sorted(tables.nullable)) or "<none>"))
    lines.append(
        "# left-recursive: " + (" ".join(sorted(tables.left_recursive)) or "<none>")
    )
    keys = list(tables.nonterminals) + sorted(s.token for s in tables.terminals)

    def fmt(table: dict, key) -> str:
        entry = table.get(key, frozenset())
        return " ".join(sorted(s.token for s in entry)) or "<none>"

    shape_by_token = {s.token: s for s in tables.terminals}
    for key in keys:
        k = shape_by_token.get(key, key)
        lines.append(f"# first({key}): {fmt(tables.first, k)}")
    for key in keys:
        k = shape_by_token.get(key, key)
        lines.append(f"# first+({key}): {fmt(tables.first_ext, k)}")
    for key in keys:
        k = shape_by_token.get(key, key)
        lines.append(f"# follow({key}): {fmt(tables.follow, k)}")
    for key in keys:
        k = shape_by_token.get(key, key)
        lines.append(f"# follow+({key}): {fmt(tables.follow_ext, k)}")
    return "\n".join(lines) + "\n"


def cmd_grammar(args) -> int:
    path = Path(args.defs)
    text = path.read_text(encoding="utf-8") if path.is_file() else ""
    if text.splitlines() and text.splitlines()[0].strip() == HEADER:
        grammar = read(text)
    else:
        _, grammar, _ = _prepare(args.defs)
    sys.stdout.write(emit(grammar))
    if args.first_follow:
        sys.stdout.write(_tables_comment(analyze(grammar)))
    return 0


def cmd_partitions(args) -> int:
    env, _, _ = _prepare(args.defs)
    for i, part in enumerate(partitions(env), start=1):
        members = " ".join(f"{n}/{a}" for n, a in sorted(part.members))
        entries = " ".join(f"{n}/{a}" for n, a in sorted(part.entry_points))
        print(f"partition {i}: {members} (entry: {entries})")
    if args.sentence is not None:
        raw = _sentence_arg(args.sentence)[0]
        graph = build_heap_graph(parse_sentence(raw.strip()))
        print(f"heap graph: {'connected' if graph.connected else 'not connected'}")
        for frm, to in sorted(graph.edges, key=lambda e: (render_term(e[0]), render_term(e[1]))):
            print(f"edge: {render_term(frm)} -> {render_term(to)}")
        for a, b in sorted(graph.aliases, key=lambda e: (render_term(e[0]), render_term(e[1]))):
            print(f"alias: {render_term(a)} ~ {render_term(b)}")
    return 0


def cmd_mangle(args) -> int:
    if args.demangle is not None:
        pt = demangle(args.demangle)
        print(f"{render_term(pt.location)} ↦ {render_term(pt.value)}")
        return 0
    if args.loc is None or args.val is None:
        raise CliError("mangle needs LOC and VAL (or --demangle TOKEN)")
    pt = PointsTo(parse_term_text(args.loc), parse_term_text(args.val))
    print(mangle(pt).name)
    return 0


def cmd_oracle(args) -> int:
    env, _, _ = _prepare(args.defs)
    a1 = parse_sentence(_sentence_arg(args.left)[0].strip())
    a2 = parse_sentence(_sentence_arg(args.right)[0].strip())
    result = oracle_equal(env, a1, a2, args.oracle_depth)
    if result is True:
        print("true")
        return EXIT_ENTAILED
    if result is False:
        print("false")
        return EXIT_REFUTED
    print("inconclusive")
    return EXIT_DEPTH


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heaplets",
        description="Heap-sentence entailment by grammar recognition over points-to tokens",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="decide entailment of two sentences")
    p_check.add_argument("defs", help="predicate definition file or directory")
    p_check.add_argument("left", help="sentence text or @file")
    p_check.add_argument("right", help="sentence text or @file")
    p_check.add_argument("--json", action="store_true", help="machine-readable report")
    p_check.add_argument("--max-depth", type=int, default=EntailConfig.max_depth)
    p_check.add_argument("--max-steps", type=int, default=EntailConfig.max_steps)
    p_check.add_argument(
        "--no-order", action="store_true", help="keep conjuncts in written order"
    )
    p_check.add_argument(
        "--each-line", action="store_true", help="pair up sentences line by line"
    )
    p_check.set_defaults(func=cmd_check)

    p_grammar = sub.add_parser("grammar", help="emit the attributed grammar")
    p_grammar.add_argument("defs", help="definition file/directory or emitted grammar file")
    p_grammar.add_argument(
        "--first-follow",
        action="store_true",
        help="append nullable/first/follow/left-recursion tables as comments",
    )
    p_grammar.set_defaults(func=cmd_grammar)

    p_parts = sub.add_parser("partitions", help="report predicate partitions")
    p_parts.add_argument("defs")
    p_parts.add_argument(
        "--sentence", help="also report the heap graph of this ground sentence"
    )
    p_parts.set_defaults(func=cmd_partitions)

    p_mangle = sub.add_parser("mangle", help="mangle a heaplet into its token")
    p_mangle.add_argument("loc", nargs="?")
    p_mangle.add_argument("val", nargs="?")
    p_mangle.add_argument("--demangle", metavar="TOKEN")
    p_mangle.set_defaults(func=cmd_mangle)

    p_oracle = sub.add_parser(
        "oracle", help="brute-force derivation comparison (slow, test aid)"
    )
    p_oracle.add_argument("defs")
    p_oracle.add_argument("left")
    p_oracle.add_argument("right")
    p_oracle.add_argument("--oracle-depth", type=int, default=4)
    p_oracle.set_defaults(func=cmd_oracle)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ParseError,
        NormalizeError,
        UndefinedPredicateError,
        MangleError,
        EntailError,
        OracleError,
        HeapGraphError,
        CliError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
