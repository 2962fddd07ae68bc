"""Entailment of star-conjoined points-to heap sentences by recognising
them against a grammar generated from Horn-clause heap predicates."""

from .entail import (
    DepthExceeded,
    Entailed,
    EntailConfig,
    Refuted,
    Verdict,
    check,
    evaluate_guard,
    expand,
    shift_terms,
)
from .grammar import AttributedGrammar, FirstFollowTables, analyze, emit, read, translate, untranslate
from .model import (
    AbstractSentence,
    Atom,
    Clause,
    Compound,
    ListTerm,
    Number,
    PointsTo,
    PredCall,
    Program,
    Relation,
    Term,
    Terminal,
    Variable,
    alpha_equal,
    free_vars,
)
from .normalize import (
    decanonise_heads,
    demangle,
    desugar,
    lower_assertion,
    mangle,
    merge_programs,
    order_conjuncts,
)
from .oracle import DerivationSet, derivations, oracle_equal
from .partition import (
    HeapGraph,
    Partition,
    PredicateEnv,
    build_env,
    build_heap_graph,
    partitions,
)
from .syntax import (
    ParseDiagnostic,
    ParseError,
    parse_program,
    parse_sentence,
    render_program,
    render_sentence,
)
from .unify import Substitution, UnifyFailure, apply, compose, unify

__version__ = "0.1.0"
