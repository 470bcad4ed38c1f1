"""Trace model, consistency checkers, balancer simulators, proxy and composition tools."""

from .checkers import (
    CheckVerdict,
    Matching,
    check,
    classify,
    lin_counting,
    lin_cutdef,
    qc_counting,
    qc_cutdef,
    qqc_counting,
    qqc_cutdef,
    qqc_exists_form,
    weak_qc,
)
from .compose import check_compositional, cross_order_lemma, fmerge, split
from .objects import COUNTER, QUEUE, STACK, gen_spec, get_object, is_spec
from .search import classify_vs_type, find_witness, iter_witnesses
from .trace import (
    Event,
    Label,
    OperationalTrace,
    Pol,
    SequentialTrace,
    Trace,
    TraceError,
    from_tokens,
    parse_trp1,
)

__version__ = "0.1.0"

__all__ = [
    "COUNTER",
    "QUEUE",
    "STACK",
    "CheckVerdict",
    "Event",
    "Label",
    "Matching",
    "OperationalTrace",
    "Pol",
    "SequentialTrace",
    "Trace",
    "TraceError",
    "check",
    "check_compositional",
    "classify",
    "classify_vs_type",
    "cross_order_lemma",
    "find_witness",
    "fmerge",
    "from_tokens",
    "gen_spec",
    "get_object",
    "is_spec",
    "iter_witnesses",
    "lin_counting",
    "lin_cutdef",
    "parse_trp1",
    "qc_counting",
    "qc_cutdef",
    "qqc_counting",
    "qqc_cutdef",
    "qqc_exists_form",
    "split",
    "weak_qc",
]
