"""Catalog of worked examples, each re-derived from its inputs by the library.

Every fixture returns a :class:`FixtureResult`; ``passed`` compares what
the library computes with the recorded expectation. Fixtures marked
``disputed`` carry a reference expectation that the literal definitions do
not reproduce; their expectation is what the definitions give, and
``note`` says what the reference stated.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from typing import Any

from .checkers import classify, lin_counting, qqc_counting
from .compose import check_compositional, fmerge, split
from .objects import COUNTER, QUEUE, STACK, gen_spec, is_spec
from .proxy import ProxyError, ReplayOracle, derive_schedule, parse_service_schedule, run_proxy
from .search import classify_vs_type, find_witness
from .structures import Op, elim_tree_run, emitted_spec, parse_ops, properly_popped, run_schedule
from .trace import Label, OperationalTrace, SequentialTrace, from_tokens

__all__ = ["FIXTURES", "Fixture", "FixtureResult", "run_fixtures", "select"]


@dataclass
class FixtureResult:
    fixture: str
    criterion: str
    method: str
    verdict: str
    passed: bool
    witness: Any = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fixture": self.fixture,
            "criterion": self.criterion,
            "method": self.method,
            "verdict": self.verdict,
            "witness": self.witness,
            "passed": self.passed,
            **({"detail": self.detail} if self.detail else {}),
        }


@dataclass(frozen=True)
class Fixture:
    name: str
    tags: tuple[str, ...]
    run: Callable[[], FixtureResult]
    note: str = ""


FIXTURES: list[Fixture] = []


def _fixture(name: str, *tags: str, note: str = ""):
    def deco(fn: Callable[[str], FixtureResult]):
        FIXTURES.append(Fixture(name, (name, *tags), lambda: fn(name), note))
        return fn

    return deco


def _counter_spec(t: OperationalTrace) -> SequentialTrace:
    """Counter spec whose k-th operation is the one that returned k-1."""
    by_value = sorted(t.ops, key=lambda c: int(t[t.ops[c]].label.payload))
    return gen_spec(COUNTER, [t[c].label for c in by_value], by_value)


# -- three-inc quartet -----------------------------------------------------------------------------

EX1_SPEC = gen_spec(COUNTER, ["inc"] * 3)
EX1 = {
    "ex1-exec1": ("?c=inc() ?a=inc() !a:0 ?b=inc() !b:1 !c:2", "LIN"),
    "ex1-exec2": ("?c=inc() ?b=inc() !b:1 ?a=inc() !a:0 !c:2", "QQC"),
    "ex1-exec3": ("?a=inc() ?c=inc() !c:2 ?b=inc() !b:1 !a:0", "QC"),
    "ex1-exec4": ("?a=inc() ?c=inc() !c:2 !a:0 ?b=inc() !b:1", "NONE"),
}


def _ex1(name: str) -> FixtureResult:
    src, want = EX1[name]
    got, v = classify(from_tokens(src), EX1_SPEC)
    wit = None
    if want != "LIN":
        q = qqc_counting(from_tokens(src), EX1_SPEC)
        wit = None if q.witness is None else q.witness.to_dict()
    return FixtureResult(name, "classify", "counting", got, got == want, wit, {"expected": want})


for _n in EX1:
    _fixture(_n, "ex1", "counter")(_ex1)


# -- N-Counter tables ----------------------------------------------------------------------


def _table(name, ops, schedule, states, trace, n=2) -> FixtureResult:
    r = run_schedule("ncounter", {"N": n}, parse_ops(ops), list(schedule))
    ok = r.states() == states and str(r.trace) == trace
    return FixtureResult(name, "table", "simulate", "match" if ok else "mismatch", ok, None,
                         {"states": r.states(), "trace": str(r.trace)})


@_fixture("ex2-sequential", "ex2", "counter", "table")
def _ex2a(name):
    return _table(name, "inc,inc,inc", "aabbcc", ["1|0,1", "1|2,1", "0|2,1", "0|2,3", "1|2,3", "1|4,3"],
                  "?a=inc() !a:0 ?b=inc() !b:1 ?c=inc() !c:2")


@_fixture("ex2-concurrent", "ex2", "counter", "table")
def _ex2b(name):
    return _table(name, "inc,inc,inc", "cbbaac", ["1|0,1", "0|0,1", "0|0,3", "1|0,3", "1|2,3", "1|4,3"],
                  "?c=inc() ?b=inc() !b:1 ?a=inc() !a:0 !c:2")


EX3_TRACE = "?a=inc() ?c=inc() ?b=dec() ?d=dec() !d:-2 !a:-2 !c:1 !b:1"


@_fixture("ex3-table", "ex3", "counter", "table")
def _ex3a(name):
    return _table(name, "inc,dec,inc,dec", "acbddacb",
                  ["1|0,1", "0|0,1", "1|0,1", "0|0,1", "0|-2,1", "0|0,1", "0|0,3", "0|0,1"], EX3_TRACE)


@_fixture("ex3-no-witness", "ex3", "counter", "search")
def _ex3b(name):
    t = from_tokens(EX3_TRACE)
    found = {c: find_witness(t, COUNTER, c) is not None for c in ("LIN", "QQC", "QC")}
    ok = not any(found.values())
    return FixtureResult(name, "QC", "search", "none" if ok else "found", ok, None, {"found": found})


# -- QQC counter traces -------------------------------------------------------------------

QQC_COUNTER = {
    "qqc-open-reuse": ("?g=inc() ?b=inc() !b:1 ?a=inc() !a:0 ?d=inc() !d:3 ?c=inc() !c:2 ?f=inc() !f:5 ?e=inc() !e:4 !g:6", True),
    "qqc-far-off": ("?p=inc() ?b=inc() !b:1 ?q=inc() ?d=inc() !d:3 ?r=inc() ?f=inc() !f:5 ?s=inc() ?h=inc() !h:7 "
                    "?a=inc() !a:0 !p:2 !q:4 !r:6 !s:8", True),
    "qqc-overlap-1": ("?d=inc() ?b=inc() !b:1 ?e=inc() ?a=inc() !a:0 !d:3 ?c=inc() !c:2 !e:4", True),
    "qqc-overlap-2": ("?e=inc() ?b=inc() !b:1 ?d=inc() ?a=inc() !a:0 !d:3 ?c=inc() !c:2 !e:4", True),
    "qqc-count-reject": ("?e=inc() ?b=inc() !b:1 ?d=inc() !d:3 ?a=inc() !a:0 ?c=inc() !c:2 !e:4", False),
}


def _qqc_counter(name):
    src, want = QQC_COUNTER[name]
    t = from_tokens(src)
    spec = _counter_spec(t)
    v = qqc_counting(t, spec)
    lin = lin_counting(t, spec).accepted
    ok = v.accepted == want and not lin
    return FixtureResult(name, "QQC", "counting", v.verdict, ok,
                         None if v.witness is None else v.witness.to_dict(), {"lin": lin})


for _n in QQC_COUNTER:
    _fixture(_n, "qqc", "counter")(_qqc_counter)


# -- pop overtaking a push --------------------------------------------------------------------------------

EX4_OPS = "push:a,push:b,push:c,pop"


@_fixture("ex4", "ex4", "stack", note="classified WEAK vs the stack type, not NONE: the concurrent segment "
          "replays with free responses")
def _ex4(name):
    r = run_schedule("nstack", {"N": 2}, parse_ops(EX4_OPS), list("aabbcddc"))
    pp, pair = properly_popped(r)
    t = r.trace
    crit, _ = classify_vs_type(t, STACK)
    ok = str(t) == "?a=push(a) !a:() ?b=push(b) !b:() ?c=push(c) ?d=pop() !d:a !c:()" and not pp and crit == "WEAK"
    return FixtureResult(name, "classify", "search", crit, ok, None,
                         {"properly_popped": pp, "pair": pair, "trace": str(t)})


@_fixture("ex4-prefixed", "ex4", "stack")
def _ex4b(name):
    t = from_tokens("?x=push(x) !x ?y=push(y) !y ?a=push(a) !a ?b=push(b) !b ?c=push(c) ?d=pop() !d:a !c")
    found = find_witness(t, STACK, "QC", extension_budget=1)
    return FixtureResult(name, "QC", "search", "none" if found is None else "found", found is None)


# -- emitter tables ------------------------------------------------------------------------


def _ops(spec: str) -> tuple[Op, ...]:
    """``"c=push:c g=pop"`` -> ops with explicit ids."""
    out = []
    for item in spec.split():
        oid, _, rest = item.partition("=")
        method, _, arg = rest.partition(":")
        out.append(Op(oid, method, arg))
    return tuple(out)


def _emitted(r) -> list[str]:
    return [("+" if k == "push" else "-") + v for k, _, v in r.emitted]


@_fixture("stack-emit-sequential", "stack", "emitter")
def _st1(name):
    r = run_schedule("nstack", {"N": 2}, _ops("c=push:c b=push:b a=push:a g=pop h=pop i=pop"), list("cbbaacgghhii"))
    pp, _ = properly_popped(r)
    spec = emitted_spec(r)
    got = _emitted(r)
    ok = pp and got == ["+a", "+b", "+c", "-c", "-b", "-a"] and qqc_counting(r.trace, spec).accepted
    return FixtureResult(name, "QQC", "emitter", "accept" if ok else "reject", ok, None,
                         {"emitted": got, "trace": str(r.trace)})


@_fixture("stack-emit-mixed", "stack", "emitter")
def _st2(name):
    r = run_schedule("nstack", {"N": 2}, _ops("z=push:0 a=push:a g=pop b=push:b o=push:1 c=push:c"), list("zaaggbbocczo"))
    got = _emitted(r)
    ok = (got == ["+0", "+a", "-a", "+b", "+1", "+c"]
          and str(r.trace) == "?z=push(0) ?a=push(a) !a:() ?g=pop() !g:a ?b=push(b) !b:() ?o=push(1) ?c=push(c) !c:() !z:() !o:()"
          and qqc_counting(r.trace, emitted_spec(r)).accepted)
    return FixtureResult(name, "QQC", "emitter", "accept" if ok else "reject", ok, None,
                         {"emitted": got, "trace": str(r.trace)})


ELIM_OPS = "a=push:a b=push:b c=push:c d=push:d e=push:e p=pop q=pop r=pop s=pop t=pop"
ELIM_SCHEDULE = ["e", *"bbb", *"aaa", *"ddd", *"ccc", "e", "e", *(x for x in "pqrst" for _ in range(3))]


@_fixture("elim-depth2", "stack", "elim")
def _elim(name):
    r = elim_tree_run(2, _ops(ELIM_OPS), ELIM_SCHEDULE)
    spec = gen_spec(STACK, [Label("push", v) for v in "abcde"] + [Label("pop")] * 5, list("abcdepqrst"))
    pops = [r.responses[o] for o in "pqrst"]
    ok = pops == list("edcba") and qqc_counting(r.trace, spec).accepted and emitted_spec(r) == spec
    return FixtureResult(name, "QQC", "simulate", "accept" if ok else "reject", ok, None,
                         {"pops": pops, "trace": str(r.trace)})


# -- proxy ---------------------------------------------------------------------------------------

NONCAUSAL = "req:c=push(c) consume:c req:g=pop() consume:g deliver:g req:p=push(a) consume:p deliver:p deliver:c"
NONCAUSAL_SPEC = gen_spec(STACK, [Label("push", "a"), Label("pop"), Label("push", "c")], ["p", "g", "c"])


@_fixture("proxy-noncausal", "proxy", "stack")
def _px1(name):
    r = run_proxy(STACK, None, ReplayOracle(NONCAUSAL_SPEC), parse_service_schedule(NONCAUSAL))
    ok = str(r.trace) == "?c=push(c) ?g=pop() !g:a ?p=push(a) !p:() !c:()" and qqc_counting(r.trace, r.spec).accepted
    return FixtureResult(name, "QQC", "proxy", "accept" if ok else "reject", ok, None, {"trace": str(r.trace)})


@_fixture("proxy-guard-blocks", "proxy", "stack")
def _px2(name):
    try:
        run_proxy(STACK, None, ReplayOracle(NONCAUSAL_SPEC), parse_service_schedule(NONCAUSAL), causal_guard=True)
    except ProxyError as exc:
        return FixtureResult(name, "guard", "proxy", "stuck", True, None, {"error": str(exc)})
    return FixtureResult(name, "guard", "proxy", "ran", False)


GUARDED = ("req:c=push(c) consume:c req:a=push(a) consume:a deliver:a req:b=push(b) consume:b deliver:b "
           "req:g=pop() consume:g deliver:g deliver:c")


@_fixture("proxy-guarded-nonlin", "proxy", "stack",
          note="replaces a reference trace that no stack spec satisfies under the counting form")
def _px3(name):
    spec = gen_spec(STACK, [Label("push", "b"), Label("push", "a"), Label("pop"), Label("push", "c")])
    r = run_proxy(STACK, None, ReplayOracle(spec), parse_service_schedule(GUARDED), causal_guard=True)
    want = "?c=push(c) ?a=push(a) !a:() ?b=push(b) !b:() ?g=pop() !g:a !c:()"
    ok = str(r.trace) == want and qqc_counting(r.trace, r.spec).accepted and not lin_counting(r.trace, r.spec).accepted
    ok = ok and find_witness(r.trace, STACK, "LIN", 0) is None
    return FixtureResult(name, "QQC", "proxy", "accept" if ok else "reject", ok, None, {"trace": str(r.trace)})


@_fixture("proxy-replay-ex1", "proxy", "counter")
def _px4(name):
    alpha = from_tokens(EX1["ex1-exec2"][0])
    r = run_proxy(COUNTER, None, ReplayOracle(EX1_SPEC), derive_schedule(alpha))
    ok = r.trace == alpha and r.trace.arrangement == alpha.arrangement
    return FixtureResult(name, "QQC", "proxy", "reproduced" if ok else "differs", ok, None, {"trace": str(r.trace)})


# -- composition ----------------------------------------------------------------------------------

FM_B1 = "?1=inc() !1:0 ?2=inc() !2:1 ?3=inc() !3:2"
FM_B2 = "?8=inc() !8:0 ?5=inc() !5:1 ?6=inc() !6:2"
FM_ALPHA = {
    "fmerge-first": (
        "?6=inc() ?5=inc() !5:1 ?3=inc() ?8=inc() !8:0 ?2=inc() !2:1 ?1=inc() !1:0 !3:2 !6:2",
        {"8 5 6 1 2 3", "8 5 1 6 2 3", "8 5 1 2 6 3", "8 5 1 2 3 6"},
    ),
    # the reference list adds "8 5 1 6 2 3", which the recursive definition excludes
    "fmerge-second": (
        "?6=inc() ?5=inc() !5:1 ?3=inc() ?8=inc() ?2=inc() !2:1 !8:0 !6:2 ?1=inc() !1:0 !3:2",
        {"8 5 6 1 2 3", "8 5 1 2 6 3"},
    ),
}


def _fm(name):
    src, want = FM_ALPHA[name]
    alpha = from_tokens(src)
    b1, b2 = from_tokens(FM_B1, cls=SequentialTrace), from_tokens(FM_B2, cls=SequentialTrace)
    outs = list(fmerge(b1, b2, alpha))
    got = {" ".join(o.op_order) for o in outs}
    sound = all(qqc_counting(alpha, o).accepted for o in outs)
    w = check_compositional(alpha, split(alpha, {"1", "1!", "2", "2!", "3", "3!"}), b1, b2)
    ok = got == want and sound and w is not None
    return FixtureResult(name, "QQC", "fmerge", "accept" if ok else "reject", ok, " ".join(w.op_order),
                         {"interleavings": sorted(got)})


_fixture("fmerge-first", "fmerge", "compose")(_fm)
_fixture("fmerge-second", "fmerge", "compose", note="disputed: reference table lists three interleavings")(_fm)


# -- comparison examples ---------------------------------------------------------------------------

COMPARE = {
    "compare-stack-inside": ("?c=push(c) ?a=push(a) !a ?b=push(b) !b ?g=pop() !g:a !c", "QQC"),
    "compare-stack-after": ("?c=push(c) ?a=push(a) !a ?b=push(b) !b !c ?g=pop() !g:a", "QC"),
}


def _cmp(name):
    src, want = COMPARE[name]
    crit, w = classify_vs_type(from_tokens(src), STACK, extension_budget=1)
    return FixtureResult(name, "classify", "search", crit, crit == want, None if w is None else str(w))


for _n in COMPARE:
    _fixture(_n, "compare", "stack")(_cmp)


def queue_family(n: int) -> OperationalTrace:
    bs = " ".join(f"?b{k}=enq(b{k}) !b{k}" for k in range(1, n + 1))
    return from_tokens(f"?a=enq(a) {bs} ?c=enq(c) !c ?d=deq() !d:c !a")


def _queue(n):
    def run(name):
        w = find_witness(queue_family(n), QUEUE, "QQC", extension_budget=0)
        return FixtureResult(name, "QQC", "search", "found" if w else "none", w is not None,
                             None if w is None else str(w))

    return run


for _k in (1, 2, 3):
    _fixture(f"compare-queue-n{_k}", "compare", "queue")(_queue(_k))


# -- running --------------------------------------------------------------------------------------------


def select(tag: str | None = None) -> list[Fixture]:
    return [f for f in FIXTURES if tag is None or tag in f.tags]


def run_fixtures(fixtures: Iterable[Fixture]) -> list[FixtureResult]:
    return [f.run() for f in fixtures]
