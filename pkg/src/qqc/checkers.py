"""Linearizability, quiescent consistency and QQC checkers.

Every checker compares an operational trace against a sequential
specification under a *matching* that identifies each operation of the
trace with an operation of the specification. Two families exist:

* counting checkers, a single scan per return (production path);
* cut-based checkers, which enumerate down-closed prefixes and serve as
  bounded oracles for the counting forms.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np

from . import _kernels
from .objects import COUNTER, QUEUE, STACK, IllegalInvocation, SequentialObject
from .trace import (
    BoundExceeded,
    OperationalTrace,
    Pol,
    SequentialTrace,
    Trace,
    TraceError,
    default_bound,
    extensions,
    prefix_sets,
)

__all__ = [
    "CRITERIA",
    "CheckVerdict",
    "Matching",
    "MatchingError",
    "Witness",
    "check",
    "classify",
    "lin_counting",
    "lin_cutdef",
    "match_names",
    "qc_counting",
    "qc_cutdef",
    "qqc_counting",
    "qqc_cutdef",
    "qqc_exists_form",
    "quiescent_closure",
    "weak_qc",
]

CRITERIA = ("LIN", "QQC", "QC", "WEAK", "NONE")
EXTENSION_LIMIT = 20_000


class MatchingError(TraceError):
    pass


@dataclass(frozen=True)
class Matching:
    """Trace call name -> specification call name."""

    pairs: tuple[tuple[str, str], ...]
    total: bool = False

    @property
    def map(self) -> dict[str, str]:
        return dict(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class Witness:
    op: str  # trace call name of the offending operation
    ret: str  # its return event
    token: str
    j: int  # 1-based specification index
    preceding_calls: tuple[str, ...]
    count: int
    prefix: tuple[str, ...] | None = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "op": self.op,
            "return": self.token,
            "j": self.j,
            "count": self.count,
            "preceding_calls": list(self.preceding_calls),
            "prefix": None if self.prefix is None else list(self.prefix),
            "detail": self.detail,
        }


@dataclass(frozen=True)
class CheckVerdict:
    accepted: bool
    criterion: str
    method: str
    witness: Witness | None = None
    matching: Matching | None = None
    spec: SequentialTrace | None = field(default=None, compare=False)

    def __bool__(self) -> bool:
        return self.accepted

    @property
    def verdict(self) -> str:
        return "accept" if self.accepted else "reject"

    def to_dict(self) -> dict[str, Any]:
        return {
            "criterion": self.criterion,
            "method": self.method,
            "verdict": self.verdict,
            "witness": None if self.witness is None else self.witness.to_dict(),
            "matching": None if self.matching is None else self.matching.map,
        }


# -- matchings ------------------------------------------------------------------------


def match_names(t: OperationalTrace, spec: SequentialTrace) -> Iterator[Matching]:
    """All label- and bracket-preserving injections of t's operations into spec's."""
    ops = [n for n in t.arrangement if t[n].pol is Pol.CALL]
    spec_ops = list(spec.op_order)
    if len(ops) > len(spec_ops):
        return
    total = len(ops) == len(spec_ops) and all(t.ops[c] is not None for c in ops)

    def sig(tr: Trace, call: str) -> tuple:
        r = tr.ops[call]
        return tr[call].label, None if r is None else tr[r].label

    spec_sig = {s: sig(spec, s) for s in spec_ops}
    cands = []
    for c in ops:
        lab, rlab = sig(t, c)
        cands.append([s for s in spec_ops if spec_sig[s][0] == lab and (rlab is None or spec_sig[s][1] == rlab)])
    # most constrained first keeps backtracking shallow
    order = sorted(range(len(ops)), key=lambda k: len(cands[k]))
    chosen: dict[str, str] = {}
    used: set[str] = set()

    def go(k: int) -> Iterator[Matching]:
        if k == len(order):
            yield Matching(tuple((c, chosen[c]) for c in ops), total)
            return
        idx = order[k]
        for s in cands[idx]:
            if s in used:
                continue
            chosen[ops[idx]] = s
            used.add(s)
            yield from go(k + 1)
            used.discard(s)
            del chosen[ops[idx]]

    yield from go(0)


def _check_matching(t: OperationalTrace, spec: SequentialTrace, m: Matching) -> dict[str, str]:
    mp = m.map
    if len(set(mp.values())) != len(mp):
        raise MatchingError("matching is not injective")
    for c in t.ops:
        if c not in mp or mp[c] not in spec.ops:
            raise MatchingError(f"operation {c} unmatched")
        s = mp[c]
        if t[c].label != spec[s].label:
            raise MatchingError(f"call label of {c} differs from {s}")
        r = t.ops[c]
        if r is not None and t[r].label != spec[spec.ops[s]].label:
            raise MatchingError(f"return label of {c} differs from {s}")
    return mp


def _matchings(t, spec, m) -> Iterator[Matching]:
    if m is not None:
        _check_matching(t, spec, m)
        yield m
    else:
        yield from match_names(t, spec)


def _token(t: Trace, ret: str) -> str:
    e = t[ret]
    return f"!{e.brak}:{e.label.payload}"


def _no_matching(criterion: str, method: str) -> CheckVerdict:
    w = Witness("", "", "", 0, (), 0, detail="no label-preserving matching")
    return CheckVerdict(False, criterion, method, w)


# -- counting ---------------------------------------------------------------------


def _encode(t: OperationalTrace, spec: SequentialTrace, mp: Mapping[str, str]):
    index = spec.index()
    arr = t.arrangement
    kind = np.fromiter((0 if t[n].pol is Pol.CALL else 1 for n in arr), dtype=np.int8, count=len(arr))
    rank = np.fromiter(
        (index[mp[n if t[n].pol is Pol.CALL else t[n].brak]] for n in arr), dtype=np.int64, count=len(arr)
    )
    return kind, rank


def _counting(t, spec, m, criterion: str, mode: int) -> CheckVerdict:
    first_reject = None
    for mt in _matchings(t, spec, m):
        mp = mt.map
        kind, rank = _encode(t, spec, mp)
        k = _kernels.first_violation(kind, rank, mode)
        if k < 0:
            return CheckVerdict(True, criterion, "counting", None, mt, spec)
        if first_reject is None:
            ret = t.arrangement[k]
            before = tuple(n for n in t.arrangement[:k] if t[n].pol is Pol.CALL)
            j = int(rank[k])
            if mode == _kernels.LIN:
                inv = {v: c for c, v in mp.items()}
                missing = [
                    s for s in spec.op_order[:j] if s not in inv or inv[s] not in before
                ]
                detail = f"spec calls {missing} do not precede it"
            else:
                detail = f"{len(before)} < {j} preceding calls"
            w = Witness(t[ret].brak, ret, _token(t, ret), j, before, len(before), None, detail)
            first_reject = CheckVerdict(False, criterion, "counting", w, mt, spec)
    return first_reject if first_reject is not None else _no_matching(criterion, "counting")


def lin_counting(t: OperationalTrace, spec: SequentialTrace, m: Matching | None = None) -> CheckVerdict:
    """Accept iff each return at spec index j follows all of the spec's first j calls."""
    return _counting(t, spec, m, "LIN", _kernels.LIN)


def qqc_counting(t: OperationalTrace, spec: SequentialTrace, m: Matching | None = None) -> CheckVerdict:
    """Accept iff each return at spec index j follows at least j calls."""
    return _counting(t, spec, m, "QQC", _kernels.QQC)


def _closure(t: Trace, names) -> set[str]:
    out = set()
    for n in names:
        out.add(n)
        out |= t[n].preds
    return out


def quiescent_closure(t: Trace, name: str) -> frozenset[str] | None:
    """Least quiescent down-closed prefix containing ``name``; ``None`` if none exists."""
    cur = _closure(t, [name])
    while True:
        pending = [c for c in cur if t[c].pol is Pol.CALL and t.ops[c] not in cur]
        if not pending:
            return frozenset(cur)
        rets = [t.ops[c] for c in pending]
        if any(r is None for r in rets):
            return None
        cur = _closure(t, list(cur) + rets)


def _favourable_extension(t: OperationalTrace, spec: SequentialTrace, mp: Mapping[str, str]) -> OperationalTrace:
    """t followed by the spec's missing calls (spec order) then every missing return."""
    inv = {s: c for c, s in mp.items()}
    items = t.items()
    fresh_calls = [s for s in spec.op_order if s not in inv]
    for s in fresh_calls:
        items.append((Pol.CALL, spec[s].label, f"+{s}", None))
    for s in spec.op_order:
        if s in inv:
            c = inv[s]
            if t.ops[c] is None:
                r = spec.ops[s]
                items.append((Pol.RET, spec[r].label, f"{c}!+", c))
        else:
            items.append((Pol.RET, spec[spec.ops[s]].label, f"+{s}!", f"+{s}"))
    return OperationalTrace.from_sequence(items, check=False)


def qc_counting(t: OperationalTrace, spec: SequentialTrace, m: Matching | None = None) -> CheckVerdict:
    """Preceding calls plus quiescently-concurrent later calls must reach j."""
    first_reject = None
    index = spec.index()
    for mt in _matchings(t, spec, m):
        mp = dict(mt.map)
        complete = len(mp) == len(spec.op_order) and None not in t.ops.values()
        ext = t if complete else _favourable_extension(t, spec, mp)
        for c in ext.ops:
            if c.startswith("+"):
                mp[c] = c[1:]
        bad = None
        for n in t.arrangement:
            if t[n].pol is not Pol.RET:
                continue
            j = index[mp[t[n].brak]]
            q = quiescent_closure(ext, n)
            region = ext.names if q is None else q
            calls = [c for c in region if ext[c].pol is Pol.CALL]
            if len(calls) < j:
                before = tuple(c for c in t.arrangement if t[c].pol is Pol.CALL and t.lt(c, n))
                concurrent = sorted(set(calls) - set(before))
                bad = Witness(
                    t[n].brak,
                    n,
                    _token(t, n),
                    j,
                    before,
                    len(calls),
                    None,
                    f"{len(before)} preceding + {len(concurrent)} quiescently concurrent {concurrent} < {j}",
                )
                break
        if bad is None:
            return CheckVerdict(True, "QC", "counting", None, mt, spec)
        if first_reject is None:
            first_reject = CheckVerdict(False, "QC", "counting", bad, mt, spec)
    return first_reject if first_reject is not None else _no_matching("QC", "counting")


# -- cut-based ---------------------------------------------------------------------


def _renamed(t: OperationalTrace, spec: SequentialTrace, mp: Mapping[str, str]) -> tuple[OperationalTrace, dict[str, str]]:
    rho = {}
    for c, s in mp.items():
        rho[c] = s
        r = t.ops[c]
        if r is not None:
            rho[r] = spec.ops[s]
    events = [e.renamed(rho) for e in t]
    return OperationalTrace(events, [rho[n] for n in t.arrangement], check=False), {v: k for k, v in rho.items()}


class _CutContext:
    """Per-extension data shared by the cut-based checkers."""

    def __init__(self, ext: OperationalTrace, spec: SequentialTrace):
        self.ext = ext
        self.spos = spec.position()
        self.apos = ext.position()
        self.calls = [n for n in ext.arrangement if ext[n].pol is Pol.CALL]
        self.rets = [n for n in ext.arrangement if ext[n].pol is Pol.RET]

    def spec_lt(self, a: str, b: str) -> bool:
        return self.spos[a] < self.spos[b]

    def open_in(self, pi: frozenset[str]) -> list[str]:
        return [c for c in self.calls if c in pi and self.ext.ops[c] not in pi]

    def lost_orders(self, pi: frozenset[str], r: str) -> list[str]:
        """Calls outside pi that follow r in the trace but not in the spec."""
        return [c for c in self.calls if c not in pi and self.ext.lt(r, c) and not self.spec_lt(r, c)]


def _cut_run(t, spec, m, criterion, per_extension, bound) -> CheckVerdict:
    limit = default_bound() if bound is None else bound
    if len(spec) > limit:
        raise BoundExceeded(f"{len(spec)} events exceed prefix bound {limit}")
    first_reject = None
    for mt in _matchings(t, spec, m):
        renamed, back = _renamed(t, spec, mt.map)
        bad = None
        for ext in extensions(renamed, spec, limit=EXTENSION_LIMIT):
            ctx = _CutContext(ext, spec)
            viol = per_extension(ctx, bound)
            if viol is None:
                return CheckVerdict(True, criterion, "cutdef", None, mt, spec)
            if bad is None:
                bad = viol
        if first_reject is None and bad is not None:
            first_reject = CheckVerdict(False, criterion, "cutdef", _cut_witness(t, spec, back, bad), mt, spec)
    return first_reject if first_reject is not None else _no_matching(criterion, "cutdef")


def _cut_witness(t, spec, back, bad) -> Witness:
    r, pi, offending, detail = bad
    op_spec = spec[r].brak
    j = spec.index()[op_spec]
    tr_ret = back.get(r)
    tr_op = back.get(op_spec, op_spec)
    pref = tuple(back.get(n, n) for n in sorted(pi, key=lambda n: _arr_key(t, back, n)))
    before = ()
    token = f"!{op_spec}:{spec[r].label.payload}"
    if tr_ret is not None:
        before = tuple(c for c in t.arrangement if t[c].pol is Pol.CALL and t.lt(c, tr_ret))
        token = _token(t, tr_ret)
    return Witness(tr_op, tr_ret or r, token, j, before, len(before), pref, f"{detail}: {[back.get(c, c) for c in offending]}")


def _arr_key(t, back, n):
    name = back.get(n)
    return (0, t.arrangement.index(name)) if name in t else (1, n)


def _leftmost(ctx: _CutContext, found: list) -> tuple | None:
    if not found:
        return None
    return min(found, key=lambda v: ctx.apos[v[0]])


def _lin_ext(ctx: _CutContext, bound) -> tuple | None:
    found = {}
    for pi in prefix_sets(ctx.ext, bound):
        for r in ctx.rets:
            if r in pi and r not in found:
                lost = ctx.lost_orders(pi, r)
                if lost:
                    found[r] = (r, pi, lost, "trace orders not kept by the spec")
    return _leftmost(ctx, list(found.values()))


def _qc_ext(ctx: _CutContext, bound) -> tuple | None:
    found = {}
    for pi in prefix_sets(ctx.ext, bound):
        if ctx.open_in(pi):
            continue
        for r in ctx.rets:
            if r in pi and r not in found:
                lost = ctx.lost_orders(pi, r)
                if lost:
                    found[r] = (r, pi, lost, "order across quiescent cut not kept by the spec")
    return _leftmost(ctx, list(found.values()))


def _qqc_ext(ctx: _CutContext, bound) -> tuple | None:
    found = {}
    for pi in prefix_sets(ctx.ext, bound):
        opened = ctx.open_in(pi)
        outside = [c for c in ctx.calls if c not in pi]
        for r in ctx.rets:
            if r not in pi or r in found:
                continue
            budget = sum(1 for o in opened if not ctx.spec_lt(o, r))
            ok = False
            for size in range(budget + 1):
                for excused in itertools.combinations(outside, size):
                    rest = [c for c in outside if c not in excused]
                    if all(ctx.spec_lt(r, c) for c in rest if ctx.ext.lt(r, c)):
                        ok = True
                        break
                if ok:
                    break
            if not ok:
                found[r] = (r, pi, ctx.lost_orders(pi, r), f"more lost orders than {budget} early open calls")
    return _leftmost(ctx, list(found.values()))


def _qqc_exists_ext(ctx: _CutContext, bound) -> tuple | None:
    found = []
    for pi in prefix_sets(ctx.ext, bound):
        rets = [r for r in ctx.rets if r in pi]
        opened = ctx.open_in(pi)
        early = [o for o in opened if not any(ctx.spec_lt(o, r) for r in rets)]
        needed: set[str] = set()
        for r in rets:
            needed.update(ctx.lost_orders(pi, r))
        if len(needed) > len(early):
            culprit = min(
                (r for r in rets if ctx.lost_orders(pi, r)), key=lambda r: ctx.apos[r]
            )
            found.append((culprit, pi, sorted(needed), f"one excuse set needs {len(needed)} > {len(early)} early open calls"))
    return _leftmost(ctx, found)


def lin_cutdef(t, spec, m: Matching | None = None, *, bound: int | None = None) -> CheckVerdict:
    return _cut_run(t, spec, m, "LIN", _lin_ext, bound)


def qc_cutdef(t, spec, m: Matching | None = None, *, bound: int | None = None) -> CheckVerdict:
    return _cut_run(t, spec, m, "QC", _qc_ext, bound)


def qqc_cutdef(t, spec, m: Matching | None = None, *, bound: int | None = None) -> CheckVerdict:
    return _cut_run(t, spec, m, "QQC", _qqc_ext, bound)


def qqc_exists_form(t, spec, m: Matching | None = None, *, bound: int | None = None) -> CheckVerdict:
    """Per prefix, a single excuse set must serve every return at once."""
    v = _cut_run(t, spec, m, "QQC", _qqc_exists_ext, bound)
    return CheckVerdict(v.accepted, v.criterion, "exists", v.witness, v.matching, v.spec)


# -- weak quiescent consistency -----------------------------------------------------------


def _segments(t: OperationalTrace) -> list[list[str]]:
    """Split the arrangement at points with no open call."""
    segs, cur, depth = [], [], 0
    for n in t.arrangement:
        cur.append(n)
        depth += 1 if t[n].pol is Pol.CALL else -1
        if depth == 0:
            segs.append(cur)
            cur = []
    if cur:
        segs.append(cur)
    return segs


def weak_qc(t: OperationalTrace, obj: SequentialObject) -> CheckVerdict:
    """Sequential single calls between quiescent points must replay on ``obj``.

    Operations inside a concurrent segment may take effect in any order
    and their responses are unconstrained; the object state is threaded
    through all segments.
    """
    states = {obj.initial}
    for k, seg in enumerate(_segments(t)):
        calls = [n for n in seg if t[n].pol is Pol.CALL]
        if len(calls) == 1 and t.ops[calls[0]] in seg:
            c = calls[0]
            r = t.ops[c]
            nxt = set()
            for s in states:
                try:
                    resp, s2 = obj.run(s, t[c].label)
                except IllegalInvocation:
                    continue
                if resp == t[r].label:
                    nxt.add(s2)
            if not nxt:
                w = Witness(c, r, _token(t, r), 0, (), 0, tuple(n for s_ in _segments(t)[:k] for n in s_),
                            "sequential call disagrees with every reachable object state")
                return CheckVerdict(False, "WEAK", "segments", w)
            states = nxt
        else:
            states = _free_order(obj, states, tuple(t[c].label for c in calls))
            if not states:
                w = Witness(calls[0], "", "", 0, (), 0, None, "no legal order for concurrent segment")
                return CheckVerdict(False, "WEAK", "segments", w)
    return CheckVerdict(True, "WEAK", "segments")


def _free_order(obj, states, labels) -> set:
    @lru_cache(maxsize=None)
    def go(state, remaining: tuple) -> frozenset:
        if not remaining:
            return frozenset([state])
        out = set()
        for k, lab in enumerate(remaining):
            if lab in remaining[:k]:
                continue
            try:
                _, s2 = obj.run(state, lab)
            except IllegalInvocation:
                continue
            out |= go(s2, remaining[:k] + remaining[k + 1 :])
        return frozenset(out)

    out = set()
    for s in states:
        out |= go(s, tuple(sorted(labels)))
    return out


# -- classification ---------------------------------------------------------------------


def infer_object(spec: Trace) -> SequentialObject | None:
    methods = {e.label.method for e in spec}
    for obj in (COUNTER, STACK, QUEUE):
        if methods and methods <= obj.alphabet:
            return obj
    return None


def classify(
    t: OperationalTrace, spec: SequentialTrace, obj: SequentialObject | None = None
) -> tuple[str, CheckVerdict | None]:
    """Strongest accepted criterion, each one existential over matchings."""
    for name, fn in (("LIN", lin_counting), ("QQC", qqc_counting), ("QC", qc_counting)):
        v = fn(t, spec)
        if v.accepted:
            return name, v
    obj = obj or infer_object(spec)
    if obj is not None:
        v = weak_qc(t, obj)
        if v.accepted:
            return "WEAK", v
    return "NONE", None


_TABLE = {
    ("lin", "counting"): lin_counting,
    ("lin", "cutdef"): lin_cutdef,
    ("qqc", "counting"): qqc_counting,
    ("qqc", "cutdef"): qqc_cutdef,
    ("qqc", "exists"): qqc_exists_form,
    ("qc", "counting"): qc_counting,
    ("qc", "cutdef"): qc_cutdef,
}


def check(t: OperationalTrace, spec: SequentialTrace, criterion: str, method: str = "counting", m: Matching | None = None) -> CheckVerdict:
    try:
        fn = _TABLE[(criterion.lower(), method.lower())]
    except KeyError:
        raise ValueError(f"no checker for {criterion}/{method}") from None
    return fn(t, spec, m)

