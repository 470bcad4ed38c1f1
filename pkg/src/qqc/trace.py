"""Polarized, bracketed labelled partial orders.

A trace is a finite set of named events. Each event carries its polarity
(call or return), a label, its own name, the set of names that precede it,
and, for returns, the name of the call it closes. The order is stored in
the events themselves, so ``a < b`` iff ``a in b.preds``; pred sets are
kept transitively closed.

Operational traces come with an *arrangement*: a linear sequence of the
events from which the order is rebuilt by the string homomorphism (every
call is ordered before each later return and every return before each
later call). Sequential traces are operational traces whose arrangement
is totally ordered and alternates call, matching return.
"""

from __future__ import annotations

import enum
import itertools
import os
import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from math import comb
from types import MappingProxyType

__all__ = [
    "BoundExceeded",
    "Event",
    "InvalidTrace",
    "Label",
    "OperationalTrace",
    "Pol",
    "SequentialTrace",
    "TokenError",
    "Trace",
    "TraceError",
    "ValidityReport",
    "Violation",
    "default_bound",
    "down_closure",
    "extend_to",
    "extensions",
    "find_renaming",
    "format_trp1",
    "from_tokens",
    "interleavings",
    "is_quiescent",
    "open_calls",
    "parse_trp1",
    "permeq",
    "permlt",
    "po_difference",
    "prefix_sets",
    "prefixes",
    "to_tokens",
    "validate",
]

DEFAULT_MAX_EVENTS = 16


def default_bound() -> int:
    """Event bound for definitional enumerations (``QQC_MAX_EVENTS`` overrides)."""
    raw = os.environ.get("QQC_MAX_EVENTS")
    return int(raw) if raw else DEFAULT_MAX_EVENTS


class TraceError(ValueError):
    pass


class TokenError(TraceError):
    """Malformed, badly bracketed or duplicated TRC1/TRP1 input."""


class InvalidTrace(TraceError):
    def __init__(self, report: ValidityReport):
        super().__init__(f"not a trace: {report}")
        self.report = report


class BoundExceeded(TraceError):
    pass


class Pol(str, enum.Enum):
    CALL = "call"
    RET = "ret"


@dataclass(frozen=True, order=True)
class Label:
    method: str
    payload: str = ""

    def __str__(self) -> str:
        return f"{self.method}({self.payload})"


@dataclass(frozen=True)
class Event:
    pol: Pol
    label: Label
    name: str
    preds: frozenset[str] = frozenset()
    brak: str | None = None

    @property
    def is_call(self) -> bool:
        return self.pol is Pol.CALL

    def with_preds(self, preds: Iterable[str]) -> Event:
        return Event(self.pol, self.label, self.name, frozenset(preds), self.brak)

    def renamed(self, rho: Mapping[str, str]) -> Event:
        return Event(
            self.pol,
            self.label,
            rho[self.name],
            frozenset(rho[p] for p in self.preds),
            None if self.brak is None else rho[self.brak],
        )


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    condition: int
    names: tuple[str, ...]
    detail: str = ""

    def __str__(self) -> str:
        return f"condition {self.condition} {list(self.names)}: {self.detail}"


@dataclass(frozen=True)
class ValidityReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def conditions(self) -> frozenset[int]:
        return frozenset(v.condition for v in self.violations)

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(map(str, self.violations))


def validate(events: Iterable[Event]) -> ValidityReport:
    """Check the six trace conditions; violations are returned, never raised."""
    evs = list(events)
    out: list[Violation] = []
    by_name: dict[str, Event] = {}
    for e in evs:
        if e.name in by_name and by_name[e.name] != e:
            out.append(Violation(1, (e.name,), "duplicate name"))
        by_name.setdefault(e.name, e)

    for e in by_name.values():
        missing = sorted(p for p in e.preds if p not in by_name)
        if missing:
            out.append(Violation(2, (e.name, *missing), "pred refers to absent event"))
        if e.pol is Pol.RET:
            if e.brak is None or e.brak not in by_name:
                out.append(Violation(3, (e.name,), f"dangling bracket {e.brak!r}"))
            elif e.brak not in e.preds:
                out.append(Violation(3, (e.name, e.brak), "bracket not among preds"))
            elif by_name[e.brak].pol is not Pol.CALL:
                out.append(Violation(3, (e.name, e.brak), "bracket names a return"))
        elif e.brak is not None:
            out.append(Violation(3, (e.name,), "call carries a bracket"))

    closers: dict[str, list[str]] = {}
    for e in by_name.values():
        if e.pol is Pol.RET and e.brak is not None:
            closers.setdefault(e.brak, []).append(e.name)
    for call, rets in closers.items():
        if len(rets) > 1:
            out.append(Violation(3, (call, *sorted(rets)), "call closed twice"))

    def lt(a: str, b: str) -> bool:
        return a in by_name[b].preds

    for z in by_name.values():
        for a in sorted(p for p in z.preds if p in by_name):
            if z.pol is Pol.CALL:
                # input acquires control
                if by_name[a].pol is Pol.RET:
                    continue
                if not any(
                    r.pol is Pol.RET and lt(a, r.name) and lt(r.name, z.name)
                    for r in by_name.values()
                ):
                    out.append(Violation(4, (a, z.name), "calls ordered with no return between"))
            else:
                # output releases control
                if by_name[a].pol is Pol.CALL:
                    continue
                if not any(
                    c.pol is Pol.CALL and lt(a, c.name) and lt(c.name, z.name)
                    for c in by_name.values()
                ):
                    out.append(Violation(5, (a, z.name), "returns ordered with no call between"))

    for e in by_name.values():
        if e.name in e.preds:
            out.append(Violation(6, (e.name,), "reflexive"))
        for p in e.preds:
            if p in by_name:
                stray = by_name[p].preds - e.preds
                if stray:
                    out.append(Violation(6, (e.name, p, *sorted(stray)), "not transitive"))
                if e.name in by_name[p].preds and p != e.name:
                    out.append(Violation(6, (e.name, p), "not antisymmetric"))
    return ValidityReport(tuple(out))


# -- traces ---------------------------------------------------------------------


class Trace:
    """An immutable, validated event set."""

    __slots__ = ("_events", "_ops", "_hash")

    def __init__(self, events: Iterable[Event], *, check: bool = True):
        evs = list(events)
        if check:
            report = validate(evs)
            if not report.ok:
                raise InvalidTrace(report)
        self._events: Mapping[str, Event] = MappingProxyType({e.name: e for e in evs})
        self._ops: dict[str, str | None] | None = None
        self._hash: int | None = None

    @property
    def events(self) -> Mapping[str, Event]:
        return self._events

    @property
    def names(self) -> frozenset[str]:
        return frozenset(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events.values())

    def __contains__(self, name: object) -> bool:
        return name in self._events

    def __getitem__(self, name: str) -> Event:
        return self._events[name]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return dict(self._events) == dict(other._events)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._events.values()))
        return self._hash

    def __repr__(self) -> str:
        return f"{type(self).__name__}({len(self)} events)"

    def lt(self, a: str, b: str) -> bool:
        return a in self._events[b].preds

    def calls(self) -> list[Event]:
        return [e for e in self if e.pol is Pol.CALL]

    def returns(self) -> list[Event]:
        return [e for e in self if e.pol is Pol.RET]

    @property
    def ops(self) -> Mapping[str, str | None]:
        """Call name -> name of its return (``None`` while open)."""
        if self._ops is None:
            ops: dict[str, str | None] = {e.name: None for e in self if e.pol is Pol.CALL}
            for e in self:
                if e.pol is Pol.RET:
                    ops[e.brak] = e.name
            self._ops = ops
        return self._ops

    def restrict(self, names: Iterable[str]) -> Trace:
        keep = set(names)
        return Trace(
            (e.with_preds(e.preds & keep) for e in self if e.name in keep), check=False
        )

    def is_operational(self) -> bool:
        calls, rets = self.calls(), self.returns()
        return all(self.lt(c.name, r.name) or self.lt(r.name, c.name) for c in calls for r in rets)

    def is_sequential(self) -> bool:
        ns = list(self._events)
        return all(self.lt(a, b) or self.lt(b, a) for a, b in itertools.combinations(ns, 2))

    def linear_extension(self) -> tuple[str, ...]:
        """A deterministic topological order (ties broken by name)."""
        return tuple(sorted(self._events, key=lambda n: (len(self._events[n].preds), n)))


def _homomorphism(items: Sequence[tuple[Pol, Label, str, str | None]]) -> list[Event]:
    out: list[Event] = []
    last_ret = last_call = -1
    for idx, (pol, label, name, brak) in enumerate(items):
        if pol is Pol.CALL:
            preds = {
                items[k][2]
                for k in range(idx)
                if items[k][0] is Pol.RET or k < last_ret
            }
            last_call = idx
        else:
            preds = {
                items[k][2]
                for k in range(idx)
                if items[k][0] is Pol.CALL or k < last_call
            }
            last_ret = idx
        out.append(Event(pol, label, name, frozenset(preds), brak))
    return out


class OperationalTrace(Trace):
    """A trace in which every call is ordered against every return."""

    __slots__ = ("arrangement",)

    def __init__(
        self,
        events: Iterable[Event],
        arrangement: Sequence[str] | None = None,
        *,
        check: bool = True,
    ):
        super().__init__(events, check=check)
        if arrangement is None:
            arrangement = self.linear_extension()
        self.arrangement: tuple[str, ...] = tuple(arrangement)
        if check:
            if sorted(self.arrangement) != sorted(self._events):
                raise TraceError("arrangement must list every event exactly once")
            pos = {n: i for i, n in enumerate(self.arrangement)}
            for e in self:
                if any(pos[p] > pos[e.name] for p in e.preds):
                    raise TraceError(f"arrangement contradicts order at {e.name}")
            if not self.is_operational():
                raise TraceError("trace is not operational")

    @classmethod
    def from_sequence(
        cls, items: Sequence[tuple[Pol, Label, str, str | None]], *, check: bool = True
    ) -> OperationalTrace:
        """Build from (pol, label, name, brak) items via the string homomorphism."""
        return cls(_homomorphism(items), [it[2] for it in items], check=check)

    @classmethod
    def of(cls, trace: Trace) -> OperationalTrace:
        if isinstance(trace, cls):
            return trace
        return cls(trace, trace.linear_extension())

    def items(self) -> list[tuple[Pol, Label, str, str | None]]:
        return [(self[n].pol, self[n].label, n, self[n].brak) for n in self.arrangement]

    def position(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.arrangement)}

    def tokens(self) -> list[str]:
        return to_tokens(self)

    def __str__(self) -> str:
        return " ".join(self.tokens())


class SequentialTrace(OperationalTrace):
    """Totally ordered; alternates a call and its matching return."""

    __slots__ = ()

    def __init__(self, events: Iterable[Event], arrangement: Sequence[str] | None = None, *, check: bool = True):
        super().__init__(events, arrangement, check=check)
        if check:
            arr = self.arrangement
            if len(arr) % 2:
                raise TraceError("sequential trace must have an even number of events")
            for k in range(0, len(arr), 2):
                c, r = self[arr[k]], self[arr[k + 1]]
                if c.pol is not Pol.CALL or r.pol is not Pol.RET or r.brak != c.name:
                    raise TraceError(f"sequential trace breaks alternation at position {k}")

    @classmethod
    def of(cls, trace: Trace) -> SequentialTrace:
        if isinstance(trace, cls):
            return trace
        op = OperationalTrace.of(trace)
        return cls(op, op.arrangement)

    @property
    def op_order(self) -> tuple[str, ...]:
        """Call names in specification order."""
        return self.arrangement[0::2]

    def index(self) -> dict[str, int]:
        """Call name -> 1-based position in the specification."""
        return {c: k + 1 for k, c in enumerate(self.op_order)}


# -- TRC1 -----------------------------------------------------------------------

_NAME = r"[A-Za-z0-9_'.]+"
_CALL_RE = re.compile(rf"^\?({_NAME})=([A-Za-z_][\w]*)\((.*)\)$")
_RET_RE = re.compile(rf"^!({_NAME})(?::(\S+))?$")
UNIT = "()"


def ret_name(op: str) -> str:
    return f"{op}!"


def _split_tokens(src: str | Sequence[str]) -> list[str]:
    if isinstance(src, str):
        lines = (line.split("#", 1)[0] for line in src.splitlines())
        return [tok for line in lines for tok in line.split()]
    return list(src)


def from_tokens(src: str | Sequence[str], *, cls: type[OperationalTrace] = OperationalTrace) -> OperationalTrace:
    """Parse TRC1 text (or a token list) into an operational trace.

    >>> str(from_tokens("?a=inc() !a:0"))
    '?a=inc() !a:0'
    """
    items: list[tuple[Pol, Label, str, str | None]] = []
    open_ops: dict[str, Label] = {}
    seen: set[str] = set()
    for tok in _split_tokens(src):
        if m := _CALL_RE.match(tok):
            op, method, arg = m.groups()
            if op in seen:
                raise TokenError(f"duplicate name {op!r}")
            seen.add(op)
            label = Label(method, arg)
            open_ops[op] = label
            items.append((Pol.CALL, label, op, None))
        elif m := _RET_RE.match(tok):
            op, value = m.groups()
            value = UNIT if value is None else value
            if op not in open_ops:
                raise TokenError(f"return {tok!r} has no open call")
            label = open_ops.pop(op)
            items.append((Pol.RET, Label(label.method, value), ret_name(op), op))
        else:
            raise TokenError(f"malformed token {tok!r}")
    return cls.from_sequence(items)


def to_tokens(t: OperationalTrace) -> list[str]:
    out = []
    for n in t.arrangement:
        e = t[n]
        if e.pol is Pol.CALL:
            out.append(f"?{n}={e.label.method}({e.label.payload})")
        else:
            out.append(f"!{e.brak}:{e.label.payload}")
    return out


# -- TRP1 -----------------------------------------------------------------------

_TRP1_RE = re.compile(
    rf"^event\s+({_NAME}!?)\s+(call|ret)\s+([A-Za-z_]\w*)\((.*)\)\s+pred=(\S+)\s+brak=(\S+)$"
)


def parse_trp1(text: str, *, check: bool = True) -> Trace:
    events = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _TRP1_RE.match(line)
        if not m:
            raise TokenError(f"line {lineno}: malformed event {raw!r}")
        name, pol, method, payload, pred, brak = m.groups()
        preds = frozenset() if pred == "-" else frozenset(pred.split(","))
        events.append(
            Event(Pol(pol), Label(method, payload), name, preds, None if brak == "-" else brak)
        )
    names = [e.name for e in events]
    if len(set(names)) != len(names):
        raise TokenError("duplicate event name")
    return Trace(events, check=check)


def format_trp1(t: Trace) -> str:
    order = t.arrangement if isinstance(t, OperationalTrace) else t.linear_extension()
    lines = []
    for n in order:
        e = t[n]
        pred = ",".join(sorted(e.preds)) or "-"
        lines.append(
            f"event {n} {e.pol.value} {e.label.method}({e.label.payload}) pred={pred} brak={e.brak or '-'}"
        )
    return "\n".join(lines) + "\n"


# -- algebra ----------------------------------------------------------------------


def open_calls(t: Trace) -> frozenset[str]:
    return frozenset(c for c, r in t.ops.items() if r is None)


def is_quiescent(t: Trace) -> bool:
    return not open_calls(t)


def prefix_sets(t: Trace, bound: int | None = None) -> Iterator[frozenset[str]]:
    """Yield every down-closed name set of ``t`` exactly once."""
    bound = default_bound() if bound is None else bound
    if len(t) > bound:
        raise BoundExceeded(f"{len(t)} events exceed prefix bound {bound}")
    order = t.linear_extension()
    preds = [t[n].preds for n in order]

    def go(k: int, chosen: frozenset[str]) -> Iterator[frozenset[str]]:
        if k == len(order):
            yield chosen
            return
        yield from go(k + 1, chosen)
        if preds[k] <= chosen:
            yield from go(k + 1, chosen | {order[k]})

    yield from go(0, frozenset())


def prefixes(t: Trace, bound: int | None = None) -> Iterator[Trace]:
    for names in prefix_sets(t, bound):
        yield t.restrict(names)


def down_closure(t: Trace, name: str) -> frozenset[str]:
    if name not in t:
        raise KeyError(name)
    # preds are transitively closed
    return t[name].preds | {name}


def permeq(t1: Trace, t2: Trace) -> bool:
    if t1.names != t2.names:
        return False
    return all(t1[n].label == t2[n].label and t1[n].brak == t2[n].brak for n in t1.names)


def permlt(t1: Trace, t2: Trace) -> bool:
    return all(
        n in t2 and t2[n].label == e.label and t2[n].brak == e.brak and t2[n].pol is e.pol
        for n, e in t1.events.items()
    )


def find_renaming(t1: Trace, t2: Trace) -> dict[str, str] | None:
    """A bijection from t1's names to t2's preserving everything but names."""
    if len(t1) != len(t2):
        return None

    def sig(t: Trace, e: Event) -> tuple:
        succs = sum(1 for f in t if e.name in f.preds)
        return (e.pol, e.label, len(e.preds), succs)

    if sorted(map(repr, (sig(t1, e) for e in t1))) != sorted(map(repr, (sig(t2, e) for e in t2))):
        return None
    order = t1.linear_extension()
    cands = {n: [f.name for f in t2 if sig(t2, f) == sig(t1, t1[n])] for n in order}
    rho: dict[str, str] = {}
    used: set[str] = set()

    def go(k: int) -> bool:
        if k == len(order):
            return True
        n = order[k]
        e = t1[n]
        for m in cands[n]:
            if m in used:
                continue
            f = t2[m]
            if {rho[p] for p in e.preds} != f.preds:
                continue
            if e.brak is not None and rho.get(e.brak) != f.brak:
                continue
            rho[n] = m
            used.add(m)
            if go(k + 1):
                return True
            del rho[n]
            used.discard(m)
        return False

    return dict(rho) if go(0) else None


def po_difference(t: Trace, names: Iterable[str]) -> Trace:
    """Remove a bracketed event set, deleting every reference to it."""
    drop = frozenset(names)
    for n in drop:
        if n not in t:
            raise KeyError(n)
        e = t[n]
        if e.pol is Pol.RET and e.brak not in drop:
            raise TraceError(f"{n} is removed without its call {e.brak}")
    kept = [e.with_preds(e.preds - drop) for e in t if e.name not in drop]
    if isinstance(t, OperationalTrace):
        arr = [n for n in t.arrangement if n not in drop]
        return Trace(kept, check=False) if not arr else _rebuild_like(t, kept, arr)
    return Trace(kept, check=False)


def _rebuild_like(t: OperationalTrace, kept: list[Event], arr: list[str]) -> Trace:
    out = Trace(kept, check=False)
    try:
        return OperationalTrace(out, arr)
    except TraceError:
        return out


def extensions(partial: OperationalTrace, spec: SequentialTrace, *, limit: int | None = None) -> Iterator[OperationalTrace]:
    """Operational extensions of ``partial`` that are permutations of ``spec``.

    New events are appended after the existing arrangement in every
    well-bracketed order. The spec-order block comes first.
    """
    if not permlt(partial, spec):
        raise TraceError("partial trace is not a sub-permutation of the spec")
    new = [n for n in spec.arrangement if n not in partial]
    base = partial.items()
    seen: set[tuple[str, ...]] = set()
    count = 0

    def orders(rest: list[str], placed: frozenset[str]) -> Iterator[list[str]]:
        if not rest:
            yield []
            return
        for i, n in enumerate(rest):
            e = spec[n]
            if e.pol is Pol.RET and e.brak in spec and e.brak not in partial and e.brak not in placed:
                continue
            for tail in orders(rest[:i] + rest[i + 1 :], placed | {n}):
                yield [n, *tail]

    for suffix in orders(new, frozenset()):
        key = tuple(suffix)
        if key in seen:
            continue
        seen.add(key)
        items = base + [(spec[n].pol, spec[n].label, n, spec[n].brak) for n in suffix]
        yield OperationalTrace.from_sequence(items, check=False)
        count += 1
        if limit is not None and count >= limit:
            return


def extend_to(partial: OperationalTrace, spec: SequentialTrace) -> OperationalTrace:
    """Close ``partial`` against ``spec`` by appending the missing events in spec order."""
    return next(extensions(partial, spec))


def interleavings(
    s1: SequentialTrace, s2: SequentialTrace, bound: int | None = None
) -> Iterator[SequentialTrace]:
    """All order-preserving shuffles of the call/return pairs of two sequential traces."""
    bound = default_bound() if bound is None else bound
    if len(s1) + len(s2) > bound:
        raise BoundExceeded(f"{len(s1) + len(s2)} events exceed bound {bound}")
    if s1.names & s2.names:
        s2 = _fresh_copy(s2, s1.names)
    p1 = [s1.items()[k : k + 2] for k in range(0, len(s1), 2)]
    p2 = [s2.items()[k : k + 2] for k in range(0, len(s2), 2)]
    n1, n2 = len(p1), len(p2)
    for slots in itertools.combinations(range(n1 + n2), n1):
        chosen = set(slots)
        i1 = iter(p1)
        i2 = iter(p2)
        items = []
        for k in range(n1 + n2):
            items.extend(next(i1) if k in chosen else next(i2))
        yield SequentialTrace.from_sequence(items)
    assert comb(n1 + n2, n1) >= 1


def _fresh_copy(t: SequentialTrace, taken: frozenset[str]) -> SequentialTrace:
    counter = itertools.count()
    rho: dict[str, str] = {}
    for n in t.arrangement:
        while True:
            cand = f"{n}_{next(counter)}"
            if cand not in taken and cand not in t:
                break
        rho[n] = cand
    items = [(pol, lab, rho[n], None if b is None else rho[b]) for pol, lab, n, b in t.items()]
    return SequentialTrace.from_sequence(items)
