"""Compositionality: split a trace per object and merge per-object witnesses."""

from __future__ import annotations

import graphlib
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from functools import lru_cache

from .checkers import CheckVerdict, Matching, lin_counting, qqc_counting
from .trace import Label, OperationalTrace, Pol, SequentialTrace, TraceError

__all__ = [
    "CompositionError",
    "LemmaNotApplicable",
    "SplitPair",
    "check_compositional",
    "cross_order_lemma",
    "fmerge",
    "pair_order",
    "split",
]


class CompositionError(TraceError):
    """A component fails its own check, or the pair order has a cycle."""


class LemmaNotApplicable(TraceError):
    pass


@dataclass(frozen=True)
class SplitPair:
    first: OperationalTrace
    second: OperationalTrace

    def __iter__(self):
        return iter((self.first, self.second))


def _project(alpha: OperationalTrace, keep: frozenset[str]) -> OperationalTrace:
    return OperationalTrace.from_sequence([it for it in alpha.items() if it[2] in keep])


def split(alpha: OperationalTrace, names_for_first: Iterable[str]) -> SplitPair:
    """Project ``alpha`` onto a bracket-closed name set and its complement.

    Each side keeps the relative arrangement of its own events and is
    rebuilt as an operational trace from that sequence.
    """
    first = set(names_for_first)
    unknown = first - set(alpha.names)
    if unknown:
        raise TraceError(f"unknown names {sorted(unknown)}")
    for c, r in alpha.ops.items():
        if r is not None and (c in first) != (r in first):
            raise TraceError(f"selection is not bracket-closed at {c}")
    a1 = frozenset(first)
    return SplitPair(_project(alpha, a1), _project(alpha, frozenset(alpha.names) - a1))


def cross_order_lemma(alpha: OperationalTrace, x: tuple[str, str], y: tuple[str, str]) -> bool:
    """Given operations ``x = (x0, x1)`` and ``y = (y0, y1)`` (call names),
    report whether ``x1 ≺ y0!`` or ``y1 ≺ x0!`` holds.

    Raises :class:`LemmaNotApplicable` if the configuration the statement
    assumes is not present, or the trace is not operational.
    """
    (x0, x1), (y0, y1) = x, y
    for c in (x0, x1, y0, y1):
        if c not in alpha.ops:
            raise LemmaNotApplicable(f"{c} is not a call of the trace")
    xr, yr = alpha.ops[x0], alpha.ops[y0]
    if xr is None or yr is None:
        raise LemmaNotApplicable("x0 and y0 must be complete")
    lt = alpha.lt
    need = [(x0, xr), (y0, yr), (x0, yr), (y0, xr), (x1, xr), (y1, yr)]
    missing = [p for p in need if not lt(*p)]
    if missing:
        raise LemmaNotApplicable(f"configuration absent: missing orders {missing}")
    if not alpha.is_operational():
        raise LemmaNotApplicable("trace is not operational")
    return lt(x1, yr) or lt(y1, xr)


def _before_calls(alpha: OperationalTrace, ret: str, among: frozenset[str]) -> frozenset[str]:
    return frozenset(c for c in among if alpha.lt(c, ret))


class _Sides:
    """Per-pair data for two sequential components relative to alpha."""

    def __init__(self, b1: SequentialTrace, b2: SequentialTrace, alpha: OperationalTrace):
        if b1.names & b2.names:
            raise TraceError("components must have disjoint names")
        missing = (b1.names | b2.names) - alpha.names
        if missing:
            raise TraceError(f"alpha lacks events {sorted(missing)}")
        self.alpha = alpha
        self.p1 = [tuple(b1.arrangement[k : k + 2]) for k in range(0, len(b1), 2)]
        self.p2 = [tuple(b2.arrangement[k : k + 2]) for k in range(0, len(b2), 2)]
        c1 = frozenset(c for c, _ in self.p1)
        c2 = frozenset(c for c, _ in self.p2)
        ret = lambda c: alpha.ops[c]  # noqa: E731
        # calls of each side that precede a given return in alpha
        self.pre1 = {c: _before_calls(alpha, ret(c), c1) for c in c1 | c2}
        self.pre2 = {c: _before_calls(alpha, ret(c), c2) for c in c1 | c2}
        self.items = {n: (alpha[n].pol, alpha[n].label, n, alpha[n].brak) for n in b1.names | b2.names}
        for c in c1 | c2:
            if ret(c) is None:
                raise TraceError(f"operation {c} is open in alpha")


def pair_order(b1: SequentialTrace, b2: SequentialTrace, alpha: OperationalTrace) -> dict[str, set[str]]:
    """Pair-level order: each component's chain plus ret-before-call cross edges.

    Keys are call names; values are the calls that must come earlier.
    Raises :class:`CompositionError` on a cycle.
    """
    s = _Sides(b1, b2, alpha)
    deps: dict[str, set[str]] = {}
    for chain in (s.p1, s.p2):
        for k, (c, _) in enumerate(chain):
            deps[c] = {chain[k - 1][0]} if k else set()
    for a, other in ((s.p1, s.p2), (s.p2, s.p1)):
        for ca, ra in a:
            for cb, _ in other:
                if alpha.lt(ra, cb):
                    deps[cb].add(ca)
    try:
        tuple(graphlib.TopologicalSorter(deps).static_order())
    except graphlib.CycleError as exc:
        raise CompositionError(f"pair order is cyclic: {exc.args[1]}") from None
    return deps


def fmerge(b1: SequentialTrace, b2: SequentialTrace, alpha: OperationalTrace) -> Iterator[SequentialTrace]:
    """Enumerate the merge set of two component witnesses.

    A pair is appended last only when the other side's preceding-call set
    at its own last pair is dominated, as the recursive definition
    requires. β1's pair is tried first at each step.

    No acyclicity check here: QQC component witnesses may contradict
    real-time order, so chains plus cross edges can legitimately cycle.
    """
    s = _Sides(b1, b2, alpha)

    @lru_cache(maxsize=None)
    def merge(i: int, j: int) -> tuple[tuple[str, ...], ...]:
        # merges of p1[:i] with p2[:j], each as a tuple of call names
        if j == 0:
            return (tuple(c for c, _ in s.p1[:i]),)
        if i == 0:
            return (tuple(c for c, _ in s.p2[:j]),)
        x, y = s.p1[i - 1][0], s.p2[j - 1][0]
        out: list[tuple[str, ...]] = []
        if s.pre2[y] <= s.pre2[x]:
            out += [cs + (x,) for cs in merge(i - 1, j)]
        if s.pre1[x] <= s.pre1[y]:
            out += [cs + (y,) for cs in merge(i, j - 1)]
        return tuple(out)

    pairs = {c: r for c, r in s.p1 + s.p2}
    for calls in merge(len(s.p1), len(s.p2)):
        items = []
        for c in calls:
            items += [s.items[c], s.items[pairs[c]]]
        yield SequentialTrace.from_sequence(items)


def _lin_merge(b1: SequentialTrace, b2: SequentialTrace, alpha: OperationalTrace) -> SequentialTrace:
    deps = pair_order(b1, b2, alpha)
    s = _Sides(b1, b2, alpha)
    pairs = {c: r for c, r in s.p1 + s.p2}
    rank = {c: k for k, (c, _) in enumerate(s.p1 + s.p2)}
    placed: set[str] = set()
    items = []
    while len(placed) < len(deps):
        c = min((n for n in deps if n not in placed and deps[n] <= placed), key=rank.__getitem__)
        items += [s.items[c], s.items[pairs[c]]]
        placed.add(c)
    return SequentialTrace.from_sequence(items)


def _identity(beta: SequentialTrace) -> Matching:
    return Matching(tuple((c, c) for c in beta.op_order), True)


def _as_names(alpha: OperationalTrace, beta: SequentialTrace, verdict: CheckVerdict) -> SequentialTrace:
    """Rename a component witness onto alpha's names via the accepted matching."""
    inv = {s: c for c, s in verdict.matching.map.items()}
    if set(inv) != set(beta.op_order):
        raise CompositionError("component witness has operations missing from the trace")
    items: list[tuple[Pol, Label, str, str | None]] = []
    for sc in beta.op_order:
        c = inv[sc]
        r = alpha.ops[c]
        items += [(Pol.CALL, beta[sc].label, c, None), (Pol.RET, beta[beta.ops[sc]].label, r, c)]
    return SequentialTrace.from_sequence(items)


def check_compositional(
    alpha: OperationalTrace,
    pair: SplitPair,
    b1: SequentialTrace,
    b2: SequentialTrace,
    criterion: str = "QQC",
) -> SequentialTrace:
    """Combine component witnesses into one witness for ``alpha``."""
    criterion = criterion.upper()
    check = {"QQC": qqc_counting, "LIN": lin_counting}.get(criterion)
    if check is None:
        raise ValueError(f"composition supports QQC and LIN, not {criterion!r}")
    named = []
    for idx, (part, beta) in enumerate(zip(pair, (b1, b2)), 1):
        v = check(part, beta)
        if not v.accepted:
            raise CompositionError(f"component {idx} fails {criterion}: {v.witness}")
        named.append(_as_names(alpha, beta, v))
    if criterion == "LIN":
        beta = _lin_merge(named[0], named[1], alpha)
        if not lin_counting(alpha, beta, _identity(beta)).accepted:
            raise CompositionError("merged order is not a LIN witness")
        return beta
    for beta in fmerge(named[0], named[1], alpha):
        if qqc_counting(alpha, beta, _identity(beta)).accepted:
            return beta
    raise CompositionError("merge set has no QQC witness")
