"""Witness search: find a specification of a data type that a trace satisfies."""

from __future__ import annotations

from collections.abc import Iterator

from .checkers import Matching, lin_counting, qc_counting, qqc_counting, quiescent_closure, weak_qc
from .objects import IllegalInvocation, SequentialObject
from .trace import BoundExceeded, Label, OperationalTrace, Pol, SequentialTrace

__all__ = ["MAX_SEARCH_OPS", "classify_vs_type", "find_witness", "iter_witnesses"]

MAX_SEARCH_OPS = 8
_CHECK = {"LIN": lin_counting, "QQC": qqc_counting, "QC": qc_counting}


def _extension_alphabet(t: OperationalTrace, obj: SequentialObject) -> list[Label]:
    if not obj.valued:
        return [Label(m) for m in sorted(obj.alphabet)]
    values = sorted(
        {e.label.payload for e in t if (e.is_call and e.label.method in obj.valued) or (not e.is_call and e.label.method in obj.takes)}
    )
    fresh = next(f"v{k}" for k in range(len(values) + 1) if f"v{k}" not in values)
    out = [Label(m, v) for m in sorted(obj.valued) for v in [*values, fresh]]
    out += [Label(m) for m in sorted(obj.alphabet - obj.valued)]
    return out


class _Problem:
    def __init__(self, t: OperationalTrace, obj: SequentialObject, criterion: str, budget: int):
        self.t, self.obj, self.criterion, self.budget = t, obj, criterion, budget
        self.ops = [n for n in t.arrangement if t[n].pol is Pol.CALL]
        self.pos = t.position()
        # calls that precede each return (LIN) and the rank cap (QQC/QC)
        self.before: dict[str, frozenset[str]] = {}
        self.cap: dict[str, float] = {}
        for x in self.ops:
            r = t.ops[x]
            if r is None:
                self.cap[x] = float("inf")
                continue
            before = frozenset(c for c in self.ops if t.lt(c, r))
            self.before[x] = before
            if criterion == "QC":
                q = quiescent_closure(t, r)
                self.cap[x] = float("inf") if q is None else sum(1 for c in q if t[c].pol is Pol.CALL)
            else:
                self.cap[x] = len(before)
        self.alphabet = _extension_alphabet(t, obj)
        self.ext_names = self._fresh_names(budget)

    def _fresh_names(self, k: int) -> list[str]:
        out, n = [], 0
        while len(out) < k:
            n += 1
            cand = f"ext{n}"
            if cand not in self.t and f"{cand}!" not in self.t:
                out.append(cand)
        return out

    def admissible(self, x: str, j: int, placed: tuple[str, ...], ext_used: int) -> bool:
        if self.t.ops[x] is None:
            return True
        if j > self.cap[x]:
            return False
        if self.criterion == "LIN":
            return ext_used == 0 and all(p in self.before[x] for p in placed) and x in self.before[x]
        return True


def iter_witnesses(
    t: OperationalTrace, obj: SequentialObject, criterion: str, extension_budget: int = 2
) -> Iterator[SequentialTrace]:
    """Lazily yield every witness spec, in lexicographic order of the arrangement."""
    criterion = criterion.upper()
    if criterion not in _CHECK:
        raise ValueError(f"witness search supports {sorted(_CHECK)}, not {criterion!r}")
    n_ops = len(t.ops)
    if n_ops + extension_budget > MAX_SEARCH_OPS:
        raise BoundExceeded(f"{n_ops} ops + budget {extension_budget} exceed {MAX_SEARCH_OPS}")
    p = _Problem(t, obj, criterion, extension_budget)
    dead: set = set()
    seq: list[tuple[str, Label, Label]] = []

    def go(placed: tuple[str, ...], state, ext_used: int) -> Iterator[SequentialTrace]:
        key = (frozenset(placed), state, ext_used)
        if key in dead:
            return
        found = False
        if len(placed) == n_ops:
            spec = _build(t, seq)
            m = Matching(tuple((x, x) for x in p.ops), ext_used == 0 and None not in t.ops.values())
            if _CHECK[criterion](t, spec, m).accepted:
                found = True
                yield spec
        else:
            j = len(placed) + ext_used + 1
            for x in p.ops:
                if x in placed or not p.admissible(x, j, placed, ext_used):
                    continue
                try:
                    resp, nxt = obj.run(state, t[x].label)
                except IllegalInvocation:
                    continue
                r = t.ops[x]
                if r is not None and t[r].label != resp:
                    continue
                seq.append((x, t[x].label, resp))
                for w in go(placed + (x,), nxt, ext_used):
                    found = True
                    yield w
                seq.pop()
            if ext_used < extension_budget:
                name = p.ext_names[ext_used]
                for lab in p.alphabet:
                    try:
                        resp, nxt = obj.run(state, lab)
                    except IllegalInvocation:
                        continue
                    seq.append((name, lab, resp))
                    for w in go(placed, nxt, ext_used + 1):
                        found = True
                        yield w
                    seq.pop()
        if not found:
            dead.add(key)

    yield from go((), obj.initial, 0)


def _build(t: OperationalTrace, seq) -> SequentialTrace:
    items = []
    for name, call, resp in seq:
        r = t.ops.get(name)
        rname = r if r is not None else f"{name}!"
        while r is None and rname in t:
            rname += "'"
        items.append((Pol.CALL, call, name, None))
        items.append((Pol.RET, resp, rname, name))
    return SequentialTrace.from_sequence(items)


def find_witness(
    t: OperationalTrace, obj: SequentialObject, criterion: str, extension_budget: int = 2
) -> SequentialTrace | None:
    """First witness spec in search order, or ``None``."""
    return next(iter_witnesses(t, obj, criterion, extension_budget), None)


def classify_vs_type(
    t: OperationalTrace, obj: SequentialObject, extension_budget: int = 2
) -> tuple[str, SequentialTrace | None]:
    for crit in ("LIN", "QQC", "QC"):
        w = find_witness(t, obj, crit, extension_budget)
        if w is not None:
            return crit, w
    if weak_qc(t, obj).accepted:
        return "WEAK", None
    return "NONE", None
