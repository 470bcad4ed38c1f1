"""Deterministic sequential objects and specification generation."""

from __future__ import annotations

import string
from collections.abc import Callable, Hashable, Iterable, Sequence
from dataclasses import dataclass, field

from .trace import UNIT, Label, OperationalTrace, Pol, SequentialTrace, TraceError

__all__ = [
    "COUNTER",
    "IllegalInvocation",
    "OBJECTS",
    "QUEUE",
    "STACK",
    "SequentialObject",
    "gen_spec",
    "get_object",
    "is_spec",
    "op_names",
    "replay",
]

State = Hashable


class IllegalInvocation(TraceError):
    pass


@dataclass(frozen=True)
class SequentialObject:
    """A deterministic state machine over invocation labels.

    ``step`` returns the response payload and the successor state, or
    raises :class:`IllegalInvocation` (pop on empty and the like).
    """

    name: str
    initial: State
    alphabet: frozenset[str]
    step: Callable[[State, Label], tuple[str, State]] = field(repr=False)
    # methods whose argument is drawn from a value pool during search
    valued: frozenset[str] = frozenset()
    # method that produces a value inserted by a ``valued`` method
    takes: frozenset[str] = frozenset()

    def run(self, state: State, inv: Label) -> tuple[Label, State]:
        if inv.method not in self.alphabet:
            raise IllegalInvocation(f"{self.name}: unknown method {inv.method!r}")
        value, nxt = self.step(state, inv)
        return Label(inv.method, value), nxt

    def legal(self, state: State, inv: Label) -> bool:
        try:
            self.run(state, inv)
        except IllegalInvocation:
            return False
        return True


def _counter_step(state: int, inv: Label) -> tuple[str, int]:
    if inv.method == "inc":
        return str(state), state + 1
    if inv.method == "dec":
        return str(state - 1), state - 1
    raise IllegalInvocation(inv.method)


def _stack_step(state: tuple, inv: Label) -> tuple[str, tuple]:
    if inv.method == "push":
        return UNIT, state + (inv.payload,)
    if inv.method == "pop":
        if not state:
            raise IllegalInvocation("pop on empty stack")
        return state[-1], state[:-1]
    raise IllegalInvocation(inv.method)


def _queue_step(state: tuple, inv: Label) -> tuple[str, tuple]:
    if inv.method == "enq":
        return UNIT, state + (inv.payload,)
    if inv.method == "deq":
        if not state:
            raise IllegalInvocation("dequeue on empty queue")
        return state[0], state[1:]
    raise IllegalInvocation(inv.method)


COUNTER = SequentialObject("counter", 0, frozenset({"inc", "dec"}), _counter_step)
STACK = SequentialObject(
    "stack", (), frozenset({"push", "pop"}), _stack_step, frozenset({"push"}), frozenset({"pop"})
)
QUEUE = SequentialObject(
    "queue", (), frozenset({"enq", "deq"}), _queue_step, frozenset({"enq"}), frozenset({"deq"})
)
OBJECTS = {o.name: o for o in (COUNTER, STACK, QUEUE)}


def get_object(name: str) -> SequentialObject:
    try:
        return OBJECTS[name]
    except KeyError:
        raise ValueError(f"unknown object type {name!r}; choose from {sorted(OBJECTS)}") from None


def op_names(n: int) -> list[str]:
    """a, b, c, ... then op26, op27, ..."""
    letters = string.ascii_lowercase
    return [letters[k] if k < 26 else f"op{k}" for k in range(n)]


def replay(obj: SequentialObject, invocations: Iterable[Label], state: State | None = None) -> tuple[list[Label], State]:
    state = obj.initial if state is None else state
    out = []
    for inv in invocations:
        resp, state = obj.run(state, inv)
        out.append(resp)
    return out, state


def gen_spec(
    obj: SequentialObject,
    invocations: Sequence[Label | str],
    names: Sequence[str] | None = None,
) -> SequentialTrace:
    """Run ``invocations`` through ``obj`` and return the alternating trace.

    >>> str(gen_spec(COUNTER, ["inc", "inc"]))
    '?a=inc() !a:0 ?b=inc() !b:1'
    """
    invs = [Label(i) if isinstance(i, str) else i for i in invocations]
    names = list(names) if names is not None else op_names(len(invs))
    if len(names) != len(invs):
        raise ValueError("one name per invocation")
    resps, _ = replay(obj, invs)
    items = []
    for n, inv, resp in zip(names, invs, resps):
        items.append((Pol.CALL, inv, n, None))
        items.append((Pol.RET, resp, f"{n}!", n))
    return SequentialTrace.from_sequence(items)


def is_spec(spec: OperationalTrace, obj: SequentialObject) -> bool:
    """True iff replaying the spec's calls reproduces every response."""
    try:
        seq = SequentialTrace.of(spec)
    except TraceError:
        return False
    state = obj.initial
    for c in seq.op_order:
        r = seq.ops[c]
        try:
            resp, state = obj.run(state, seq[c].label)
        except IllegalInvocation:
            return False
        if r is None or seq[r].label != resp:
            return False
    return True
