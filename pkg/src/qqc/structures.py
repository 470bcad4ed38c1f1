"""Step-level simulation of balancer-based counters and stacks.

A schedule is a sequence of op ids; each entry executes that op's next
atomic section. N-Counter and N-Stack ops take two atomic sections, a
depth-d elimination-tree op takes d+1 (one toggle per level, then the
leaf action). The instrumented stacks carry per-leaf action queues and
an emitter that prints the sequential specification as soon as it can.
"""

from __future__ import annotations

import random
import threading
import time
from collections import deque
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field

from .objects import op_names
from .trace import UNIT, BoundExceeded, Label, OperationalTrace, Pol, SequentialTrace, TraceError

__all__ = [
    "ElimTree",
    "ExecutionRecord",
    "KINDS",
    "NCounter",
    "NStack",
    "Op",
    "StuckOp",
    "chain_counts",
    "elim_tree_run",
    "emitted_spec",
    "enumerate_schedules",
    "linearized_trace",
    "make_machine",
    "parse_ops",
    "properly_popped",
    "queue_chains",
    "run_schedule",
    "run_threaded",
]

DEFAULT_STEP_BOUND = 14


class StuckOp(TraceError):
    """A pop reached an empty leaf stack."""


class ScheduleError(TraceError):
    pass


@dataclass(frozen=True)
class Op:
    id: str
    method: str
    arg: str = ""

    @property
    def label(self) -> Label:
        return Label(self.method, self.arg)


def parse_ops(spec: str | Sequence[str]) -> tuple[Op, ...]:
    """``"push:a,push:b,pop"`` or ``["inc", "inc"]`` -> ops named a, b, c, ..."""
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    items = [s.strip() for s in items if s.strip()]
    names = op_names(len(items))
    out = []
    for name, item in zip(names, items):
        method, _, arg = item.partition(":")
        out.append(Op(name, method, arg))
    return tuple(out)


# -- machines -----------------------------------------------------------------------


class NCounter:
    """getAndIncrement / decrementAndGet over one mod-N balancer and N cells."""

    kind = "ncounter"
    methods = frozenset({"inc", "dec"})

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("N must be positive")
        self.n = n
        self.b = 0
        self.c = list(range(n))

    def clone(self) -> NCounter:
        m = NCounter.__new__(NCounter)
        m.n, m.b, m.c = self.n, self.b, list(self.c)
        return m

    def steps(self, op: Op) -> int:
        return 2

    def params(self) -> dict:
        return {"N": self.n}

    def atomic(self, op: Op, k: int, local: dict) -> str | None:
        if k == 0:
            if op.method == "inc":
                local["i"] = self.b
                self.b = (self.b + 1) % self.n
            else:
                self.b = (self.b - 1) % self.n
                local["i"] = self.b
            return None
        i = local["i"]
        if op.method == "inc":
            v = self.c[i]
            self.c[i] += self.n
        else:
            self.c[i] -= self.n
            v = self.c[i]
        return str(v)

    def state(self) -> str:
        return f"{self.b}|{','.join(map(str, self.c))}"


class _Emitter:
    """Per-leaf action queues plus the emitter index."""

    def __init__(self, width: int):
        self.width = width
        self.e = 0
        self.q: list[deque] = [deque() for _ in range(width)]
        self.printed: list[tuple[str, str, str]] = []

    def copy_into(self, other: _Emitter) -> None:
        other.width, other.e = self.width, self.e
        other.q = [deque(x) for x in self.q]
        other.printed = list(self.printed)

    def add(self, leaf: int, action: tuple[str, str, str]) -> None:
        self.q[leaf].append(action)
        self.emit()

    def emit(self) -> None:
        q, w = self.q, self.width
        while True:
            if q[self.e] and q[self.e][0][0] == "push":
                self.printed.append(q[self.e].popleft())
                self.e = (self.e + 1) % w
            elif q[(self.e - 1) % w] and q[(self.e - 1) % w][0][0] == "pop":
                self.printed.append(q[(self.e - 1) % w].popleft())
                self.e = (self.e - 1) % w
            else:
                return

    def state(self) -> str:
        qs = ";".join(",".join(f"{'+' if a[0] == 'push' else '-'}{a[2]}" for a in x) for x in self.q)
        return f"e={self.e} q={qs}"


class NStack:
    """N leaf stacks behind one mod-N balancer, optionally instrumented."""

    kind = "nstack"
    methods = frozenset({"push", "pop"})

    def __init__(self, n: int, instrumented: bool = True):
        if n < 1:
            raise ValueError("N must be positive")
        self.n = n
        self.b = 0
        self.s: list[list[str]] = [[] for _ in range(n)]
        self.em = _Emitter(n) if instrumented else None

    def clone(self) -> NStack:
        m = NStack.__new__(NStack)
        m.n, m.b = self.n, self.b
        m.s = [list(x) for x in self.s]
        if self.em is None:
            m.em = None
        else:
            m.em = _Emitter.__new__(_Emitter)
            self.em.copy_into(m.em)
        return m

    def steps(self, op: Op) -> int:
        return 2

    def params(self) -> dict:
        return {"N": self.n}

    @property
    def leaves(self) -> int:
        return self.n

    def atomic(self, op: Op, k: int, local: dict) -> str | None:
        if k == 0:
            if op.method == "push":
                local["i"] = self.b
                self.b = (self.b + 1) % self.n
            else:
                self.b = (self.b - 1) % self.n
                local["i"] = self.b
            return None
        return _leaf_action(self.s, self.em, local["i"], op)

    def state(self) -> str:
        leaves = ";".join(",".join(x) for x in self.s)
        base = f"b={self.b} s={leaves}"
        return base if self.em is None else f"{base} {self.em.state()}"


def _leaf_action(stacks, em, i: int, op: Op) -> str:
    if op.method == "push":
        stacks[i].append(op.arg)
        v = UNIT
        action = ("push", op.id, op.arg)
    else:
        if not stacks[i]:
            raise StuckOp(f"pop {op.id} on empty leaf {i}")
        v = stacks[i].pop()
        action = ("pop", op.id, v)
    if em is not None:
        em.add(i, action)
    return v


class ElimTree:
    """Binary elimination-tree stack of depth d with 2^d leaf stacks.

    Toggles behave like a 2-balancer at every node: a push follows the
    toggle and flips it, a pop flips it and follows the new value. Leaves
    are indexed by the bit-reversed address, which is the order in which
    sequential pushes visit them; the flat emitter runs over that index.
    """

    kind = "elim"
    methods = frozenset({"push", "pop"})

    def __init__(self, depth: int, instrumented: bool = True):
        if depth < 1:
            raise ValueError("depth must be at least 1")
        self.d = depth
        self.toggles = [0] * (2**depth - 1)
        self.s: list[list[str]] = [[] for _ in range(2**depth)]
        self.em = _Emitter(2**depth) if instrumented else None

    def clone(self) -> ElimTree:
        m = ElimTree.__new__(ElimTree)
        m.d = self.d
        m.toggles = list(self.toggles)
        m.s = [list(x) for x in self.s]
        if self.em is None:
            m.em = None
        else:
            m.em = _Emitter.__new__(_Emitter)
            self.em.copy_into(m.em)
        return m

    def steps(self, op: Op) -> int:
        return self.d + 1

    def params(self) -> dict:
        return {"depth": self.d}

    @property
    def leaves(self) -> int:
        return 2**self.d

    def atomic(self, op: Op, k: int, local: dict) -> str | None:
        if k < self.d:
            node = local.get("node", 0)
            t = self.toggles[node]
            if op.method == "push":
                bit = t
                self.toggles[node] = 1 - t
            else:
                bit = 1 - t
                self.toggles[node] = bit
            local.setdefault("bits", []).append(bit)
            local["node"] = 2 * node + 1 + bit
            if k == self.d - 1:
                local["i"] = sum(b << lvl for lvl, b in enumerate(local["bits"]))
            return None
        return _leaf_action(self.s, self.em, local["i"], op)

    @staticmethod
    def address(local: dict) -> str:
        return "".join(map(str, local.get("bits", [])))

    def state(self) -> str:
        bits = "".join(map(str, self.toggles))
        leaves = ";".join(
            f"{format(i, f'0{self.d}b')[::-1]}:{','.join(x)}" for i, x in enumerate(self.s)
        )
        base = f"t={bits} s={leaves}"
        return base if self.em is None else f"{base} {self.em.state()}"


KINDS = {"ncounter": NCounter, "nstack": NStack, "elim": ElimTree}


def make_machine(kind: str, **params):
    if kind == "ncounter":
        return NCounter(params.get("N", 2))
    if kind == "nstack":
        return NStack(params.get("N", 2), params.get("instrumented", True))
    if kind == "elim":
        return ElimTree(params.get("depth", 2), params.get("instrumented", True))
    raise ValueError(f"unknown structure {kind!r}; choose from {sorted(KINDS)}")


# -- records ------------------------------------------------------------------------------


@dataclass
class ExecutionRecord:
    kind: str
    params: dict
    ops: tuple[Op, ...]
    schedule: tuple[str, ...] = ()
    steps: list[tuple[int, str, int, str]] = field(default_factory=list)
    t1: dict[str, int] = field(default_factory=dict)
    t2: dict[str, int] = field(default_factory=dict)
    responses: dict[str, str] = field(default_factory=dict)
    leaf: dict[str, int] = field(default_factory=dict)
    emitted: list[tuple[str, str, str]] | None = None
    residue: list[list[tuple[str, str, str]]] | None = None
    seed: int | None = None
    stuck: str | None = None

    @property
    def clock(self) -> int:
        return len(self.schedule)

    @property
    def complete(self) -> bool:
        return len(self.t2) == len(self.ops)

    @property
    def trace(self) -> OperationalTrace:
        return linearized_trace(self)

    def states(self) -> list[str]:
        return [s for *_, s in self.steps]

    def to_text(self) -> str:
        head = " ".join(f"{k}={v}" for k, v in self.params.items())
        lines = [f"run {self.kind} {head} seed={'-' if self.seed is None else self.seed}"]
        for k, op, atomic, state in self.steps:
            lines.append(f"step {k} op={op} atomic={atomic} state={state}")
        lines.append("trace " + str(self.trace))
        if self.emitted is not None:
            lines.append("spec " + str(emitted_spec(self)))
        if self.stuck:
            lines.append(f"stuck {self.stuck}")
        return "\n".join(lines) + "\n"


class _Run:
    """Machine plus per-op bookkeeping; cheap to clone for schedule search."""

    __slots__ = ("m", "ops", "by_id", "phase", "local", "t1", "t2", "resp", "clock", "sched")

    def __init__(self, machine, ops: Sequence[Op]):
        self.m = machine
        self.ops = tuple(ops)
        self.by_id = {o.id: o for o in ops}
        if len(self.by_id) != len(self.ops):
            raise ScheduleError("duplicate op id")
        for o in ops:
            if o.method not in machine.methods:
                raise ScheduleError(f"{machine.kind} has no method {o.method!r}")
        self.phase = {o.id: 0 for o in ops}
        self.local: dict[str, dict] = {o.id: {} for o in ops}
        self.t1: dict[str, int] = {}
        self.t2: dict[str, int] = {}
        self.resp: dict[str, str] = {}
        self.clock = 0
        self.sched: list[str] = []

    def clone(self) -> _Run:
        r = _Run.__new__(_Run)
        r.m = self.m.clone()
        r.ops, r.by_id = self.ops, self.by_id
        r.phase = dict(self.phase)
        r.local = {k: {kk: (list(vv) if isinstance(vv, list) else vv) for kk, vv in v.items()} for k, v in self.local.items()}
        r.t1, r.t2, r.resp = dict(self.t1), dict(self.t2), dict(self.resp)
        r.clock = self.clock
        r.sched = list(self.sched)
        return r

    def enabled(self) -> list[str]:
        return [o.id for o in self.ops if self.phase[o.id] < self.m.steps(o)]

    def step(self, oid: str) -> int:
        if oid not in self.by_id:
            raise ScheduleError(f"unknown op {oid!r}")
        op = self.by_id[oid]
        k = self.phase[oid]
        if k >= self.m.steps(op):
            raise ScheduleError(f"op {oid!r} already finished")
        v = self.m.atomic(op, k, self.local[oid])
        if k == 0:
            self.t1[oid] = self.clock
        if k == self.m.steps(op) - 1:
            self.t2[oid] = self.clock
            self.resp[oid] = v
        self.phase[oid] = k + 1
        self.clock += 1
        self.sched.append(oid)
        return k + 1

    def record(self, steps=None, seed=None, stuck=None) -> ExecutionRecord:
        em = getattr(self.m, "em", None)
        return ExecutionRecord(
            kind=self.m.kind,
            params=self.m.params(),
            ops=self.ops,
            schedule=tuple(self.sched),
            steps=steps if steps is not None else [],
            t1=dict(self.t1),
            t2=dict(self.t2),
            responses=dict(self.resp),
            leaf={k: v["i"] for k, v in self.local.items() if "i" in v},
            emitted=None if em is None else list(em.printed),
            residue=None if em is None else [list(x) for x in em.q],
            seed=seed,
            stuck=stuck,
        )


def _params(kind: str, params: dict | None) -> dict:
    return dict(params or {})


def run_schedule(kind: str, params: dict | None, ops: Sequence[Op], schedule: Sequence[str], *, seed: int | None = None) -> ExecutionRecord:
    """Execute ``schedule`` step by step; raises :class:`StuckOp` on an empty-leaf pop."""
    run = _Run(make_machine(kind, **_params(kind, params)), ops)
    steps = []
    for oid in schedule:
        atomic = run.step(oid)
        steps.append((run.clock - 1, oid, atomic, run.m.state()))
    return run.record(steps, seed)


def enumerate_schedules(
    kind: str,
    params: dict | None,
    ops: Sequence[Op],
    bound: int = DEFAULT_STEP_BOUND,
    *,
    on_step: Callable[[object, _Run], None] | None = None,
    symmetric: bool = False,
    keep_states: bool = False,
) -> Iterator[ExecutionRecord]:
    """Every interleaving of the ops' atomic sections, run deterministically.

    Schedules that hit an empty-leaf pop are dropped. ``on_step`` sees the
    machine after every atomic step (shared prefixes are visited once).
    With ``symmetric`` set, ops with equal method start in id order; this
    keeps one representative per renaming of equal-method ops.
    """
    machine = make_machine(kind, **_params(kind, params))
    total = sum(machine.steps(o) for o in ops)
    if total > bound:
        raise BoundExceeded(f"{total} atomic steps exceed bound {bound}")
    root = _Run(machine, ops)
    first_of: dict[str, str | None] = {}
    if symmetric:
        last: dict[str, str] = {}
        for o in ops:
            first_of[o.id] = last.get(o.method)
            last[o.method] = o.id

    def go(run: _Run, steps) -> Iterator[ExecutionRecord]:
        en = run.enabled()
        if not en:
            yield run.record(list(steps) if keep_states else [])
            return
        for oid in en:
            if symmetric and run.phase[oid] == 0:
                prev = first_of[oid]
                if prev is not None and run.phase[prev] == 0:
                    continue
            nxt = run.clone() if len(en) > 1 else run
            try:
                atomic = nxt.step(oid)
            except StuckOp:
                continue
            if on_step is not None:
                on_step(nxt.m, nxt)
            if keep_states:
                steps.append((nxt.clock - 1, oid, atomic, nxt.m.state()))
            yield from go(nxt, steps)
            if keep_states:
                steps.pop()

    yield from go(root, [])


def elim_tree_run(depth: int, ops: Sequence[Op], schedule: Sequence[str], *, instrumented: bool = True) -> ExecutionRecord:
    return run_schedule("elim", {"depth": depth, "instrumented": instrumented}, ops, schedule)


# -- extraction -------------------------------------------------------------------------------


def linearized_trace(r: ExecutionRecord) -> OperationalTrace:
    """Calls ordered by first atomic, returns by last atomic, on one clock."""
    by_id = {o.id: o for o in r.ops}
    timed = []
    for oid, t in r.t1.items():
        o = by_id[oid]
        timed.append((t, (Pol.CALL, o.label, oid, None)))
    for oid, t in r.t2.items():
        o = by_id[oid]
        timed.append((t, (Pol.RET, Label(o.method, r.responses[oid]), f"{oid}!", oid)))
    timed.sort(key=lambda x: x[0])
    return OperationalTrace.from_sequence([it for _, it in timed])


def emitted_spec(r: ExecutionRecord) -> SequentialTrace:
    """The printed actions as an alternating spec (stalled residue is left out)."""
    if r.emitted is None:
        raise TraceError("record has no emitter")
    items = []
    for kind, oid, value in r.emitted:
        if kind == "push":
            items.append((Pol.CALL, Label("push", value), oid, None))
            items.append((Pol.RET, Label("push", UNIT), f"{oid}!", oid))
        else:
            items.append((Pol.CALL, Label("pop"), oid, None))
            items.append((Pol.RET, Label("pop", value), f"{oid}!", oid))
    return SequentialTrace.from_sequence(items)


def properly_popped(r: ExecutionRecord) -> tuple[bool, tuple[str, str] | None]:
    """No pop overtakes a push on its leaf: t1(push) < t1(pop) implies t2(push) < t2(pop)."""
    inf = float("inf")
    pushes = [o for o in r.ops if o.method == "push" and o.id in r.leaf]
    pops = [o for o in r.ops if o.method == "pop" and o.id in r.leaf]
    for a in pushes:
        for b in pops:
            if r.leaf[a.id] != r.leaf[b.id]:
                continue
            if r.t1[a.id] < r.t1[b.id] and not r.t2.get(a.id, inf) < r.t2.get(b.id, inf):
                return False, (a.id, b.id)
    return True, None


def queue_chains(queue: Sequence[tuple[str, str, str]], width: int) -> int:
    """Maximal runs of one queue that the emitter prints without leaving it."""
    if not queue:
        return 0
    if width == 1:
        return 1
    runs = 1
    for prev, cur in zip(queue, list(queue)[1:]):
        if prev[0] == cur[0]:
            runs += 1
    return runs


def chain_counts(machine) -> int:
    em = getattr(machine, "em", None)
    if em is None:
        raise TraceError("machine is not instrumented")
    return sum(queue_chains(q, em.width) for q in em.q)


# -- thread mode -----------------------------------------------------------------------------------


def _would_stick(machine, op: Op, k: int, local: dict) -> bool:
    return op.method == "pop" and k == machine.steps(op) - 1 and not machine.s[local["i"]]


def run_threaded(kind: str, params: dict | None, ops: Sequence[Op], seed: int = 0, *, jitter: float = 0.0) -> ExecutionRecord:
    """Run every op on its own thread; atomic sections hold one global lock.

    Timestamps are taken inside the lock, so the record validates exactly
    like a simulated one. Pop ops that would hit an empty leaf wait and retry.
    """
    run = _Run(make_machine(kind, **_params(kind, params)), ops)
    lock = threading.Lock()
    rng = random.Random(seed)
    delays = {o.id: [rng.random() * jitter for _ in range(run.m.steps(o))] for o in ops}
    errors: list[BaseException] = []

    def worker(op: Op) -> None:
        try:
            for k in range(run.m.steps(op)):
                if delays[op.id][k]:
                    time.sleep(delays[op.id][k])
                while True:
                    with lock:
                        if not _would_stick(run.m, op, k, run.local[op.id]):
                            run.step(op.id)
                            break
                    time.sleep(0)
        except BaseException as exc:  # pragma: no cover - surfaced below
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(o,)) for o in ops]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout=30)
    if errors:
        raise errors[0]
    return run.record(seed=seed)
