"""Speculative flat-combining proxy around a sequential object.

Requesters register a ticket in ``called`` and wait. A single service
agent repeatedly either *consumes* a called ticket (moving it to
``received`` and executing an oracle-predicted invocation, whose response
goes to ``executed``) or *delivers* an invocation present in both
``received`` and ``executed`` (pairing one ticket with one response and
signalling it). The nondeterministic choice is externalized as a service
schedule so every run is reproducible.
"""

from __future__ import annotations

import itertools
import random
import threading
from collections import Counter, defaultdict
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

from .objects import IllegalInvocation, SequentialObject
from .trace import Label, OperationalTrace, Pol, SequentialTrace, TraceError

__all__ = [
    "Consume",
    "Deliver",
    "FifoOracle",
    "Proxy",
    "ProxyError",
    "ProxyRun",
    "ProxyState",
    "RandomOracle",
    "ReplayOracle",
    "Request",
    "Ticket",
    "derive_schedule",
    "parse_service_schedule",
    "random_schedule",
    "replay_oracle",
    "run_proxy",
    "run_threaded_proxy",
]


class ProxyError(TraceError):
    """Illegal service step, exhausted oracle or stuck schedule."""


class Ticket:
    """Single-use completion signal carrying the response."""

    __slots__ = ("id", "name", "label", "response", "_done")

    def __init__(self, tid: int, name: str, label: Label):
        self.id, self.name, self.label = tid, name, label
        self.response: Label | None = None
        self._done = threading.Event()

    @property
    def signalled(self) -> bool:
        return self._done.is_set()

    def signal(self, response: Label) -> None:
        if self._done.is_set():
            raise ProxyError(f"ticket {self.name} signalled twice")
        self.response = response
        self._done.set()

    def wait(self, timeout: float | None = None) -> Label:
        if not self._done.wait(timeout):
            raise ProxyError(f"ticket {self.name} timed out")
        return self.response

    def __repr__(self) -> str:
        return f"Ticket({self.name}, {self.label})"


@dataclass
class ProxyState:
    called: list[Ticket] = field(default_factory=list)
    received: dict[Label, list[Ticket]] = field(default_factory=lambda: defaultdict(list))
    executed: dict[Label, list[tuple[int, Label]]] = field(default_factory=lambda: defaultdict(list))
    returned: dict[int, Label] = field(default_factory=dict)

    def n_received(self) -> int:
        return sum(map(len, self.received.values()))

    def n_executed(self) -> int:
        return sum(map(len, self.executed.values()))

    def deliverable(self) -> list[Label]:
        return sorted(k for k in self.received if self.received[k] and self.executed.get(k))


# -- service steps ------------------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    name: str
    label: Label


@dataclass(frozen=True)
class Consume:
    ticket: str | None = None  # None: oldest called ticket


@dataclass(frozen=True)
class Deliver:
    ticket: str | None = None  # None: oldest received ticket with this label
    label: Label | None = None
    response: str | None = None  # None: oldest executed response for the label


Step = Request | Consume | Deliver


# -- oracles ---------------------------------------------------------------------------------


class Oracle:
    def predict(self, proxy: Proxy) -> Label:  # pragma: no cover - interface
        raise NotImplementedError


class ReplayOracle(Oracle):
    """Predict the target specification's invocations in order."""

    def __init__(self, target: SequentialTrace):
        self.invocations = [target[c].label for c in target.op_order]
        self.k = 0

    def predict(self, proxy: Proxy) -> Label:
        if self.k >= len(self.invocations):
            raise ProxyError("replay oracle exhausted")
        self.k += 1
        return self.invocations[self.k - 1]


def replay_oracle(target: SequentialTrace) -> ReplayOracle:
    return ReplayOracle(target)


class FifoOracle(Oracle):
    """Execute received invocations in receipt order: plain flat combining."""

    def predict(self, proxy: Proxy) -> Label:
        return proxy.receipt_log[len(proxy.exec_log)]


class RandomOracle(Oracle):
    """Seeded guesses among the earliest not-yet-executed requests.

    The window covers every received request plus ``lookahead`` requests
    that have not arrived yet; only legal invocations whose label is still
    owed by the request stream are proposed.
    """

    def __init__(self, seed: int, stream: Sequence[Label], lookahead: int = 2):
        self.rng = random.Random(seed)
        self.stream = list(stream)
        self.lookahead = lookahead

    def predict(self, proxy: Proxy) -> Label:
        done = len(proxy.exec_log)
        window = Counter(self.stream[: len(proxy.receipt_log) + self.lookahead])
        window.subtract(Counter(inv for inv, _ in proxy.exec_log))
        cands = sorted(lab for lab, n in window.items() if n > 0 and proxy.can_execute(lab))
        if not cands:
            raise ProxyError(f"random oracle has no legal prediction after {done} executions")
        return self.rng.choice(cands)


# -- the proxy --------------------------------------------------------------------------------


class Proxy:
    def __init__(self, obj: SequentialObject, oracle: Oracle, *, causal_guard: bool = False):
        self.obj, self.oracle, self.causal_guard = obj, oracle, causal_guard
        self.obj_state = obj.initial
        self.state = ProxyState()
        self.tickets: dict[str, Ticket] = {}
        self._ids = itertools.count()
        self.items: list[tuple[Pol, Label, str, str | None]] = []
        self.receipt_log: list[Label] = []
        self.exec_log: list[tuple[Label, Label]] = []
        self.exec_owner: dict[int, str] = {}  # exec index -> ticket name
        self.log: list[str] = []
        self._push_credit: Counter = Counter()
        self.lock = threading.RLock()

    # requester side
    def request(self, label: Label, name: str | None = None) -> Ticket:
        with self.lock:
            name = name or f"t{len(self.tickets)}"
            if name in self.tickets:
                raise ProxyError(f"duplicate request name {name!r}")
            t = Ticket(next(self._ids), name, label)
            self.tickets[name] = t
            self.state.called.append(t)
            self.items.append((Pol.CALL, label, name, None))
            self.log.append(f"proxy request {name} {label}")
            return t

    # service side
    def can_execute(self, inv: Label) -> bool:
        if not self.obj.legal(self.obj_state, inv):
            return False
        if self.causal_guard and inv.method in self.obj.takes:
            resp, _ = self.obj.run(self.obj_state, inv)
            return self._push_credit[resp.payload] > 0
        return True

    def consume(self, ticket: str | None = None) -> tuple[Label, Label]:
        with self.lock:
            called = self.state.called
            if not called:
                raise ProxyError("consume with nothing called")
            if ticket is None:
                t = called[0]
            else:
                matches = [c for c in called if c.name == ticket]
                if not matches:
                    raise ProxyError(f"ticket {ticket!r} is not in called")
                t = matches[0]
            at = called.index(t)
            called.remove(t)
            self.state.received[t.label].append(t)
            self.receipt_log.append(t.label)
            gives = t.label.payload if t.label.method in self.obj.valued else None
            if gives is not None:
                self._push_credit[gives] += 1
            try:
                inv = self.oracle.predict(self)
                resp, nxt = self.obj.run(self.obj_state, inv)
                if self.causal_guard and inv.method in self.obj.takes and self._push_credit[resp.payload] <= 0:
                    raise ProxyError(f"causal guard: no received push of {resp.payload!r}")
            except (ProxyError, IllegalInvocation) as exc:
                called.insert(at, t)
                self.state.received[t.label].remove(t)
                self.receipt_log.pop()
                if gives is not None:
                    self._push_credit[gives] -= 1
                if isinstance(exc, IllegalInvocation):
                    raise ProxyError(f"prediction is illegal: {exc}") from None
                raise
            if self.causal_guard and inv.method in self.obj.takes:
                self._push_credit[resp.payload] -= 1
            self.obj_state = nxt
            self.state.executed[inv].append((len(self.exec_log), resp))
            self.exec_log.append((inv, resp))
            self.log.append(f"proxy consume {t.name} predict={inv} response={resp.payload}")
            self._check()
            return inv, resp

    def deliver(self, ticket: str | None = None, label: Label | None = None, response: str | None = None) -> Label:
        with self.lock:
            st = self.state
            if ticket is not None:
                t = self.tickets.get(ticket)
                if t is None or t not in st.received.get(t.label, []):
                    raise ProxyError(f"ticket {ticket!r} is not received")
                label = t.label
            elif label is None:
                ready = st.deliverable()
                if not ready:
                    raise ProxyError("deliver with nothing deliverable")
                label = ready[0]
            entries = st.executed.get(label, [])
            if not st.received.get(label) or not entries:
                raise ProxyError(f"{label} is not both received and executed")
            if ticket is None:
                t = st.received[label][0]
            pick = next((e for e in entries if response is None or e[1].payload == response), None)
            if pick is None:
                raise ProxyError(f"no executed {label} with response {response!r}")
            st.received[label].remove(t)
            entries.remove(pick)
            idx, resp = pick
            st.returned[t.id] = resp
            self.exec_owner[idx] = t.name
            t.signal(resp)
            # the woken requester takes its response right away
            st.returned.pop(t.id)
            self.items.append((Pol.RET, resp, f"{t.name}!", t.name))
            self.log.append(f"proxy deliver {t.name} response={resp.payload}")
            self._check()
            return resp

    def _check(self) -> None:
        st = self.state
        if st.n_received() != st.n_executed():
            raise AssertionError("received/executed sizes diverged")
        if len(st.returned) > st.n_received():
            raise AssertionError("more returned than received")

    def apply(self, step: Step) -> None:
        if isinstance(step, Request):
            self.request(step.label, step.name)
        elif isinstance(step, Consume):
            self.consume(step.ticket)
        elif isinstance(step, Deliver):
            self.deliver(step.ticket, step.label, step.response)
        else:
            raise ProxyError(f"unknown step {step!r}")

    # observations
    def trace(self) -> OperationalTrace:
        return OperationalTrace.from_sequence(self.items)

    def executed_spec(self) -> SequentialTrace:
        """What the object actually ran, named by the ticket each response went to."""
        taken = set(self.tickets) | {f"{n}!" for n in self.tickets}
        fresh = (f"x{k}" for k in itertools.count())
        items = []
        for idx, (inv, resp) in enumerate(self.exec_log):
            name = self.exec_owner.get(idx)
            if name is None:
                name = next(n for n in fresh if n not in taken and f"{n}!" not in taken)
            items.append((Pol.CALL, inv, name, None))
            items.append((Pol.RET, resp, f"{name}!", name))
        return SequentialTrace.from_sequence(items)

    def pending(self) -> list[str]:
        return [n for n, t in self.tickets.items() if not t.signalled]


@dataclass
class ProxyRun:
    proxy: Proxy
    steps: list[Step]
    trace: OperationalTrace
    spec: SequentialTrace
    stuck: str | None = None
    seed: int | None = None

    def to_text(self) -> str:
        lines = [f"run proxy object={self.proxy.obj.name} seed={'-' if self.seed is None else self.seed}"]
        lines += [f"step {k} {line}" for k, line in enumerate(self.proxy.log)]
        lines.append("trace " + str(self.trace))
        lines.append("spec " + str(self.spec))
        if self.stuck:
            lines.append(f"stuck {self.stuck}")
        return "\n".join(lines) + "\n"


def run_proxy(
    obj: SequentialObject,
    requests: Sequence[tuple[str, Label]] | None,
    oracle: Oracle,
    service_schedule: Iterable[Step] | None = None,
    *,
    causal_guard: bool = False,
    seed: int | None = None,
) -> ProxyRun:
    """Drive the proxy through an explicit schedule, or a seeded random one.

    With an explicit schedule, ``requests`` may be ``None``: the schedule's
    ``Request`` steps carry them. A seeded run needs ``requests`` and
    raises :class:`ProxyError` if no legal step remains while tickets wait.
    """
    proxy = Proxy(obj, oracle, causal_guard=causal_guard)
    done: list[Step] = []
    stuck = None
    if service_schedule is not None:
        for step in service_schedule:
            proxy.apply(step)
            done.append(step)
    else:
        if requests is None:
            raise ProxyError("a seeded run needs a request list")
        rng = random.Random(seed)
        for step in random_schedule(proxy, list(requests), rng):
            done.append(step)
        if proxy.pending():
            stuck = f"pending tickets {proxy.pending()}"
    return ProxyRun(proxy, done, proxy.trace(), proxy.executed_spec(), stuck, seed)


def random_schedule(proxy: Proxy, requests: list[tuple[str, Label]], rng: random.Random):
    """Apply random legal steps until every request is answered or none is enabled."""
    queue = list(requests)
    while True:
        options: list[Step] = []
        if queue:
            options.append(Request(*queue[0]))
        if proxy.state.called:
            options.append(Consume(rng.choice(proxy.state.called).name))
        for lab in proxy.state.deliverable():
            options.append(Deliver(label=lab))
        if not options:
            return
        rng.shuffle(options)
        for step in options:
            try:
                proxy.apply(step)
            except ProxyError:
                continue
            if isinstance(step, Request):
                queue.pop(0)
            yield step
            break
        else:
            return


def derive_schedule(alpha: OperationalTrace) -> list[Step]:
    """Each call arrives and is consumed at once; each return is delivered with its value."""
    steps: list[Step] = []
    for n in alpha.arrangement:
        e = alpha[n]
        if e.pol is Pol.CALL:
            steps += [Request(n, e.label), Consume(n)]
        else:
            steps.append(Deliver(ticket=e.brak, response=e.label.payload))
    return steps


def parse_service_schedule(text: str) -> list[Step]:
    """``req:a=inc() consume:a deliver:a:0`` style tokens."""
    out: list[Step] = []
    for tok in text.replace(",", " ").split():
        head, _, rest = tok.partition(":")
        if head == "req":
            name, _, call = rest.partition("=")
            method, _, arg = call.partition("(")
            out.append(Request(name, Label(method, arg.rstrip(")"))))
        elif head == "consume":
            out.append(Consume(rest or None))
        elif head == "deliver":
            name, _, resp = rest.partition(":")
            out.append(Deliver(ticket=name or None, response=resp or None))
        else:
            raise ProxyError(f"bad service step {tok!r}")
    return out


def run_threaded_proxy(
    obj: SequentialObject,
    requests: Sequence[tuple[str, Label]],
    oracle_factory: Callable[[Sequence[Label]], Oracle],
    seed: int = 0,
    timeout: float = 10.0,
) -> ProxyRun:
    """One thread per requester plus one service thread."""
    stream = [lab for _, lab in requests]
    proxy = Proxy(obj, oracle_factory(stream))
    rng = random.Random(seed)
    arrived = threading.Semaphore(0)
    errors: list[BaseException] = []

    def requester(name: str, label: Label) -> None:
        try:
            t = proxy.request(label, name)
            arrived.release()
            t.wait(timeout)
        except BaseException as exc:  # pragma: no cover
            errors.append(exc)

    def service() -> None:
        answered = 0
        try:
            while answered < len(requests):
                with proxy.lock:
                    options = []
                    if proxy.state.called:
                        options.append("consume")
                    if proxy.state.deliverable():
                        options.append("deliver")
                    if options:
                        if rng.choice(options) == "consume":
                            proxy.consume(rng.choice(proxy.state.called).name)
                        else:
                            proxy.deliver(label=rng.choice(proxy.state.deliverable()))
                            answered += 1
                        continue
                arrived.acquire(timeout=timeout)
        except BaseException as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=requester, args=r) for r in requests]
    svc = threading.Thread(target=service)
    svc.start()
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout)
    svc.join(timeout)
    if errors:
        raise errors[0]
    return ProxyRun(proxy, [], proxy.trace(), proxy.executed_spec(), None, seed)
