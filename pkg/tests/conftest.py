"""Shared corpora and independent reference oracles for the test suite.

The oracles here work straight from arrangement positions with plain
loops. They share no code with the library checkers.
"""

from __future__ import annotations

import itertools
import random

import pytest

from qqc import COUNTER, Label, OperationalTrace, Pol, SequentialTrace, gen_spec
from qqc.structures import Op, run_schedule


def counter_specs(n: int):
    """Every inc/dec counter spec with exactly n operations."""
    for methods in itertools.product(("inc", "dec"), repeat=n):
        yield gen_spec(COUNTER, list(methods))


def arrangements(n: int):
    """All orders of n call/return pairs with each call before its return.

    Yields tuples of (op index, is_return).
    """

    def go(called, returned, acc):
        if len(returned) == n:
            yield tuple(acc)
            return
        for k in range(n):
            if k not in called:
                yield from go(called | {k}, returned, acc + [(k, False)])
            elif k not in returned:
                yield from go(called, returned | {k}, acc + [(k, True)])

    yield from go(frozenset(), frozenset(), [])


def realise(spec: SequentialTrace, arr) -> OperationalTrace:
    ops = spec.op_order
    items = []
    for k, is_ret in arr:
        c = ops[k]
        n = spec.ops[c] if is_ret else c
        e = spec[n]
        items.append((e.pol, e.label, n, e.brak))
    return OperationalTrace.from_sequence(items)


def random_arrangement(n: int, rng: random.Random):
    called, returned, acc = set(), set(), []
    while len(returned) < n:
        moves = [(k, False) for k in range(n) if k not in called]
        moves += [(k, True) for k in called if k not in returned]
        k, r = rng.choice(sorted(moves))
        (returned if r else called).add(k)
        acc.append((k, r))
    return tuple(acc)


def permutation_corpus(max_ops: int = 3):
    """All distinct operational permutations of counter specs up to max_ops."""
    out = []
    for n in range(1, max_ops + 1):
        for spec in counter_specs(n):
            seen = set()
            for arr in arrangements(n):
                t = realise(spec, arr)
                key = str(t)
                if key not in seen:
                    seen.add(key)
                    out.append((t, spec))
    return out


def sampled_corpus(count: int = 1000, seed: int = 2024, sizes=(4, 5)):
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        n = rng.choice(sizes)
        spec = gen_spec(COUNTER, [rng.choice(("inc", "dec")) for _ in range(n)])
        out.append((realise(spec, random_arrangement(n, rng)), spec))
    return out


def legal_requests(kind: str, n: int, rng: random.Random) -> list[tuple[str, Label]]:
    """A request stream that some sequential order can serve without stalling.

    Counter streams are arbitrary; stack streams pop only while the running
    push count exceeds the pops so far.
    """
    out, depth = [], 0
    for k in range(n):
        if kind == "counter":
            lab = Label(rng.choice(("inc", "dec")))
        elif depth and rng.random() < 0.5:
            lab, depth = Label("pop"), depth - 1
        else:
            lab, depth = Label("push", f"v{k}"), depth + 1
        out.append((f"r{k}", lab))
    return out


def two_counter_run(seed: int, width: int, sizes=(1, 4)):
    """Two inc-only N-counters driven by one random interleaving of their steps.

    Returns the joint trace, the first object's event names and each
    object's spec ordered by returned value.
    """
    rng = random.Random(seed)
    objs = {}
    for tag in "ab":
        ops = tuple(Op(f"{tag}{k}", "inc") for k in range(rng.randint(*sizes)))
        objs[tag] = ops
    joint = [o.id for ops in objs.values() for o in ops for _ in range(2)]
    rng.shuffle(joint)
    timed = []
    specs = []
    for tag, ops in objs.items():
        mine = [k for k, oid in enumerate(joint) if oid[0] == tag]
        rec = run_schedule("ncounter", {"N": width}, ops, [joint[k] for k in mine])
        for o in ops:
            timed.append((mine[rec.t1[o.id]], (Pol.CALL, o.label, o.id, None)))
            timed.append((mine[rec.t2[o.id]], (Pol.RET, Label("inc", rec.responses[o.id]), f"{o.id}!", o.id)))
        order = sorted((o.id for o in ops), key=lambda c: int(rec.responses[c]))
        specs.append(gen_spec(COUNTER, ["inc"] * len(order), order))
    timed.sort(key=lambda x: x[0])
    alpha = OperationalTrace.from_sequence([it for _, it in timed])
    first = {n for n in alpha.names if n.startswith("a")}
    return alpha, first, specs[0], specs[1]


# -- reference oracles (complete traces, identity names) ------------------------------------


def _positions(t: OperationalTrace) -> dict[str, int]:
    return {n: i for i, n in enumerate(t.arrangement)}


def ref_lin(t: OperationalTrace, spec: SequentialTrace) -> bool:
    """Every return-before-call pair keeps its order in the spec."""
    pos, rank = _positions(t), {c: i for i, c in enumerate(spec.op_order)}
    for x, y in itertools.permutations(t.ops, 2):
        if pos[t.ops[x]] < pos[y] and rank[x] > rank[y]:
            return False
    return True


def ref_qqc(t: OperationalTrace, spec: SequentialTrace) -> bool:
    """The j-th spec operation's return has at least j calls before it."""
    pos = _positions(t)
    for j, c in enumerate(spec.op_order, 1):
        r = pos[t.ops[c]]
        if sum(1 for n in t.arrangement[:r] if t[n].pol is Pol.CALL) < j:
            return False
    return True


def ref_qc(t: OperationalTrace, spec: SequentialTrace) -> bool:
    """Operations separated by a quiescent point keep their order."""
    pos, rank = _positions(t), {c: i for i, c in enumerate(spec.op_order)}
    for cut in range(len(t.arrangement) + 1):
        inside = {c for c in t.ops if pos[c] < cut}
        if any(pos[t.ops[c]] >= cut for c in inside):
            continue
        for x in inside:
            for y in set(t.ops) - inside:
                if rank[x] > rank[y]:
                    return False
    return True


# -- acceptance summary ----------------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def perm3():
    return permutation_corpus(3)


@pytest.fixture(scope="session")
def sample45():
    return sampled_corpus()
