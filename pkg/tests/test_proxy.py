import random

import pytest

from qqc import COUNTER, STACK, Label, SequentialTrace, from_tokens, gen_spec, lin_counting, qqc_counting
from qqc.proxy import (
    Consume,
    Deliver,
    FifoOracle,
    Proxy,
    ProxyError,
    RandomOracle,
    ReplayOracle,
    Request,
    Ticket,
    derive_schedule,
    parse_service_schedule,
    random_schedule,
    replay_oracle,
    run_proxy,
    run_threaded_proxy,
)
from qqc.trace import validate

from conftest import legal_requests

NONCAUSAL = "req:c=push(c) consume:c req:g=pop() consume:g deliver:g req:p=push(a) consume:p deliver:p deliver:c"
NONCAUSAL_SPEC = gen_spec(STACK, [Label("push", "a"), Label("pop"), Label("push", "c")], ["p", "g", "c"])


def test_noncausal_run_is_qqc_but_not_lin():
    r = run_proxy(STACK, None, ReplayOracle(NONCAUSAL_SPEC), parse_service_schedule(NONCAUSAL))
    assert str(r.trace) == "?c=push(c) ?g=pop() !g:a ?p=push(a) !p:() !c:()"
    assert qqc_counting(r.trace, r.spec)
    assert not lin_counting(r.trace, r.spec)
    assert r.proxy.log[1] == "proxy consume c predict=push(a) response=()"


def test_causal_guard_refuses_pop_of_unreceived_value():
    with pytest.raises(ProxyError, match="causal guard"):
        run_proxy(STACK, None, ReplayOracle(NONCAUSAL_SPEC), parse_service_schedule(NONCAUSAL), causal_guard=True)


def test_failed_consume_rolls_back():
    p = Proxy(STACK, ReplayOracle(NONCAUSAL_SPEC), causal_guard=True)
    p.request(Label("pop"), "g")
    p.oracle.k = 1  # next prediction is the pop
    with pytest.raises(ProxyError):
        p.consume("g")
    assert [t.name for t in p.state.called] == ["g"]
    assert p.state.n_received() == p.state.n_executed() == 0
    assert p.receipt_log == [] and p.obj_state == STACK.initial


def test_illegal_prediction_is_reported():
    p = Proxy(STACK, ReplayOracle(from_tokens("?g=pop() !g:x", cls=SequentialTrace)))
    p.request(Label("push", "a"), "a")
    with pytest.raises(ProxyError, match="illegal"):
        p.consume()
    assert p.state.called


def test_received_equals_executed_after_every_step():
    rng = random.Random(1)
    for seed in range(50):
        reqs = legal_requests("stack", 5, rng)
        p = Proxy(STACK, RandomOracle(seed, [lab for _, lab in reqs]))
        for _ in random_schedule(p, reqs, random.Random(seed)):
            assert p.state.n_received() == p.state.n_executed()


def test_fifo_oracle_gives_linearizable_runs():
    rng = random.Random(2)
    for seed in range(200):
        kind = rng.choice(["counter", "stack"])
        obj = COUNTER if kind == "counter" else STACK
        reqs = legal_requests(kind, rng.randint(1, 5), rng)
        r = run_proxy(obj, reqs, FifoOracle(), seed=seed)
        if r.stuck:
            continue
        assert lin_counting(r.trace, r.spec), (str(r.trace), str(r.spec))


def test_random_oracle_runs_are_sound():
    rng = random.Random(3)
    done = 0
    for seed in range(300):
        kind = rng.choice(["counter", "stack"])
        obj = COUNTER if kind == "counter" else STACK
        reqs = legal_requests(kind, rng.randint(1, 6), rng)
        r = run_proxy(obj, reqs, RandomOracle(seed, [lab for _, lab in reqs]), seed=seed)
        assert validate(r.trace).ok
        if r.stuck:
            continue
        done += 1
        assert qqc_counting(r.trace, r.spec), (str(r.trace), str(r.spec))
    assert done > 250


def test_derived_schedule_reproduces_a_qqc_trace():
    alpha = from_tokens("?c=inc() ?b=inc() !b:1 ?a=inc() !a:0 !c:2")
    r = run_proxy(COUNTER, None, replay_oracle(gen_spec(COUNTER, ["inc"] * 3)), derive_schedule(alpha))
    assert r.trace == alpha and r.trace.arrangement == alpha.arrangement


def test_derive_schedule_shape():
    steps = derive_schedule(from_tokens("?a=inc() !a:0"))
    assert steps == [Request("a", Label("inc")), Consume("a"), Deliver(ticket="a", response="0")]


def test_replay_oracle_exhaustion():
    with pytest.raises(ProxyError, match="exhausted"):
        run_proxy(COUNTER, None, ReplayOracle(gen_spec(COUNTER, [])), parse_service_schedule("req:a=inc() consume:a"))


def test_deliver_errors():
    p = Proxy(COUNTER, FifoOracle())
    with pytest.raises(ProxyError):
        p.deliver()
    p.request(Label("inc"), "a")
    with pytest.raises(ProxyError):
        p.deliver("a")
    p.consume()
    with pytest.raises(ProxyError):
        p.deliver("a", response="9")
    assert p.deliver("a") == Label("inc", "0")
    with pytest.raises(ProxyError):
        p.request(Label("inc"), "a")
    with pytest.raises(ProxyError):
        p.consume()


def test_ticket_is_single_use():
    t = Ticket(0, "a", Label("inc"))
    with pytest.raises(ProxyError):
        t.wait(0.01)
    t.signal(Label("inc", "0"))
    assert t.wait(0) == Label("inc", "0")
    with pytest.raises(ProxyError):
        t.signal(Label("inc", "1"))


def test_schedule_parser():
    steps = parse_service_schedule("req:a=push(x), consume:a deliver:a:() deliver consume")
    assert steps == [Request("a", Label("push", "x")), Consume("a"), Deliver("a", None, "()"), Deliver(), Consume()]
    with pytest.raises(ProxyError):
        parse_service_schedule("jump:a")


def test_unexecuted_predictions_get_fresh_names():
    spec = gen_spec(COUNTER, ["inc", "inc"])
    r = run_proxy(COUNTER, None, ReplayOracle(spec), parse_service_schedule("req:a=inc() consume:a"))
    assert r.spec.op_order == ("x0",)
    assert r.proxy.pending() == ["a"]
    assert "stuck" not in r.to_text() and r.to_text().startswith("run proxy object=counter")


def test_seeded_run_reports_stuck_tickets():
    reqs = [("g", Label("pop"))]
    r = run_proxy(STACK, reqs, RandomOracle(0, [Label("pop")]), seed=0)
    assert r.stuck and "g" in r.stuck


def test_threaded_proxy():
    rng = random.Random(4)
    for seed in range(5):
        reqs = legal_requests("counter", 5, rng)
        r = run_threaded_proxy(COUNTER, reqs, lambda s: FifoOracle(), seed=seed)
        assert len(r.trace) == 10
        assert lin_counting(r.trace, r.spec)
