import itertools
from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qqc import COUNTER, QUEUE, STACK, Label, SequentialTrace, from_tokens, gen_spec, get_object, is_spec
from qqc.objects import IllegalInvocation, op_names, replay
from qqc.trace import validate


def ref_counter(methods):
    x, out = 0, []
    for m in methods:
        if m == "inc":
            out.append(x)
            x += 1
        else:
            x -= 1
            out.append(x)
    return out


def test_counter_matches_reference_integer_on_all_short_sequences():
    for n in range(7):
        for methods in itertools.product(("inc", "dec"), repeat=n):
            resps, final = replay(COUNTER, [Label(m) for m in methods])
            assert [int(r.payload) for r in resps] == ref_counter(methods)
            assert final == methods.count("inc") - methods.count("dec")


def _legal_sequences(n, push, pop):
    for kinds in itertools.product((push, pop), repeat=n):
        yield [Label(push, str(k)) if m == push else Label(pop) for k, m in enumerate(kinds)]


def _ref_run(invs, container, take):
    out = []
    for inv in invs:
        if inv.payload:
            container.append(inv.payload)
            out.append("()")
        elif not container:
            return None
        else:
            out.append(take(container))
    return out


def test_queue_is_fifo_on_all_sequences_up_to_six():
    for n in range(7):
        for invs in _legal_sequences(n, "enq", "deq"):
            want = _ref_run(invs, deque(), deque.popleft)
            try:
                got = [r.payload for r in replay(QUEUE, invs)[0]]
            except IllegalInvocation:
                got = None
            assert got == want


def test_stack_is_lifo_on_all_sequences_up_to_six():
    for n in range(7):
        for invs in _legal_sequences(n, "push", "pop"):
            want = _ref_run(invs, [], list.pop)
            try:
                got = [r.payload for r in replay(STACK, invs)[0]]
            except IllegalInvocation:
                got = None
            assert got == want


@settings(max_examples=80, deadline=None)
@given(st.lists(st.sampled_from(["inc", "dec"]), max_size=8))
def test_gen_spec_output_is_a_valid_spec(methods):
    s = gen_spec(COUNTER, methods)
    assert validate(s).ok
    assert is_spec(s, COUNTER)


def test_gen_spec_names_and_doc_example():
    assert str(gen_spec(COUNTER, ["inc", "inc"])) == "?a=inc() !a:0 ?b=inc() !b:1"
    s = gen_spec(STACK, [Label("push", "x"), Label("pop")], ["p", "q"])
    assert str(s) == "?p=push(x) !p:() ?q=pop() !q:x"
    with pytest.raises(ValueError):
        gen_spec(COUNTER, ["inc"], ["a", "b"])


def test_is_spec_rejects_wrong_response_and_illegal_pop():
    bad = from_tokens("?a=inc() !a:1", cls=SequentialTrace)
    assert not is_spec(bad, COUNTER)
    assert not is_spec(from_tokens("?a=pop() !a:x", cls=SequentialTrace), STACK)
    assert not is_spec(from_tokens("?a=inc() ?b=inc() !a:0 !b:1"), COUNTER)


def test_registry():
    assert get_object("queue") is QUEUE
    with pytest.raises(ValueError):
        get_object("heap")
    with pytest.raises(IllegalInvocation):
        COUNTER.run(0, Label("push", "a"))
    assert op_names(28)[:3] == ["a", "b", "c"] and op_names(28)[26] == "op26"
