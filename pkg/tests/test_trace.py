import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qqc import COUNTER, Event, Label, OperationalTrace, Pol, SequentialTrace, TraceError, from_tokens, gen_spec, parse_trp1
from qqc.trace import (
    BoundExceeded,
    InvalidTrace,
    TokenError,
    down_closure,
    extend_to,
    extensions,
    find_renaming,
    format_trp1,
    interleavings,
    is_quiescent,
    open_calls,
    permeq,
    permlt,
    po_difference,
    prefix_sets,
    validate,
)

from conftest import arrangements, random_arrangement, realise


def expected_order(arr: list[tuple[Pol, str]]) -> set[tuple[str, str]]:
    """Interval-order reading of an arrangement, computed pairwise."""
    out = set()
    for i, j in itertools.combinations(range(len(arr)), 2):
        (pa, a), (pb, b) = arr[i], arr[j]
        between = {p for p, _ in arr[i + 1 : j]}
        if pa != pb:
            out.add((a, b))
        elif pa is Pol.CALL and Pol.RET in between:
            out.add((a, b))
        elif pa is Pol.RET and Pol.CALL in between:
            out.add((a, b))
    return out


@st.composite
def op_traces(draw, max_ops=4, partial=True):
    n = draw(st.integers(1, max_ops))
    methods = draw(st.lists(st.sampled_from(["inc", "dec"]), min_size=n, max_size=n))
    spec = gen_spec(COUNTER, methods)
    seed = draw(st.integers(0, 10**6))
    arr = random_arrangement(n, random.Random(seed))
    if partial:
        cut = draw(st.integers(0, len(arr)))
        arr = arr[:cut] if cut else arr
    return realise(spec, arr) if len(arr) == 2 * n else _partial(spec, arr)


def _partial(spec, arr):
    ops = spec.op_order
    items = []
    for k, is_ret in arr:
        c = ops[k]
        name = spec.ops[c] if is_ret else c
        e = spec[name]
        items.append((e.pol, e.label, name, e.brak))
    return OperationalTrace.from_sequence(items)


class TestHomomorphism:
    def test_order_matches_interval_reading_for_all_three_op_arrangements(self):
        spec = gen_spec(COUNTER, ["inc"] * 3)
        for arr in arrangements(3):
            t = realise(spec, arr)
            seq = [(t[n].pol, n) for n in t.arrangement]
            got = {(p, e.name) for e in t for p in e.preds}
            assert got == expected_order(seq)

    def test_overlapping_calls_unordered(self):
        t = from_tokens("?a=inc() ?b=inc() !a:0 !b:1")
        assert not t.lt("a", "b") and not t.lt("b", "a")
        assert t.lt("a", "a!") and t.lt("b", "a!")
        assert not t.lt("a!", "b!")

    def test_sequential_is_total(self):
        s = from_tokens("?a=inc() !a:0 ?b=inc() !b:1", cls=SequentialTrace)
        assert s.is_sequential()
        assert s.op_order == ("a", "b")
        assert s.index() == {"a": 1, "b": 2}

    @settings(max_examples=150, deadline=None)
    @given(op_traces())
    def test_generated_traces_validate_and_are_operational(self, t):
        assert validate(t).ok
        assert t.is_operational()


class TestValidation:
    def test_dangling_bracket(self):
        e = Event(Pol.RET, Label("inc", "0"), "a!", frozenset(), "a")
        rep = validate([e])
        assert 3 in rep.conditions

    def test_calls_ordered_without_return_between(self):
        a = Event(Pol.CALL, Label("inc"), "a")
        b = Event(Pol.CALL, Label("inc"), "b", frozenset({"a"}))
        assert 4 in validate([a, b]).conditions

    def test_returns_ordered_without_call_between(self):
        a = Event(Pol.CALL, Label("inc"), "a")
        b = Event(Pol.CALL, Label("inc"), "b")
        ra = Event(Pol.RET, Label("inc", "0"), "a!", frozenset({"a", "b"}), "a")
        rb = Event(Pol.RET, Label("inc", "1"), "b!", frozenset({"a", "b", "a!"}), "b")
        assert 5 in validate([a, b, ra, rb]).conditions

    def test_not_transitive(self):
        a = Event(Pol.CALL, Label("inc"), "a")
        ra = Event(Pol.RET, Label("inc", "0"), "a!", frozenset({"a"}), "a")
        b = Event(Pol.CALL, Label("inc"), "b", frozenset({"a!"}))
        assert 6 in validate([a, ra, b]).conditions

    def test_invalid_trace_raises(self):
        e = Event(Pol.CALL, Label("inc"), "a", frozenset({"a"}))
        with pytest.raises(InvalidTrace):
            OperationalTrace([e])

    def test_arrangement_must_respect_order(self):
        t = from_tokens("?a=inc() !a:0 ?b=inc() !b:1")
        with pytest.raises(TraceError):
            OperationalTrace(t, ["b", "b!", "a", "a!"])

    def test_sequential_alternation(self):
        with pytest.raises(TraceError):
            from_tokens("?a=inc() ?b=inc() !a:0 !b:1", cls=SequentialTrace)


class TestFormats:
    def test_tokens_round_trip(self):
        src = "?c=inc() ?b=inc() !b:1 ?a=inc() !a:0 !c:2"
        t = from_tokens(src)
        assert str(t) == src
        assert from_tokens(str(t)) == t

    def test_bare_return_means_unit(self):
        t = from_tokens("?a=push(a) !a")
        assert t["a!"].label == Label("push", "()")

    def test_bad_token(self):
        with pytest.raises(TokenError):
            from_tokens("?a=inc( !a:0")

    def test_unknown_return(self):
        with pytest.raises(TraceError):
            from_tokens("!a:0")

    @settings(max_examples=100, deadline=None)
    @given(op_traces())
    def test_trp1_round_trip(self, t):
        back = parse_trp1(format_trp1(t))
        assert back == t

    def test_trp1_comments_and_errors(self):
        text = "# two events\nevent a call inc() pred=- brak=-\nevent a! ret inc(0) pred=a brak=a\n"
        t = parse_trp1(text)
        assert set(t.names) == {"a", "a!"}
        with pytest.raises(TokenError):
            parse_trp1("event a call inc()")
        with pytest.raises(TokenError):
            parse_trp1("event a call inc() pred=- brak=-\nevent a call inc() pred=- brak=-")


class TestAlgebra:
    def test_open_calls_and_quiescence(self):
        t = from_tokens("?a=inc() ?b=inc() !a:0")
        assert open_calls(t) == {"b"}
        assert not is_quiescent(t)
        assert is_quiescent(from_tokens("?a=inc() !a:0"))

    @settings(max_examples=60, deadline=None)
    @given(op_traces(max_ops=3))
    def test_prefix_sets_match_brute_force(self, t):
        names = sorted(t.names)
        brute = {
            frozenset(s)
            for k in range(len(names) + 1)
            for s in itertools.combinations(names, k)
            if all(t[n].preds <= set(s) for n in s)
        }
        got = list(prefix_sets(t))
        assert len(got) == len(set(got))
        assert set(got) == brute

    def test_prefix_bound(self):
        t = from_tokens(" ".join(f"?a{k}=inc() !a{k}:{k}" for k in range(9)))
        with pytest.raises(BoundExceeded):
            next(prefix_sets(t, bound=16))

    def test_down_closure(self):
        t = from_tokens("?a=inc() !a:0 ?b=inc() !b:1")
        assert down_closure(t, "b") == {"a", "a!", "b"}

    def test_perm_relations(self):
        s = from_tokens("?a=inc() !a:0 ?b=inc() !b:1", cls=SequentialTrace)
        t = from_tokens("?a=inc() ?b=inc() !b:1 !a:0")
        assert permeq(s, t)
        assert permlt(from_tokens("?a=inc() !a:0"), t)
        assert not permeq(s, from_tokens("?a=inc() !a:0"))

    def test_find_renaming(self):
        t1 = from_tokens("?a=inc() ?b=inc() !b:1 !a:0")
        t2 = from_tokens("?x=inc() ?y=inc() !y:1 !x:0")
        rho = find_renaming(t1, t2)
        assert rho is not None
        assert {e.renamed(rho) for e in t1} == set(t2)
        assert find_renaming(t1, from_tokens("?x=inc() !x:0 ?y=inc() !y:1")) is None

    def test_po_difference_removes_an_operation(self):
        t = from_tokens("?a=inc() ?b=inc() !b:1 !a:0")
        d = po_difference(t, {"b", "b!"})
        assert d == from_tokens("?a=inc() !a:0")
        with pytest.raises(TraceError):
            po_difference(t, {"b!"})

    def test_extensions_close_open_calls(self):
        spec = gen_spec(COUNTER, ["inc", "inc"])
        partial = from_tokens("?a=inc() ?b=inc() !a:0")
        exts = list(extensions(partial, spec))
        assert exts and all(is_quiescent(e) and permeq(e, spec) for e in exts)
        assert extend_to(partial, spec) in exts

    def test_interleavings_count(self):
        s1 = gen_spec(COUNTER, ["inc", "inc"])
        s2 = gen_spec(COUNTER, ["dec"])
        out = list(interleavings(s1, s2))
        assert len(out) == 3
        assert len({tuple(o.arrangement) for o in out}) == 3
