import itertools

import pytest

from qqc import COUNTER, Event, Label, Pol, SequentialTrace, Trace, check_compositional, cross_order_lemma, fmerge, from_tokens, gen_spec, lin_counting, qqc_counting, split
from qqc.checkers import Matching
from qqc.compose import CompositionError, LemmaNotApplicable, pair_order
from qqc.trace import TraceError, validate

from conftest import arrangements, realise, two_counter_run

B1 = from_tokens("?1=inc() !1:0 ?2=inc() !2:1 ?3=inc() !3:2", cls=SequentialTrace)
B2 = from_tokens("?8=inc() !8:0 ?5=inc() !5:1 ?6=inc() !6:2", cls=SequentialTrace)
ALPHA1 = from_tokens("?6=inc() ?5=inc() !5:1 ?3=inc() ?8=inc() !8:0 ?2=inc() !2:1 ?1=inc() !1:0 !3:2 !6:2")
ALPHA2 = from_tokens("?6=inc() ?5=inc() !5:1 ?3=inc() ?8=inc() ?2=inc() !2:1 !8:0 !6:2 ?1=inc() !1:0 !3:2")
SIDE1 = {"1", "1!", "2", "2!", "3", "3!"}


def identity(beta):
    return Matching(tuple((c, c) for c in beta.op_order), True)


class TestSplit:
    def test_projection_keeps_arrangement(self):
        p = split(ALPHA1, SIDE1)
        assert str(p.first) == "?3=inc() ?2=inc() !2:1 ?1=inc() !1:0 !3:2"
        assert str(p.second) == "?6=inc() ?5=inc() !5:1 ?8=inc() !8:0 !6:2"
        first, second = p
        assert validate(first).ok and validate(second).ok

    def test_selection_must_be_bracket_closed(self):
        with pytest.raises(TraceError):
            split(ALPHA1, {"1"})
        with pytest.raises(TraceError):
            split(ALPHA1, {"zz"})


class TestCrossOrderLemma:
    @pytest.mark.parametrize("n", [3, 4])
    def test_holds_on_every_operational_trace(self, n):
        spec = gen_spec(COUNTER, ["inc"] * n)
        applied = 0
        for arr in arrangements(n):
            t = realise(spec, arr)
            for x0, x1, y0, y1 in itertools.product(t.ops, repeat=4):
                if x0 == y0:
                    continue
                try:
                    assert cross_order_lemma(t, (x0, x1), (y0, y1))
                    applied += 1
                except LemmaNotApplicable:
                    pass
        assert applied > 0

    def test_needs_operational_traces(self):
        # x1 and y1 each overlap only one of the two returns
        ev = [
            Event(Pol.CALL, Label("inc"), n) for n in ("x0", "y0", "x1", "y1")
        ] + [
            Event(Pol.RET, Label("inc", "0"), "x0!", frozenset({"x0", "y0", "x1"}), "x0"),
            Event(Pol.RET, Label("inc", "1"), "y0!", frozenset({"x0", "y0", "y1"}), "y0"),
        ]
        t = Trace(ev)
        assert not t.lt("x1", "y0!") and not t.lt("y1", "x0!")
        with pytest.raises(LemmaNotApplicable, match="operational"):
            cross_order_lemma(t, ("x0", "x1"), ("y0", "y1"))

    def test_absent_configuration(self):
        t = from_tokens("?a=inc() !a:0 ?b=inc() !b:1")
        with pytest.raises(LemmaNotApplicable):
            cross_order_lemma(t, ("a", "a"), ("b", "b"))


class TestFmerge:
    def test_first_example_interleavings(self):
        got = {" ".join(b.op_order) for b in fmerge(B1, B2, ALPHA1)}
        assert got == {"8 5 6 1 2 3", "8 5 1 6 2 3", "8 5 1 2 6 3", "8 5 1 2 3 6"}

    def test_second_example_literal_interleavings(self):
        got = {" ".join(b.op_order) for b in fmerge(B1, B2, ALPHA2)}
        assert got == {"8 5 6 1 2 3", "8 5 1 2 6 3"}

    @pytest.mark.parametrize("alpha", [ALPHA1, ALPHA2])
    def test_outputs_are_sound_shuffles(self, alpha):
        for b in fmerge(B1, B2, alpha):
            assert qqc_counting(alpha, b, identity(b))
            order = b.op_order
            assert [c for c in order if c in B1.op_order] == list(B1.op_order)
            assert [c for c in order if c in B2.op_order] == list(B2.op_order)

    def test_non_empty_on_random_two_object_runs(self):
        for seed in range(60):
            alpha, first, b1, b2 = two_counter_run(seed, 2)
            outs = list(fmerge(b1, b2, alpha))
            assert outs
            assert any(qqc_counting(alpha, b, identity(b)) for b in outs)

    def test_overlapping_names_rejected(self):
        with pytest.raises(TraceError):
            list(fmerge(B1, B1, ALPHA1))


class TestCheckCompositional:
    def test_first_example(self):
        w = check_compositional(ALPHA1, split(ALPHA1, SIDE1), B1, B2)
        assert " ".join(w.op_order) == "8 5 6 1 2 3"

    def test_lin_needs_lin_components(self):
        with pytest.raises(CompositionError, match="component 1"):
            check_compositional(ALPHA1, split(ALPHA1, SIDE1), B1, B2, "LIN")

    def test_lin_merge_on_one_counters(self):
        for seed in range(40):
            alpha, first, b1, b2 = two_counter_run(seed, 1)
            w = check_compositional(alpha, split(alpha, first), b1, b2, "LIN")
            assert lin_counting(alpha, w, identity(w))

    def test_component_witness_is_renamed_onto_alpha(self):
        alpha, first, b1, b2 = two_counter_run(3, 2)
        fresh = gen_spec(COUNTER, ["inc"] * len(b1.op_order))
        w = check_compositional(alpha, split(alpha, first), fresh, b2)
        assert set(w.op_order) == set(alpha.ops)

    def test_unsupported_criterion(self):
        with pytest.raises(ValueError):
            check_compositional(ALPHA1, split(ALPHA1, SIDE1), B1, B2, "QC")

    def test_pair_order_cycle_detected(self):
        alpha = from_tokens("?1=inc() !1:0 ?8=inc() !8:0 ?2=inc() !2:1 ?5=inc() !5:1")
        b1 = from_tokens("?1=inc() !1:0 ?2=inc() !2:1", cls=SequentialTrace)
        b2 = from_tokens("?8=inc() !8:0 ?5=inc() !5:1", cls=SequentialTrace)
        assert pair_order(b1, b2, alpha)["2"] == {"1", "8"}
        # reversing one side against real time creates a cycle
        rev = from_tokens("?5=inc() !5:1 ?8=inc() !8:0", cls=SequentialTrace)
        with pytest.raises(CompositionError, match="cyclic"):
            pair_order(b1, rev, alpha)
