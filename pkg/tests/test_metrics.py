import numpy as np
import pytest
from hypothesis import given, strategies as st

from lbsim.metrics import (
    JctSummary,
    Prop1Verdict,
    RewardState,
    fairness,
    jct_summary,
    makespan,
    prop1_oracle,
    step_reward,
    summarize_fcts,
)
from lbsim.servers import Flow


positive_loads = st.lists(
    st.floats(min_value=1e-3, max_value=1e3, allow_nan=False), min_size=1, max_size=8
)


class TestFairness:
    def test_equal_entries_give_one(self):
        assert fairness([3.7, 3.7, 3.7]) == pytest.approx(1.0)

    def test_formula(self):
        assert fairness([1, 2]) == pytest.approx(0.5)
        assert fairness([1, 2, 4]) == pytest.approx(0.125)

    def test_all_zero_is_one(self):
        assert fairness([0.0, 0.0]) == 1.0

    def test_negative_entry_rejected(self):
        with pytest.raises(ValueError):
            fairness([1.0, -0.1])

    @given(positive_loads)
    def test_bounded(self, l):
        assert 0.0 < fairness(l) <= 1.0

    @given(positive_loads, st.floats(min_value=0.01, max_value=100))
    def test_scale_invariant(self, l, c):
        assert fairness([c * x for x in l]) == pytest.approx(fairness(l), rel=1e-9)

    @given(positive_loads, st.randoms())
    def test_permutation_invariant(self, l, rnd):
        shuffled = list(l)
        rnd.shuffle(shuffled)
        assert fairness(shuffled) == pytest.approx(fairness(l), rel=1e-9)

    @given(
        st.lists(st.floats(min_value=0.1, max_value=10), min_size=2, max_size=6),
        st.floats(min_value=0.1, max_value=0.9),
    )
    def test_decreasing_non_max_entry_decreases_f(self, l, shrink):
        j = int(np.argmin(l))
        if l[j] == max(l):  # all equal; any entry is the max
            return
        smaller = list(l)
        smaller[j] *= shrink
        assert fairness(smaller) < fairness(l)


class TestMakespan:
    def test_examples(self):
        assert makespan([1, 2, 4]) == 4
        assert makespan([0, 0]) == 0
        assert makespan([3]) == 3

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            makespan([])


class TestStepReward:
    def test_first_step_scores_current(self):
        assert step_reward(RewardState(), [1.0, 1.0]) == pytest.approx(1.0)

    def test_blend_formula(self):
        state = RewardState(gamma=0.9)
        step_reward(state, [1.0, 1.0])
        r = step_reward(state, [1.0, 3.0])
        # blend = [1.0, 0.1*1 + 0.9*3] = [1.0, 2.8]
        assert r == pytest.approx(1.0 / 2.8)

    def test_all_equal_always_one(self):
        state = RewardState()
        for c in [1.0, 2.5, 0.3, 7.0]:
            assert step_reward(state, [c, c, c]) == pytest.approx(1.0)

    def test_length_mismatch_rejected(self):
        state = RewardState()
        step_reward(state, [1.0, 1.0])
        with pytest.raises(ValueError):
            step_reward(state, [1.0, 1.0, 1.0])

    def test_equals_fairness_when_unchanged(self):
        state = RewardState()
        tau = [0.5, 1.0, 2.0]
        step_reward(state, tau)
        assert step_reward(state, tau) == pytest.approx(fairness(tau))


class TestJctSummary:
    def test_population_std(self):
        s = summarize_fcts([1.0, 2.0, 3.0])
        assert s.mean == pytest.approx(2.0)
        assert s.std == pytest.approx(0.816496580927726)

    def test_interpolated_p90(self):
        s = summarize_fcts(np.arange(1.0, 101.0))
        assert s.p90 == pytest.approx(90.1)

    def test_single_flow(self):
        s = summarize_fcts([2.0])
        assert s.std == 0.0 and s.count == 1

    def test_per_class_split(self):
        flows = [
            Flow(0, 0.0, 1.0, "H", t_complete=2.0),
            Flow(1, 0.0, 1.0, "L", t_complete=0.5),
        ]
        out = jct_summary(flows)
        assert set(out) == {"all", "H", "L"}
        assert out["H"].mean == pytest.approx(2.0)
        assert len(out["all"].cdf) == 200

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            jct_summary([])


class TestProp1Oracle:
    def test_two_equal_servers(self):
        v = prop1_oracle(2, 4, [1.0, 1.0])
        assert v.sufficiency_holds

    def test_heterogeneous(self):
        v = prop1_oracle(2, 3, [1.0, 2.0])
        assert v.sufficiency_holds

    def test_single_server_trivial(self):
        v = prop1_oracle(1, 5, [1.0])
        assert v.sufficiency_holds

    def test_not_necessary_visible(self):
        # speeds [1,2], J=2: (0,2) has loads [0,1], makespan 1, F=0 while
        # (1,1) has loads [1,.5], makespan 1, F=.5; both minimize makespan
        # but only one maximizes fairness.
        v = prop1_oracle(2, 2, [1.0, 2.0])
        assert v.has_non_fair_min_makespan

    def test_instance_cap(self):
        with pytest.raises(ValueError):
            prop1_oracle(5, 4, [1.0] * 5)
