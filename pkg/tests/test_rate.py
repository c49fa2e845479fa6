import math

import numpy as np
import pytest

from jsqldp import (
    DomainLabel,
    PoissonCost,
    classify_domain,
    label_matches,
    local_rate,
    local_rate_bruteforce,
    psi_ij,
)
from jsqldp.rate import check_label

GOLDEN_L11 = 0.24514384755981367  # frozen solver value, oracle-confirmed


def _check_witness(wit, x, topo, tol=1e-9):
    """Replay the constraint system on the returned optimizer."""
    assert wit.e.shape == (topo.K, topo.M)
    assert np.all(wit.e >= -tol)
    assert np.all(wit.d >= -tol)
    assert np.all(wit.a >= -tol)
    assert np.all(wit.b >= -tol)
    # routed mass only on currently shortest admissible queues
    label = classify_domain(x, topo)
    for k in range(topo.K):
        for m in range(topo.M):
            if k not in label.argmin_sets[m]:
                assert wit.e[k, m] == 0.0
    # per-stream routed total bounded by the arrival rate
    assert np.all(wit.e.sum(axis=0) <= wit.a + tol)
    # departures bounded by service, equal on busy queues
    assert np.all(wit.d <= wit.b + tol)
    busy = np.asarray(x) > 0
    assert np.allclose(wit.d[busy], wit.b[busy], atol=tol)


class TestGoldenValue:
    def test_frozen_value(self, mm1):
        wit = local_rate([1.0], [1.0], mm1, PoissonCost(mm1))
        assert wit.value == pytest.approx(GOLDEN_L11, abs=1e-9)

    def test_witness_is_feasible_and_consistent(self, mm1):
        cost = PoissonCost(mm1)
        wit = local_rate([1.0], [1.0], mm1, cost)
        _check_witness(wit, np.array([1.0]), mm1)
        # objective recomputed from the witness matches the reported value
        assert cost.eval(wit.a, wit.b) == pytest.approx(wit.value, abs=1e-8)
        # velocity reproduced: y = e 1 - d
        assert wit.e.sum(axis=1) - wit.d == pytest.approx([1.0], abs=1e-8)

    def test_stationarity_reported(self, mm1):
        wit = local_rate([1.0], [1.0], mm1, PoissonCost(mm1))
        assert wit.stationarity <= 1e-6
        assert wit.iterations >= 1


class TestOracleAgreement:
    @pytest.mark.parametrize(
        "x,y",
        [
            ([1.0], [1.0]),
            ([1.0], [-0.7]),
            ([0.0], [0.5]),
            ([2.5], [0.0]),
        ],
    )
    def test_single_queue(self, mm1, x, y):
        cost = PoissonCost(mm1)
        wit = local_rate(x, y, mm1, cost)
        bf = local_rate_bruteforce(x, y, mm1, cost, grid_step=1e-3)
        assert wit.value == pytest.approx(bf, abs=1e-2)
        # the grid search can only overshoot
        assert bf >= wit.value - 1e-9

    @pytest.mark.parametrize(
        "x,y",
        [
            ([2.0, 1.0], [-0.5, 1.0]),
            ([1.0, 1.0], [0.5, 0.5]),
            ([0.0, 1.5], [1.0, -1.0]),
        ],
    )
    def test_two_queue(self, two_queue, x, y):
        cost = PoissonCost(two_queue)
        wit = local_rate(x, y, two_queue, cost)
        bf = local_rate_bruteforce(x, y, two_queue, cost, grid_step=2e-3)
        if math.isinf(wit.value):
            assert math.isinf(bf)
        else:
            assert wit.value == pytest.approx(bf, abs=1e-2)

    def test_oracle_rejects_large_topologies(self, weighted_net):
        big = weighted_net
        # K*M + M + 2K budget: 4 + 2 + 4 = 10 > 8
        with pytest.raises(ValueError, match="budget"):
            local_rate_bruteforce([1.0, 1.0], [0.0, 0.0], big, PoissonCost(big))


class TestInfeasibility:
    def test_growth_off_the_shortest_queue(self, two_queue):
        # stream only feeds queue 2 at x = (2, 1); queue 1 cannot grow
        wit = local_rate([2.0, 1.0], [0.5, 0.5], two_queue, PoissonCost(two_queue))
        assert math.isinf(wit.value)
        assert not wit.feasible
        assert wit.certificate
        assert wit.a is None

    def test_shrinking_is_always_feasible(self, two_queue):
        wit = local_rate([2.0, 1.0], [-0.5, -0.5], two_queue, PoissonCost(two_queue))
        assert math.isfinite(wit.value)


class TestZeroCost:
    def test_nominal_drift_costs_nothing(self, mm1_stable):
        # lambda = 1, mu = 2: the fluid drift at x > 0 is -1
        wit = local_rate([1.0], [-1.0], mm1_stable, PoissonCost(mm1_stable))
        assert wit.value == pytest.approx(0.0, abs=1e-9)

    def test_resting_at_zero_costs_nothing(self, mm1_stable):
        wit = local_rate([0.0], [0.0], mm1_stable, PoissonCost(mm1_stable))
        assert wit.value == pytest.approx(0.0, abs=1e-9)

    def test_resting_above_zero_costs_something(self, mm1_stable):
        wit = local_rate([1.0], [0.0], mm1_stable, PoissonCost(mm1_stable))
        assert wit.value > 0.01


class TestDomains:
    def test_classify_interior_point(self, two_queue):
        lab = classify_domain(np.array([2.0, 1.0]), two_queue)
        assert lab.zero_set == frozenset()
        assert lab.argmin_sets == (frozenset({1}),)

    def test_classify_tie_and_zero(self, two_queue):
        lab = classify_domain(np.array([0.0, 0.0]), two_queue)
        assert lab.zero_set == frozenset({0, 1})
        assert lab.argmin_sets == (frozenset({0, 1}),)

    def test_classify_rejects_bad_state(self, two_queue):
        with pytest.raises(ValueError):
            classify_domain(np.array([-1.0, 0.0]), two_queue)
        with pytest.raises(ValueError):
            classify_domain(np.array([1.0]), two_queue)

    def test_invalid_labels_rejected(self, two_queue):
        with pytest.raises(ValueError, match="invalid label"):
            check_label(DomainLabel(frozenset(), ()), two_queue)
        with pytest.raises(ValueError, match="invalid label"):
            check_label(DomainLabel(frozenset(), (frozenset(),)), two_queue)
        with pytest.raises(ValueError, match="invalid label"):
            # argmin set straddles the zero set
            check_label(
                DomainLabel(frozenset({0}), (frozenset({0, 1}),)), two_queue
            )

    def test_label_matches_own_domain(self, two_queue, rng):
        for _ in range(200):
            x = rng.uniform(0, 3, 2)
            if rng.random() < 0.3:
                x[rng.integers(2)] = 0.0
            lab = classify_domain(x, two_queue)
            assert label_matches(lab, x, two_queue)

    def test_label_does_not_match_other_domain(self, two_queue):
        lab = classify_domain(np.array([2.0, 1.0]), two_queue)
        assert not label_matches(lab, np.array([1.0, 2.0]), two_queue)

    def test_psi_matches_local_rate_in_domain(self, two_queue):
        cost = PoissonCost(two_queue)
        for x, y in [
            (np.array([2.0, 1.0]), np.array([-0.5, 1.0])),
            (np.array([1.0, 1.0]), np.array([0.5, 0.5])),
            (np.array([0.0, 1.0]), np.array([0.5, -0.5])),
        ]:
            wit = local_rate(x, y, two_queue, cost)
            val = psi_ij(classify_domain(x, two_queue), y, two_queue, cost)
            if math.isinf(wit.value):
                assert math.isinf(val)
            else:
                assert val == pytest.approx(wit.value, abs=2e-8)


class TestLowerSemicontinuity:
    def test_value_drops_at_the_tie(self, two_queue):
        # moving both queues up is impossible off the tie but possible on it
        cost = PoissonCost(two_queue)
        y = np.array([0.5, 0.5])
        on_tie = local_rate([1.0, 1.0], y, two_queue, cost).value
        off_tie = local_rate([1.0 + 1e-6, 1.0], y, two_queue, cost).value
        assert math.isfinite(on_tie)
        assert math.isinf(off_tie)

    def test_no_upward_jump_at_the_tie(self, two_queue):
        cost = PoissonCost(two_queue)
        y = np.array([-0.5, 0.5])
        on_tie = local_rate([1.0, 1.0], y, two_queue, cost).value
        near = local_rate([1.0 + 1e-7, 1.0], y, two_queue, cost).value
        assert on_tie <= near + 1e-6


class TestValidation:
    def test_bad_tolerance(self, mm1):
        with pytest.raises(ValueError):
            local_rate([1.0], [1.0], mm1, PoissonCost(mm1), tol=0.0)

    def test_negative_state(self, mm1):
        with pytest.raises(ValueError):
            local_rate([-1.0], [1.0], mm1, PoissonCost(mm1))
