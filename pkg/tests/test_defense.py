import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bsense.defense import (
    AoiState,
    GreedyConfig,
    SpsaConfig,
    SyncScenario,
    aoi_step,
    compare_defenses,
    greedy_select,
    project_simplex,
    quadratic_surrogate,
    simulate_aoi,
    spsa_gradient,
    spsa_maximize,
)
from bsense.errors import EvaluationError


def test_greedy_ground_set_and_validation():
    assert GreedyConfig(step=0.25).ground_set == (0, 1, 2, 3)
    with pytest.raises(ValueError):
        GreedyConfig(step=0.0)


def test_greedy_modular_objective_takes_positive_items():
    w = {0: 0.5, 1: -0.2, 2: 0.9, 3: 0.0}
    res = greedy_select(GreedyConfig(step=0.25), lambda s: sum(w[e] for e in s))
    assert res.selected == (2, 0)
    assert res.value == pytest.approx(1.4)
    assert res.history == pytest.approx((0.0, 0.9, 1.4))
    assert res.meets_threshold


def test_greedy_stops_at_f_max_and_max_size():
    f = lambda s: float(len(s))  # noqa: E731
    assert greedy_select(GreedyConfig(step=0.1, f_max=3.0), f).selected == (0, 1, 2)
    assert greedy_select(GreedyConfig(step=0.1, max_size=2), f).selected == (0, 1)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sets(st.integers(0, 9), min_size=1, max_size=5), min_size=4, max_size=7), st.integers(1, 3))
def test_greedy_coverage_approximation(sets, k):
    """Coverage is monotone submodular: greedy reaches (1 - 1/e) of the best k-subset."""
    def cover(sel):
        return float(len(set().union(*(sets[i] for i in sel)))) if sel else 0.0

    res = greedy_select(GreedyConfig(max_size=k), cover, range(len(sets)))
    opt = max(cover(c) for c in itertools.combinations(range(len(sets)), min(k, len(sets))))
    assert res.value >= (1 - 1 / math.e) * opt - 1e-12


def test_spsa_gradient_exact_for_affine_scalar():
    cfg = SpsaConfig()
    rng = np.random.default_rng(0)
    for n in range(5):
        g = spsa_gradient(lambda x: 3.0 * x[0] - 1.0, np.array([0.4]), n, cfg, rng)
        assert g[0] == pytest.approx(3.0, rel=1e-12)


def test_spsa_gradient_unbiased_in_several_dimensions():
    cfg = SpsaConfig(c=1e-3)
    rng = np.random.default_rng(1)
    slope = np.array([1.0, -2.0, 0.5])
    est = np.mean([spsa_gradient(lambda x: float(slope @ x), np.zeros(3), 0, cfg, rng) for _ in range(4000)], axis=0)
    np.testing.assert_allclose(est, slope, atol=0.15)


def test_spsa_gradient_rejects_non_finite():
    with pytest.raises(EvaluationError):
        spsa_gradient(lambda x: math.nan, np.zeros(2), 0, SpsaConfig(), np.random.default_rng(0))


@given(arrays(float, st.integers(1, 8), elements=st.floats(-5, 5)))
def test_project_simplex_properties(v):
    p = project_simplex(v)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)
    # the projection is idempotent and no vertex is closer to v
    np.testing.assert_allclose(project_simplex(p), p, atol=1e-12)
    d = np.linalg.norm(v - p)
    for i in range(v.size):
        e = np.zeros(v.size)
        e[i] = 1.0
        assert d <= np.linalg.norm(v - e) + 1e-9


def test_spsa_finds_surrogate_peak():
    target = np.array([0.1, 0.6, 0.3])
    res = spsa_maximize(quadratic_surrogate(target), np.full(3, 1 / 3), SpsaConfig(a=0.5),
                        np.random.default_rng(2))
    np.testing.assert_allclose(res.best_x, target, atol=0.02)
    assert res.trajectory[0] <= res.trajectory.max()


def test_aoi_rule_hand_values():
    s = AoiState(age=1, tx_prob=1.0, p_min=0.1, eta_step=0.2)
    s1 = aoi_step(s, delivered=False)
    assert (s1.age, s1.tx_prob) == (2, pytest.approx(0.8))
    s2 = aoi_step(s1, delivered=True)
    assert (s2.age, s2.tx_prob) == (1, pytest.approx(0.7))
    ages, txs = simulate_aoi([False] * 50)
    assert ages[-1] == 51
    assert txs.min() >= 0.1 and np.all(np.diff(txs) <= 0)
    with pytest.raises(ValueError):
        AoiState(tx_prob=0.05)


SMALL = SyncScenario(horizon=8, n_episodes=6, seed=3)


def test_sync_scenario_is_deterministic():
    x = np.full(5, 0.2)
    np.testing.assert_array_equal(SMALL.run(x), SyncScenario(horizon=8, n_episodes=6, seed=3).run(x))
    beliefs = SMALL.run(x)
    np.testing.assert_allclose(beliefs.sum(axis=-1), 1.0)
    assert SMALL.leakage(x).shape == (6, 8)


def test_sync_objective_hand_value():
    sc = SyncScenario(horizon=4, n_episodes=3, xi_b=0.3, alpha=2.0)
    x = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
    p_hat = sc.run(x)[:, -1].mean(axis=0)
    assert sc.sync_objective(x) == pytest.approx(0.3 * p_hat[3])
    assert SyncScenario(xi_b=0.0).sync_objective(x) == 0.0


def test_subset_weights():
    np.testing.assert_allclose(SMALL.subset_weights({1, 3}), [0, 0.5, 0, 0.5, 0])
    np.testing.assert_allclose(SMALL.subset_weights(()), 0.2)


def test_compare_defenses_shapes():
    out = compare_defenses(SMALL, scfg=SpsaConfig(a=1.0, max_iters=20))
    assert out.leakage_ratio.shape == (8,)
    assert out.spsa_sync == pytest.approx(SMALL.sync_objective(out.spsa_x))
    same = compare_defenses(SMALL, use_spsa=False)
    np.testing.assert_array_equal(same.spsa_x, same.greedy_x)
