import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bsense.adversary import AdversaryConfig, AsyncSchedule, AttackStrategy
from bsense.mfg import DriftBound, WorkCounter
from bsense.phy import SensingParams
from bsense.protocol import (
    MfgSettings,
    ProtocolConfig,
    complexity_report,
    decide,
    gradient_screen,
    mfg_update,
    run_obrdht,
    trim_count,
    trimmed_aggregate,
    user_models,
)

SENSING = SensingParams(tau_tot=1e-5)
FLIP = AdversaryConfig(0.2, AttackStrategy("flip"))


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(trim_fraction=0.5)
    with pytest.raises(ValueError):
        ProtocolConfig(true_index=2)
    with pytest.raises(ValueError):
        ProtocolConfig(prior=(0.5, 0.6))
    assert np.allclose(ProtocolConfig().initial_belief(), 0.5)


def test_decide_threshold():
    assert decide([0.05, 0.95], 0.9) == 1
    assert decide([0.2, 0.8], 0.9) == 0


def test_gradient_screen_rejects_large_moves_with_cap():
    g = np.array([[0.1, -0.1], [2.0, -2.0], [0.0, 0.0], [3.0, -3.0]])
    assert gradient_screen(g, DriftBound(1.0, 1.0)) == (0, 2)
    # only one rejection allowed: the largest norm goes
    assert gradient_screen(g, DriftBound(1.0, 1.0), capacity=1) == (0, 1, 2)
    with pytest.raises(ValueError):
        gradient_screen(np.empty((0, 2)), DriftBound())


def test_trim_count():
    assert trim_count(20, 0.25) == 5
    assert trim_count(16, 0.25) == 4
    assert trim_count(20, 0.0) == 0


def test_trimmed_aggregate_drops_outliers():
    honest = np.tile([0.2, 0.8], (6, 1))
    liars = np.tile([0.99, 0.01], (2, 1))
    agg = trimmed_aggregate(np.vstack([honest, liars]), 0.25)
    np.testing.assert_allclose(agg.belief, [0.2, 0.8])
    assert not agg.fallback
    plain = trimmed_aggregate(np.vstack([honest, liars]), 0.0)
    assert plain.belief[1] < 0.8


def test_trimmed_aggregate_median_fallback():
    agg = trimmed_aggregate(np.array([[0.3, 0.7], [0.6, 0.4]]), 0.45)
    assert agg.fallback
    assert agg.belief.sum() == pytest.approx(1.0)


@given(arrays(float, (7, 2), elements=st.floats(0.01, 1.0)).map(lambda a: a / a.sum(axis=1, keepdims=True)),
       st.sampled_from([0.0, 0.1, 0.25, 0.4]))
def test_trimmed_aggregate_within_coordinate_range(b, trim):
    agg = trimmed_aggregate(b, trim)
    assert agg.belief.sum() == pytest.approx(1.0)
    # log-ratio of the output lies inside the range of the inputs
    r = np.log(b[:, 1] / b[:, 0])
    out = np.log(agg.belief[1] / agg.belief[0])
    assert r.min() - 1e-9 <= out <= r.max() + 1e-9


def test_mfg_update_moves_toward_reports():
    prev = np.array([0.5, 0.5])
    agg = trimmed_aggregate(np.tile([0.2, 0.8], (5, 1)), 0.0)
    new, iters = mfg_update(prev, agg, MfgSettings())
    assert iters == 2
    assert 0.5 < new[1] <= 0.8 + 1e-9


def test_user_models_columns_are_distributions():
    liks, pd, pfa = user_models(5, {1, 3}, SENSING, beta=2.0)
    np.testing.assert_allclose(liks.sum(axis=1), 1.0)
    assert pd[1] > pd[0] and pd[1] == pd[3]
    assert 0 < pfa < 0.5


def test_run_is_deterministic_and_frozen():
    a = run_obrdht(ProtocolConfig(), SENSING, FLIP, seed=11)
    b = run_obrdht(ProtocolConfig(), SENSING, FLIP, seed=11)
    assert a.rounds == b.rounds and a.byzantine == b.byzantine
    np.testing.assert_array_equal(a.final_belief, b.final_belief)
    for ta, tb in zip(a.trace, b.trace):
        np.testing.assert_array_equal(ta.reported, tb.reported)
    with pytest.raises(ValueError):
        a.final_belief[0] = 1.0
    assert len(a.byzantine) == 4


def test_zero_rounds_returns_prior_decision():
    cfg = ProtocolConfig(max_rounds=0, prior=(0.6, 0.4))
    r = run_obrdht(cfg, SENSING, FLIP, seed=0)
    assert r.rounds == 0 and r.trace == () and not r.converged
    np.testing.assert_allclose(r.final_belief, [0.6, 0.4])
    assert r.decision == 0 and not r.correct
    rep = complexity_report(r, cfg)
    assert rep.messages == 0 and rep.within_bound


def test_honest_run_is_correct_and_converges():
    r = run_obrdht(ProtocolConfig(), SENSING, None, seed=2)
    assert r.correct and r.converged and r.byzantine == ()
    assert r.trace[-1].converged and not any(t.converged for t in r.trace[:-1])


def test_idle_channel_hypothesis():
    r = run_obrdht(ProtocolConfig(true_index=0), SENSING, None, seed=2)
    assert r.decision == 0 and r.correct


def test_delayed_byzantines_still_reported():
    adv = AdversaryConfig(0.2, AttackStrategy("flip"), AsyncSchedule("fixed", k=2, max_delay=2))
    r = run_obrdht(ProtocolConfig(max_rounds=6, gamma=0.0), SENSING, adv, seed=5)
    first = r.trace[0]
    for i in r.byzantine:
        assert np.all(np.isnan(first.reported[i]))
        assert first.aoi[i] == 2
    assert all(not np.isnan(r.trace[2].reported[i]).any() for i in r.byzantine)


def test_without_mfg_uses_aggregate_directly():
    r = run_obrdht(ProtocolConfig(use_mfg=False), SENSING, FLIP, seed=1)
    assert all(t.iterations_used == 0 for t in r.trace)
    assert r.work.total == 0


def test_complexity_report_counts():
    cfg = ProtocolConfig()
    r = run_obrdht(cfg, SENSING, FLIP, seed=3)
    rep = complexity_report(r, cfg)
    assert rep.messages == r.rounds * (2 * cfg.n_users + 1)
    assert rep.mfg_sweeps == 2 * r.rounds
    assert rep.within_bound
    assert rep.fitted_constant > 0


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_global_belief_stays_on_simplex_and_capped(seed):
    cfg = ProtocolConfig(max_rounds=8)
    r = run_obrdht(cfg, SENSING, FLIP, seed=seed)
    for t in r.trace:
        assert t.global_belief.sum() == pytest.approx(1.0)
        assert np.all(t.global_belief <= cfg.eta * cfg.initial_belief() + 1e-12)


def test_replace_keeps_mfg_settings_independent():
    cfg = dataclasses.replace(ProtocolConfig(), mfg=MfgSettings(n_points=81))
    assert cfg.mfg.grid().n_points == 81 and ProtocolConfig().mfg.n_points == 161


def test_mfg_work_scales_with_grid():
    agg = trimmed_aggregate(np.tile([0.3, 0.7], (4, 1)), 0.0)
    work = {}
    for n in (81, 161):
        c = WorkCounter()
        mfg_update(np.array([0.5, 0.5]), agg, MfgSettings(n_points=n), c)
        work[n] = c.total
    # doubling the grid: growth divided by the log factor stays under 2.2
    assert work[161] / work[81] / (np.log(161) / np.log(81)) <= 2.2
    assert work[161] / work[81] == pytest.approx(161 / 81)
