import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsense.errors import DomainError, InfeasibleFrameError
from bsense.phy import (
    SensingParams,
    byzantine_snr,
    detection_rate,
    error_sweep,
    false_alarm_prob,
    log_false_alarm_prob,
    log_miss_detect_prob,
    log_q_function,
    log_total_error,
    miss_detect_prob,
    normalized_threshold,
    optimal_level,
    q_function,
    sensing_time,
    total_error,
    transmission_time,
)


def mp_q(x):
    return float(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2)


@pytest.mark.parametrize("x", [-8.0, -3.3, -1.0, 0.0, 0.5, 1.0, 2.0, 5.0, 8.0, 20.0])
def test_q_function_matches_extended_precision(x):
    assert q_function(x) == pytest.approx(mp_q(x), rel=1e-12)


def test_q_function_known_values():
    assert q_function(0.0) == 0.5
    assert q_function(1.0) == pytest.approx(0.15865525393145707, rel=1e-14)


def test_q_function_array_shape():
    out = q_function(np.zeros((2, 3)))
    assert out.shape == (2, 3)
    assert np.all(out == 0.5)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_q_function_rejects_non_finite(bad):
    with pytest.raises(DomainError):
        q_function(bad)
    with pytest.raises(DomainError):
        log_q_function(bad)


@given(st.floats(-30, 30))
def test_q_symmetry(x):
    assert q_function(-x) == pytest.approx(1.0 - q_function(x), abs=1e-15)


@pytest.mark.parametrize("x", [1.0, 10.0, 40.0, 200.0])
def test_log_q_deep_tail(x):
    expected = float(mpmath.log(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2))
    assert log_q_function(x) == pytest.approx(expected, rel=1e-10)


def test_table_defaults():
    p = SensingParams()
    assert (p.kappa1, p.kappa2, p.kappa3, p.kappa4) == (3.0, 3.0, 3.0, 20.0)
    assert p.n_rx == 12.589 and p.n0 == 417e-23 and p.b_a == 10e3
    assert (p.kappa5, p.kappa6, p.g_a, p.p_elec) == (0.125, 0.2, 0.01, 3.63e-3)
    assert p.idle_weight == p.busy_weight == 0.5
    assert p.sigma_p2 == 10.0


@pytest.mark.parametrize("field", ["kappa1", "b_a", "tau_tot", "sigma_n2", "r_s"])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
def test_params_reject_non_positive(field, bad):
    with pytest.raises(DomainError):
        SensingParams(**{field: bad})


def test_transmission_time_hand_computed():
    p = SensingParams(r_s=200.0, e_t=2e-3)
    power = 20 * 417e-23 * 12.589 * 1e4 * (4 * math.pi / 0.125) ** 3 * 1e3 / (0.01 * 0.2) * 200.0 ** 3
    assert transmission_time(p) == pytest.approx(2e-3 / (power + 3.63e-3), rel=1e-13)


@given(st.floats(1.0, 1000.0), st.floats(1.0, 1000.0))
def test_transmission_time_decreases_with_range(r1, r2):
    t1 = transmission_time(SensingParams(r_s=r1))
    t2 = transmission_time(SensingParams(r_s=r2))
    if r1 < r2:
        assert t1 >= t2


def test_sensing_time_infeasible_frame():
    p = SensingParams(e_t=1.0, r_s=1.0, tau_tot=1e-3)
    with pytest.raises(InfeasibleFrameError):
        sensing_time(p)


def test_sensing_time_is_remainder():
    p = SensingParams()
    assert sensing_time(p) == pytest.approx(p.tau_tot - transmission_time(p), abs=0)


def test_false_alarm_at_noise_mean_is_half_weight():
    p = SensingParams()
    tau = 0.3
    th = 2 * tau * p.b_a * p.sigma_n2
    assert false_alarm_prob(p, th, tau) == pytest.approx(0.5 * p.idle_weight)


def test_miss_detect_at_signal_mean_is_half_weight():
    p = SensingParams()
    tau = 0.3
    th = 2 * tau * p.b_a * (p.sigma_p2 + p.sigma_n2)
    assert miss_detect_prob(p, th, tau) == pytest.approx(0.5 * p.busy_weight)


def test_total_error_components():
    p = SensingParams(tau_tot=1e-3)
    tau = sensing_time(p)
    th = float(normalized_threshold(p, 2.0, tau))
    out = total_error(p, th, tau)
    assert out.p_e == pytest.approx(out.p_fa + out.p_md, abs=0)
    assert out.tau_t == pytest.approx(transmission_time(p))
    assert math.log(out.p_e) == pytest.approx(log_total_error(p, th, tau), rel=1e-12)


def test_log_probabilities_match_linear_where_representable():
    p = SensingParams()
    tau = 1e-3
    levels = np.linspace(0.5, 15, 50)
    th = normalized_threshold(p, levels, tau)
    for log_fn, lin_fn in ((log_false_alarm_prob, false_alarm_prob), (log_miss_detect_prob, miss_detect_prob)):
        lin = lin_fn(p, th, tau)
        ok = lin > np.finfo(float).tiny  # subnormals carry too few digits to compare
        assert ok.sum() > 10
        np.testing.assert_allclose(log_fn(p, th, tau)[ok], np.log(lin[ok]), rtol=1e-10)


@settings(max_examples=50)
@given(st.floats(1e-5, 1.0), st.floats(0.1, 30.0), st.floats(0.01, 5.0))
def test_error_terms_monotone_in_threshold(tau, c, dc):
    p = SensingParams()
    a, b = normalized_threshold(p, [c, c + dc], tau)
    assert log_false_alarm_prob(p, b, tau) <= log_false_alarm_prob(p, a, tau)
    assert log_miss_detect_prob(p, b, tau) >= log_miss_detect_prob(p, a, tau)


def test_error_sweep_keys_and_sum():
    p = SensingParams()
    out = error_sweep(p, 1e-3, np.linspace(1, 5, 7))
    assert set(out) == {"level", "threshold", "p_fa", "p_md", "p_e", "log_p_fa", "log_p_md", "log_p_e"}
    np.testing.assert_allclose(out["p_e"], out["p_fa"] + out["p_md"])


@pytest.mark.parametrize("tau", [1e-5, 1e-4, 1e-3, 0.5])
def test_optimal_level_beats_dense_grid(tau):
    p = SensingParams()
    level, lpe = optimal_level(p, tau)
    grid = np.linspace(0.05, 22, 20001)
    brute = log_total_error(p, normalized_threshold(p, grid, tau), tau)
    assert lpe <= brute.min() + 1e-9
    assert lpe == pytest.approx(float(log_total_error(p, normalized_threshold(p, level, tau), tau)))


def test_byzantine_snr():
    assert byzantine_snr(2.0) == 20.0
    assert byzantine_snr(2.0, byzantine=False) == 10.0
    assert byzantine_snr(100.0) == 50.0
    assert byzantine_snr(0.0) == 1.0


def test_higher_snr_detects_more():
    p = SensingParams()
    pb = SensingParams(snr_linear=20.0)
    th = float(normalized_threshold(p, 3.0, 1e-4))
    assert detection_rate(pb, th, 1e-4) > detection_rate(p, th, 1e-4)


def test_non_positive_sensing_time_rejected():
    with pytest.raises(DomainError):
        false_alarm_prob(SensingParams(), 1.0, 0.0)
