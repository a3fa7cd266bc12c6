import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bsense.errors import StepSizeError
from bsense.mfg import (
    CostSpec,
    DriftBound,
    GridSpec,
    PopulationDensity,
    ValueFunction,
    WorkCounter,
    check_cfl,
    concentration_fraction,
    drift_concentration_check,
    fpk_forward_step,
    hjb_backward_step,
    project_major_player,
    solve_fixed_point,
)

G = GridSpec(n_points=33, x_min=-1, x_max=1, dt=0.02, t_end=0.4)


def test_grid_properties():
    assert G.dx == pytest.approx(2 / 32)
    assert G.n_steps == 20
    a = G.controls()
    assert a.size == 17 and a.max() == pytest.approx(G.dx / G.dt) and 0.0 in a
    with pytest.raises(ValueError):
        GridSpec(n_points=4)


def test_cfl_violation_raises():
    with pytest.raises(StepSizeError):
        check_cfl([2 * G.dx / G.dt], G)
    with pytest.raises(StepSizeError):
        fpk_forward_step(PopulationDensity.uniform(G), 1.01 * G.dx / G.dt, G)
    check_cfl(G.controls(), G)


def test_hjb_running_cost_only():
    c = CostSpec(c1=1.0)
    v = hjb_backward_step(ValueFunction(np.zeros(G.n_points)), c, PopulationDensity.uniform(G), G)
    np.testing.assert_allclose(v.values, G.dt * G.x ** 2)
    # flat value: every control ties, the smallest |a| wins
    assert np.all(v.control == 0.0)


def test_hjb_linear_value_picks_fastest_descent():
    g = GridSpec(n_points=17, periodic=True)
    v = hjb_backward_step(ValueFunction(g.x.copy()), CostSpec(c1=0.0), PopulationDensity.uniform(g), g)
    vmax = g.dx / g.dt
    interior = slice(1, -1)
    np.testing.assert_allclose(v.control[interior], -vmax)
    np.testing.assert_allclose(v.values[interior], g.x[interior] - g.dt * vmax)


def test_hjb_noise_requires_rng():
    with pytest.raises(ValueError):
        hjb_backward_step(ValueFunction(np.zeros(G.n_points)), CostSpec(noise_scale=0.1),
                          PopulationDensity.uniform(G), G)


densities = arrays(float, 33, elements=st.floats(0.0, 1.0)).filter(lambda a: a.sum() > 0).map(lambda a: a / a.sum())


@settings(max_examples=60)
@given(densities, arrays(float, 33, elements=st.floats(-1.0, 1.0)), st.booleans())
def test_fpk_conserves_mass_and_sign(d, frac, periodic):
    g = GridSpec(n_points=33, dt=0.02, periodic=periodic)
    vel = frac * g.dx / g.dt
    out = fpk_forward_step(PopulationDensity(d), vel, g).density
    assert np.all(out >= 0)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_fpk_unit_courant_shifts_one_node():
    g = GridSpec(n_points=20, periodic=True)
    d = np.zeros(20)
    d[3] = 1.0
    vmax = g.dx / g.dt
    assert fpk_forward_step(PopulationDensity(d), vmax, g).density[4] == pytest.approx(1.0)
    assert fpk_forward_step(PopulationDensity(d), -vmax, g).density[2] == pytest.approx(1.0)


def test_fpk_walls_hold_mass():
    g = GridSpec(n_points=10)
    d = np.zeros(10)
    d[-1] = 1.0
    out = fpk_forward_step(PopulationDensity(d), g.dx / g.dt, g)
    assert out.density[-1] == pytest.approx(1.0)


def test_centroid_moves_at_constant_velocity():
    g = GridSpec(n_points=101, x_min=-5, x_max=5, dt=0.05, periodic=True)
    m = PopulationDensity.point_mass(g, -2.0)
    v = 0.5 * g.dx / g.dt
    c0 = float(g.x @ m.density)
    for k in range(1, 21):
        m = fpk_forward_step(m, v, g)
        assert float(g.x @ m.density) == pytest.approx(c0 + v * k * g.dt, abs=1e-9)


def test_fixed_point_quadratic_cost_concentrates():
    counter = WorkCounter()
    res = solve_fixed_point(G, CostSpec(c1=1.0), PopulationDensity.uniform(G), counter=counter)
    assert res.converged
    assert res.density.mass == pytest.approx(1.0)
    centre = G.n_points // 2
    assert res.density.density[centre] > 0.5
    assert counter.hjb == res.iterations * G.n_steps * 17 * G.n_points
    assert counter.total == counter.hjb + counter.fpk
    assert res.density_path.shape == (G.n_steps + 1, G.n_points)


def test_fixed_point_zero_cost_is_immediate():
    res = solve_fixed_point(G, CostSpec(c1=0.0), PopulationDensity.uniform(G))
    assert res.converged and res.iterations == 1
    np.testing.assert_allclose(res.density.density, 1 / G.n_points)


def test_fixed_point_reports_non_convergence():
    res = solve_fixed_point(G, CostSpec(c1=1.0), PopulationDensity.uniform(G), gamma=0.0, max_iters=1)
    assert not res.converged and res.iterations == 1
    with pytest.raises(ValueError):
        solve_fixed_point(G, CostSpec(), PopulationDensity.uniform(G), max_iters=0)


def test_concentration_helpers():
    samples = np.array([[0.0, 0.1], [0.3, 0.6], [0.0, 2.0]])
    assert concentration_fraction(samples, 1.0) == pytest.approx(2 / 3)
    assert drift_concentration_check(samples, DriftBound(1.0, 0.5))
    assert not drift_concentration_check(samples, DriftBound(1.0, 0.2))
    with pytest.raises(ValueError):
        DriftBound(1.0, 1.5)


@given(densities, st.floats(1.5, 20.0))
def test_projection_caps_ratio(b, eta):
    anchor = np.full(33, 1 / 33)
    out = project_major_player(b, anchor, eta)
    assert out.sum() == pytest.approx(1.0)
    assert np.all(out <= eta * anchor * (1 + 1e-9))


def test_projection_identity_when_within_cap():
    b = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_major_player(b, np.full(3, 1 / 3), 10.0), b)
    with pytest.raises(ValueError):
        project_major_player(b, np.full(3, 1 / 3), 0.0)
