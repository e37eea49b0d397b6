import numpy as np
import pytest

from relscat import bounds
from relscat.errors import BelowThreshold, ConditionViolated, NonPerpendicular
from relscat.fields import Family, FieldModel
from relscat.grid import TimeGrid
from relscat.inverse import born_terms
from relscat.scattering import (compute_W, ode_oracle, scatter, scatter_batch,
                                solve_deflection)

MIXED = FieldModel(family=Family.SOFT_COULOMB, q_l=3e-4, m_l=2e-4, q_s=0.05, m_s=0.03)
FULL = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, q_s=1.0, m_l=0.5, m_s=0.5)
LONG_ONLY = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, m_l=0.5).with_beta(1e-3)


def test_zero_field_gives_zero_data():
    m = FieldModel(family=Family.ZERO)
    d = scatter(m, np.array([0.6, 0.0]), np.array([0.0, 3.0]))
    assert np.all(d.y_plus.deviation_rate == 0)
    assert np.all(d.a_sc == 0) and np.all(d.b_sc == 0) and np.all(d.W == 0)
    np.testing.assert_array_equal(d.a, d.v_minus)


def test_datum_identities():
    d = scatter(MIXED, np.array([0.0, 0.9]), np.array([-1.5, 0.0]), mode="empirical")
    np.testing.assert_array_equal(d.a_sc, d.a - d.v_minus)
    np.testing.assert_array_equal(d.b_sc, d.b - d.x_minus)
    assert abs(np.linalg.norm(d.a) - 0.9) <= 1e-8 * 0.9


def test_trajectory_matches_ode():
    v, x = np.array([0.95, 0.0]), np.array([0.0, 2.0])
    defl = solve_deflection(MIXED, v, x, tol=1e-13, mode="empirical")
    ode = ode_oracle(MIXED, v, x)
    t = np.linspace(-50, 50, 101)
    np.testing.assert_allclose(defl.path(t), ode.position(t), atol=1e-6)


def test_picard_matches_ode_on_grid():
    for s in (0.9, 0.95, 0.99):
        for dist in (1.0, 2.0, 4.0):
            v, x = np.array([s, 0.0]), np.array([0.0, dist])
            d = scatter(MIXED, v, x, tol=1e-13, mode="empirical")
            ode = ode_oracle(MIXED, v, x)
            assert np.linalg.norm(d.a - ode.a_est) <= 1e-6 * s
            assert np.linalg.norm(d.b - ode.b_est) <= 1e-5 * (1 + dist)
            assert ode.energy_drift <= 10 * 1e-12


def test_admissible_run_obeys_bounds():
    m = FULL.with_beta(1e-4)
    s, dist = 0.95, 1.0
    r = bounds.best_radius(m, s, dist, "standard")
    assert bounds.standard_condition(m, s, dist, r) < 1
    D = scatter_batch(m, np.array([s, 0.0]), np.array([0.0, dist]), r, 1e-13, "strict")
    t = D["grid"].t
    rate = np.linalg.norm(D["y_rate"][0], axis=-1)
    assert np.all(rate[t <= 0] <= bounds.deflection_rate_bound(m, s, dist, r, t[t <= 0]))
    assert D["norm"][0] <= r
    assert D["contraction"][0] <= bounds.lambda2(m, s, r)
    assert np.linalg.norm(D["a_sc"][0]) <= bounds.a_sc_bound(m, s, dist, r)
    assert np.linalg.norm(D["b_sc"][0]) <= bounds.b_sc_bound(m, s, dist, r)


def test_born_term_within_bound():
    m = FULL.with_beta(1e-3)
    s, dist = 0.9, 1.0
    theta, x = np.array([1.0, 0.0]), np.array([0.0, dist])
    r = bounds.best_radius(m, s, dist, "standard")
    d = scatter(m, s * theta, x, r, tol=1e-13, mode="empirical")
    a_born, _ = born_terms(m, theta, x, s)
    assert np.linalg.norm(d.a_sc - a_born) <= bounds.born_a_bound(m, s, dist, r)


def test_born_residual_scales_quadratically():
    theta, x = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    res = []
    for scale in (1.0, 0.5, 0.25):
        m = FULL.with_beta(1e-3 * scale)
        d = scatter(m, 0.95 * theta, x, tol=1e-13, mode="empirical", with_W=False)
        a_born, _ = born_terms(m, theta, x, 0.95)
        res.append(np.linalg.norm(d.a_sc - a_born))
    ratios = np.array(res[:-1]) / np.array(res[1:])
    assert np.all((ratios >= 4 / 1.5) & (ratios <= 4 * 1.5))


def test_W_trivial_cases():
    v = np.array([0.9, 0.0])
    short = FieldModel(family=Family.SOFT_COULOMB, q_s=0.1)
    np.testing.assert_array_equal(compute_W(short, v, np.array([0.0, 3.0]), v), 0.0)
    d = scatter(LONG_ONLY, v, np.zeros(2), mode="empirical")
    np.testing.assert_allclose(compute_W(LONG_ONLY, v, np.zeros(2), d.a), 0.0, atol=1e-15)


def test_W_refinement():
    v, x = np.array([0.9, 0.0]), np.array([0.0, 3.0])
    d = scatter(LONG_ONLY, v, x, tol=1e-13, mode="empirical")
    base = TimeGrid(span=40.0)
    fine = TimeGrid(span=44.0, inner_width=0.125, outer_width=0.5, m=20)
    W0 = compute_W(LONG_ONLY, v, x, d.a, grid=base, mode="empirical")
    W1 = compute_W(LONG_ONLY, v, x, d.a, grid=fine, mode="empirical")
    assert np.linalg.norm(W0) > 1e-6
    assert np.linalg.norm(W1 - W0) <= 1e-8
    np.testing.assert_allclose(W0, d.W, atol=1e-10)


def test_ode_oracle_zero_field():
    m = FieldModel(family=Family.ZERO)
    o = ode_oracle(m, np.array([0.5, 0.5]), np.array([1.0, -1.0]))
    np.testing.assert_allclose(o.a_est, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(o.b_est, [1.0, -1.0], atol=1e-10)


def test_input_errors():
    with pytest.raises(NonPerpendicular):
        scatter(MIXED, np.array([0.9, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(NonPerpendicular):
        ode_oracle(MIXED, np.array([0.9, 0.0]), np.array([1.0, 1.0]))
    strong = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0).with_beta(0.3)
    slow = np.array([0.5 * bounds.mu_l(strong), 0.0])
    with pytest.raises(BelowThreshold):
        scatter(strong, slow, np.array([0.0, 1.0]))
    with pytest.raises(BelowThreshold):
        ode_oracle(strong, slow, np.array([0.0, 1.0]))
    with pytest.raises(ConditionViolated):
        scatter(FULL.with_beta(1e-3), np.array([0.9, 0.0]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        ode_oracle(MIXED, np.array([0.9, 0.0]), np.array([0.0, 1.0]), T=2.0)
