import numpy as np
import pytest

from relscat import bounds
from relscat.errors import ConditionViolated
from relscat.fields import Family, FieldModel
from relscat.free import FUTURE, PAST, default_grid, solve_free
from relscat.grid import TimeGrid
from relscat.kinematics import g_diff, g_inv
from relscat.modified import (a_tilde, compute_W_tilde, modified_batch, scatter_mod,
                              solve_b_tilde, solve_deflection_mod)
from relscat.scattering import ode_oracle

BASE = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, q_s=1.0, m_l=0.5, m_s=0.5)
MIXED = FieldModel(family=Family.SOFT_COULOMB, q_l=3e-4, m_l=2e-4, q_s=0.05, m_s=0.03)
CENTRAL = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0).with_beta(1e-3)


def test_zero_field():
    m = FieldModel(family=Family.ZERO)
    v, x = np.array([0.0, 0.7]), np.array([2.0, 0.0])
    d = scatter_mod(m, v, x)
    np.testing.assert_array_equal(d.a_tilde, v)
    assert np.all(d.b_tilde_sc == 0) and np.all(d.W_tilde == 0)
    defl = solve_deflection_mod(m, v, x)
    assert np.all(defl.y_minus.deviation_rate == 0)


@pytest.fixture(scope="module")
def admissible():
    m = BASE.with_beta(1e-5)
    s, dist, phi = 0.95, 1.0, 1.1
    theta = np.array([np.cos(phi), np.sin(phi)])
    x = dist * np.array([-theta[1], theta[0]])
    r = bounds.best_radius(m, s, dist, "modified")
    assert s > bounds.rho0_tilde(dist, r, m.beta, m.alpha, m.c, m.n)
    D = modified_batch(m, s * theta, x, r, 1e-13, "strict")
    return m, s, dist, r, theta, x, D


def test_admissible_invariants(admissible):
    m, s, dist, r, theta, x, D = admissible
    a_sc, b_sc = D["a_sc"][0], D["b_sc"][0]
    assert np.linalg.norm(b_sc) <= 0.5
    assert np.linalg.norm(a_sc) <= 2 ** -2.5 * s
    assert abs(np.linalg.norm(s * theta + a_sc) - s) <= 1e-8 * s
    assert np.linalg.norm(a_sc) <= bounds.a_tilde_sc_bound(m, s, dist, r)
    assert np.linalg.norm(b_sc) <= bounds.b_tilde_sc_bound(m, s, dist, r)
    t = D["grid"].t
    rate = np.linalg.norm(D["y_rate"][0], axis=-1)
    assert np.all(rate[t <= 0] <= bounds.deflection_rate_bound_mod(m, s, dist, r, t[t <= 0]))
    prate = np.linalg.norm(D["bt"]["yp_rate"][0], axis=-1)
    assert np.all(prate[t >= 0] <= bounds.outgoing_rate_bound_mod(m, s, dist, r, t[t >= 0]))
    assert D["norm"][0] <= r
    assert D["bt"]["contraction"][0] <= 1 / 6 + 0.05


def test_single_ray_api_agrees_with_batch(admissible):
    m, s, dist, r, theta, x, D = admissible
    defl = solve_deflection_mod(m, s * theta, x, r, 1e-13)
    np.testing.assert_allclose(a_tilde(m, s * theta, x, defl), D["a"][0], atol=1e-15)
    b_sc, y_plus, info = solve_b_tilde(m, s * theta, x, defl)
    np.testing.assert_allclose(b_sc, D["b_sc"][0], atol=1e-15)
    assert info["contraction"] <= 1 / 6 + 0.05
    W = compute_W_tilde(m, s * theta, x, D["a"][0], grid=D["grid"])
    np.testing.assert_allclose(W, D["W_tilde"][0], atol=1e-14)


def test_paths_match_anchored_ode():
    v, x = np.array([0.95, 0.0]), np.array([0.0, 2.0])
    d = scatter_mod(MIXED, v, x, mode="empirical")
    defl = solve_deflection_mod(MIXED, v, x, mode="empirical")
    o = ode_oracle(MIXED, v, x, t_start=1e9, anchored=True)
    t_in = np.linspace(-50, 0, 26)
    np.testing.assert_allclose(defl.path(t_in), o.position(t_in), atol=1e-6)
    t_out = np.linspace(10, 50, 9)
    out = d.z_plus.position(t_out) + d.y_plus.deviation_at(t_out)
    np.testing.assert_allclose(out, o.position(t_out), atol=1e-5)
    np.testing.assert_allclose(d.a_tilde, o.a_est, atol=1e-9)


def test_strict_b_tilde_needs_contraction_condition():
    v, x = np.array([0.99, 0.0]), np.array([0.0, 3.0])
    strong = BASE.with_beta(2e-2)
    defl = solve_deflection_mod(strong, v, x, mode="empirical")
    assert bounds.b_tilde_condition(strong, 0.99, 3.0, defl.r) > 1
    with pytest.raises(ConditionViolated):
        solve_b_tilde(strong, v, x, defl, mode="strict")


@pytest.mark.parametrize("x", [np.zeros(2), np.array([0.0, 2.0])])
def test_W_tilde_time_reversal(x):
    """Without magnetic part, z_+(a, x, t) = z_-(-a, x, -t); both integrals become past ones."""
    v = np.array([0.9, 0.0])
    grid = default_grid(CENTRAL)
    dist = float(np.linalg.norm(x))
    d = scatter_mod(CENTRAL, v, x, mode="empirical")
    kw = dict(mode="empirical", dist=dist, qnorm=0.0)
    zm = solve_free(CENTRAL, v, x, PAST, 1e-14, grid, **kw)
    zr = solve_free(CENTRAL, -d.a_tilde, x, PAST, 1e-14, grid, **kw)
    _, pm, vm = zm.nodes()
    _, pr, vr = zr.nodes()
    I = (grid.half_total(CENTRAL.force(pm, vm, part="long"), -1)
         + grid.half_total(CENTRAL.force(pr, -vr, part="long"), -1))
    np.testing.assert_allclose(d.W_tilde, g_diff(g_inv(v), I), atol=1e-10)
    if dist == 0:
        # the ray passes through the centre
        np.testing.assert_allclose(d.W_tilde, 0.0, atol=1e-15)
    else:
        assert np.linalg.norm(d.W_tilde) > 1e-5
    zp = solve_free(CENTRAL, d.a_tilde, x, FUTURE, 1e-14, grid, **kw)
    t = np.linspace(0, 40, 21)
    np.testing.assert_allclose(zp.position(t), zr.position(-t), atol=1e-10)


def test_W_tilde_trivial_and_refined():
    v, x = np.array([0.9, 0.0]), np.array([0.0, 3.0])
    short = FieldModel(family=Family.SOFT_COULOMB, q_s=0.1)
    np.testing.assert_array_equal(compute_W_tilde(short, v, x, v), 0.0)
    long_only = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, m_l=0.5).with_beta(1e-3)
    d = scatter_mod(long_only, v, x, mode="empirical")
    W0 = compute_W_tilde(long_only, v, x, d.a_tilde, grid=TimeGrid(span=40.0), mode="empirical")
    fine = TimeGrid(span=44.0, inner_width=0.125, outer_width=0.5, m=20)
    W1 = compute_W_tilde(long_only, v, x, d.a_tilde, grid=fine, mode="empirical")
    assert np.linalg.norm(W0) > 1e-6
    assert np.linalg.norm(W1 - W0) <= 1e-8
