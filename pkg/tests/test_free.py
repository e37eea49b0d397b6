import numpy as np
import pytest
from scipy.integrate import solve_ivp

from relscat import bounds
from relscat.errors import ConditionViolated, NoConvergence
from relscat.fields import Family, FieldModel
from relscat.free import (FUTURE, PAST, default_grid, geometry_margin, solve_free,
                          solve_free_batch)
from relscat.kinematics import g, g_inv

LONG = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, m_l=0.5).with_beta(1e-3)
CENTRAL = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0).with_beta(1e-3)


def test_zero_long_range_is_exact():
    m = FieldModel(family=Family.SOFT_COULOMB, q_s=0.3, m_s=0.1)
    w = np.array([0.3, 0.8])
    anchor = np.array([1.0, -2.0])
    for direction in (PAST, FUTURE):
        z = solve_free(m, w, anchor, direction)
        t, pos, vel = z.nodes()
        assert np.all(pos == anchor + t[..., None] * w)
        assert np.all(vel == w)


@pytest.mark.parametrize("direction", [PAST, FUTURE])
def test_admissible_solution_properties(direction):
    w = np.array([0.9, 0.0])
    anchor = np.array([0.0, 5.0])
    dist = 5.0
    assert bounds.free_condition(LONG, 0.9, dist, 0.0) < 1
    z = solve_free(LONG, w, anchor, direction, tol=1e-14, dist=dist, qnorm=0.0)
    assert z.info["residual"] <= 1e-14
    assert z.info["contraction"] <= 0.5
    np.testing.assert_allclose(z.position(np.array([0.0]))[0], anchor, atol=1e-12)
    _, _, vel = z.nodes()
    assert np.all(np.linalg.norm(vel, axis=-1) < LONG.c)
    sup = np.max(np.linalg.norm(vel - w, axis=-1))
    assert sup <= bounds.free_velocity_bound(LONG, 0.9, dist, 0.0)
    # deviation at |t| = 1e3 obeys the same bound
    t = np.array([-1e3 if direction == PAST else 1e3])
    assert np.linalg.norm(z.velocity(t)[0] - w) <= bounds.free_velocity_bound(LONG, 0.9, dist, 0.0)
    assert geometry_margin(z, dist, 0.0) >= 0.0


@pytest.mark.parametrize("direction", [PAST, FUTURE])
def test_free_solution_matches_ode(direction):
    """Integrate the long-range equation from far-field data back to the anchor."""
    w = np.array([0.9, 0.0])
    anchor = np.array([0.0, 5.0])
    z = solve_free(LONG, w, anchor, direction, tol=1e-14, dist=5.0, qnorm=0.0)
    T = 1e6 if direction == FUTURE else -1e6
    x_far = z.position(np.array([T]))[0]
    p_far = g_inv(z.velocity(np.array([T]))[0])

    def rhs(t, y):
        v = g(y[2:])
        return np.concatenate([v, LONG.force(y[:2], v, part="long")])

    ts = np.linspace(0, 100, 21) * np.sign(T)
    sol = solve_ivp(rhs, (T, 0.0), np.concatenate([x_far, p_far]), method="DOP853",
                    rtol=1e-13, atol=1e-13, dense_output=True)
    assert sol.success
    np.testing.assert_allclose(sol.sol(ts)[:2].T, z.position(ts), atol=1e-6)
    np.testing.assert_allclose(sol.sol(0.0)[:2], anchor, atol=1e-6)


def test_time_symmetry_for_central_field():
    v = np.array([0.8, 0.3])
    t = np.concatenate([np.linspace(0, 50, 26), np.geomspace(60, 1e8, 20)])
    zm = solve_free(CENTRAL, v, None, PAST, tol=1e-14)
    # time reversal alone, then composed with the parity x -> -x
    zp_rev = solve_free(CENTRAL, -v, None, FUTURE, tol=1e-14)
    zp = solve_free(CENTRAL, v, None, FUTURE, tol=1e-14)
    np.testing.assert_allclose(zm.position(-t), zp_rev.position(t), atol=1e-10, rtol=1e-14)
    np.testing.assert_allclose(zm.position(-t), -zp.position(t), atol=1e-10, rtol=1e-14)


def test_batch_agrees_with_single_solves():
    w = np.array([[0.9, 0.0], [0.0, 0.95]])
    anchor = np.array([[0.0, 2.0], [-3.0, 0.0]])
    out = solve_free_batch(LONG, w, anchor, FUTURE, tol=1e-14)
    for i in range(2):
        z = solve_free(LONG, w[i], anchor[i], FUTURE, tol=1e-14)
        np.testing.assert_allclose(out["rate"][i], z.deviation_rate, atol=1e-15)


def test_strict_mode_rejects_inadmissible_input():
    strong = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0).with_beta(0.05)
    with pytest.raises(ConditionViolated):
        solve_free(strong, np.array([0.9, 0.0]), None, FUTURE)
    with pytest.raises(ConditionViolated):
        solve_free(LONG, np.array([0.9, 0.0]), np.array([0.0, 1.0]), FUTURE, dist=0.0, qnorm=1.0)


def test_iteration_budget_enforced():
    with pytest.raises(NoConvergence):
        solve_free(LONG, np.array([0.9, 0.0]), None, FUTURE, max_iter=1)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        solve_free(LONG, np.zeros(2), None, FUTURE)
    with pytest.raises(ValueError):
        solve_free(LONG, np.array([0.9, 0.0]), None, "sideways")


def test_default_grid_covers_decay():
    grid = default_grid(LONG)
    assert grid.t_max ** -LONG.alpha * 10 <= 1e-15
