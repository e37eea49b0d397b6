import math

import numpy as np
import pytest

from relscat import bounds
from relscat.fields import Family, FieldModel
from relscat.kinematics import mu

TWO32 = 2**1.5


def _model_with_beta1(b):
    return FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, beta_l=(b, b, b), beta_s=(0, 0, 0))


def test_mu_l_examples():
    assert bounds.mu_l(FieldModel()) == 0.0
    m = _model_with_beta1(1e-4)
    np.testing.assert_allclose(bounds.mu_l(m), mu(0.1024), rtol=1e-15)
    assert bounds.mu_l_sigma(m, 0.0) == bounds.mu_l(m)
    sig = np.linspace(0, 50, 20)
    vals = [bounds.mu_l_sigma(m, s) for s in sig]
    assert all(v <= bounds.mu_l(m) for v in vals)
    assert np.all(np.diff(vals) < 0)


def test_rho0_residual_example():
    root = bounds.rho0(1.0, 0.25, 1e-6, 1.0, 1.0, 2)
    assert TWO32 * 0.25 < root < 1.0
    assert abs(bounds.rho0_rhs(root, 1.0, 0.25, 1e-6, 1.0, 1.0, 2) - 1.0) <= 1e-12


def test_rho0_small_beta_limit():
    r = 0.2
    betas = np.array([1e-6, 1e-8, 1e-10, 1e-12])
    gaps = np.array([bounds.rho0(1.0, r, b, 1.0) for b in betas]) - TWO32 * r
    assert np.all(gaps > 0) and np.all(np.diff(gaps) < 0)
    # the gap shrinks like sqrt(beta) once kappa is small
    np.testing.assert_allclose(gaps[2] / gaps[3], 10.0, rtol=0.01)
    assert bounds.rho0(1.0, r, 0.0, 1.0) == TWO32 * r


@pytest.mark.parametrize("fn,rhs", [(bounds.rho0, bounds.rho0_rhs),
                                    (bounds.rho0_tilde, bounds.rho0_tilde_rhs)])
def test_roots_monotone_in_beta(fn, rhs):
    betas = np.geomspace(1e-8, 1e-3, 10)
    roots = [fn(2.0, 0.15, b, 0.8) for b in betas]
    for b, rt in zip(betas, roots):
        assert abs(rhs(rt, 2.0, 0.15, b, 0.8) - 1.0) <= 1e-12
    assert np.all(np.diff(roots) > 0)


def test_radius_validation():
    with pytest.raises(ValueError):
        bounds.rho0(1.0, 0.5, 1e-6, 1.0)
    with pytest.raises(ValueError):
        bounds.rho0_tilde(1.0, 0.0, 1e-6, 1.0)


def test_conditions_scale_with_beta():
    m = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, q_s=1.0, m_l=0.5, m_s=0.5)
    a, b = m.with_beta(1e-4), m.with_beta(1e-5)
    for fn in (bounds.lambda0,):
        np.testing.assert_allclose(fn(a, 0.9), 10 * fn(b, 0.9), rtol=1e-12)
    r = 0.1
    assert bounds.standard_condition(a, 0.9, 1.0, r) > bounds.standard_condition(b, 0.9, 1.0, r)
    # bounds quadratic in beta
    np.testing.assert_allclose(bounds.born_a_bound(a, 0.9, 1.0, r), 100 * bounds.born_a_bound(b, 0.9, 1.0, r),
                               rtol=1e-12)
    assert math.isinf(bounds.standard_condition(a, 0.9, 1.0, 0.9 / TWO32))


def test_best_radius_improves_on_default():
    m = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, q_s=1.0, m_l=0.5, m_s=0.5).with_beta(1e-4)
    for s in (0.9, 0.99):
        r = bounds.best_radius(m, s, 1.0)
        assert 0 < r < s / TWO32
        assert (bounds.standard_condition(m, s, 1.0, r)
                <= bounds.standard_condition(m, s, 1.0, bounds.default_radius(s)))
