from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from relscat.errors import SpeedExceeded
from relscat.fields import (Family, FieldModel, eval_field, fd_step, total_force,
                            verify_closure, verify_decay)

RNG = np.random.default_rng(7)
MODELS = [
    FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, q_s=0.7, m_l=0.4, m_s=0.3),
    FieldModel(family=Family.SOFT_COULOMB, alpha=0.5, q_l=-0.3, q_s=0.2, m_l=0.1, m_s=-0.6),
    FieldModel(family=Family.GAUSSIAN_BUMP, q_l=0.2, q_s=1.0, m_l=0.1, m_s=0.3, width=0.7,
               center=(0.3, -0.2)),
    FieldModel(n=3, family=Family.SOFT_COULOMB, q_l=1.0, q_s=0.5, m_l=0.3, m_s=0.2),
]


def radial_probes(n, rmax=1e4, k=80):
    radii = np.concatenate([[0.0], np.geomspace(1e-3, rmax, k)])
    dirs = RNG.normal(size=(6, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return (radii[:, None, None] * dirs[None]).reshape(-1, n)


def test_zero_field_components():
    out = eval_field(FieldModel(), [0.3, -2.0])
    for part in out:
        assert np.all(np.asarray(part) == 0.0)


def test_soft_coulomb_at_origin():
    m = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0)
    vl, gvl, *_ = eval_field(m, [0.0, 0.0])
    assert vl == 1.0
    np.testing.assert_array_equal(gvl, [0.0, 0.0])


def test_soft_coulomb_closed_form():
    m = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0)
    x = np.array([1.0, 0.0])
    vl, gvl, *_ = eval_field(m, x)
    np.testing.assert_allclose(vl, 2**-0.5, rtol=1e-15)
    np.testing.assert_allclose(gvl, [-(2**-1.5), 0.0], rtol=1e-15)
    h = 1e-6
    fd = [(m.potential(x + h * e, "long") - m.potential(x - h * e, "long")) / (2 * h)
          for e in np.eye(2)]
    np.testing.assert_allclose(fd, gvl, atol=1e-9)
    np.testing.assert_allclose(total_force(m, x, [0.0, 0.0]), [2**-1.5, 0.0], rtol=1e-15)


def test_total_force_checks_speed():
    m = MODELS[0]
    assert np.all(total_force(FieldModel(), [1.0, 1.0], [0.5, 0.1]) == 0.0)
    with pytest.raises(SpeedExceeded):
        total_force(m, [0.0, 0.0], [1.0, 0.1])


@pytest.mark.parametrize("model", MODELS)
def test_antisymmetry(model):
    x = RNG.normal(scale=3.0, size=(200, model.n))
    for part in ("long", "short", "total"):
        B = model.magnetic(x, part)
        assert np.all(B + np.swapaxes(B, -1, -2) == 0.0)


@pytest.mark.parametrize("model", MODELS)
def test_magnetic_force_does_no_work(model):
    pure = replace(model, q_l=0.0, q_s=0.0)
    x = RNG.normal(scale=5.0, size=(10_000, model.n))
    v = RNG.normal(size=(10_000, model.n))
    v *= RNG.uniform(0, model.c, size=(10_000, 1)) / np.linalg.norm(v, axis=1, keepdims=True)
    f = pure.force(x, v)
    dot = np.einsum("ri,ri->r", f, v)
    assert np.max(np.abs(dot)) <= 1e-15 * max(1.0, np.max(np.abs(f)))


@pytest.mark.parametrize("model", MODELS)
def test_gradients_match_finite_differences(model):
    x = RNG.normal(scale=2.0, size=(1000, model.n))
    h = fd_step(x)[:, None]
    for part in ("long", "short"):
        grad = model.grad_potential(x, part)
        hess = model.hessian_potential(x, part)
        fd = np.empty_like(grad)
        fdh = np.empty_like(hess)
        for k in range(model.n):
            e = np.zeros(model.n)
            e[k] = 1.0
            fd[:, k] = (model.potential(x + h * e, part) - model.potential(x - h * e, part)) / (2 * h[:, 0])
            fdh[:, :, k] = (model.grad_potential(x + h * e, part)
                            - model.grad_potential(x - h * e, part)) / (2 * h)
        scale = max(1.0, np.max(np.abs(grad)))
        np.testing.assert_allclose(fd, grad, atol=1e-6 * scale)
        np.testing.assert_allclose(fdh, hess, atol=1e-6 * max(1.0, np.max(np.abs(hess))))


@pytest.mark.parametrize("model", MODELS)
def test_decay_constants_hold_out_to_1e4(model):
    rep = verify_decay(model, radial_probes(model.n))
    assert rep.passed, rep.ratios
    assert rep.max_ratio <= 1.0 + 1e-8


def test_decay_report_zero_field():
    rep = verify_decay(FieldModel(), radial_probes(2))
    assert rep.passed
    assert all(r == 0.0 for r in rep.ratios.values())


def test_halved_constants_fail_with_ratio_two():
    m = FieldModel(family=Family.SOFT_COULOMB, q_l=1.0, q_s=1.0, m_l=0.5, m_s=0.5)
    halved = replace(m, beta_l=tuple(b / 2 for b in m.beta_l),
                     beta_s=tuple(b / 2 for b in m.beta_s))
    rep = verify_decay(halved, radial_probes(2))
    assert not rep.passed
    # the stored constants carry a 1% sampling margin
    assert 1.9 <= rep.max_ratio <= 2.0 + 1e-8


def test_closure():
    assert verify_closure(FieldModel(), radial_probes(2)) == 0.0
    assert verify_closure(MODELS[0], radial_probes(2, 1e2)) == 0.0
    assert verify_closure(MODELS[3], radial_probes(3, 1e2)) <= 1e-6


@pytest.mark.parametrize("model", MODELS[:3])
def test_force_decay_bounds(model):
    """|F^l| <= 2n beta_1^l (1+|x|)^(-alpha-1) and |F^s| <= 2n beta_2^s (1+|x|)^(-alpha-2)."""
    x = radial_probes(2)
    v = RNG.normal(size=x.shape)
    v *= RNG.uniform(0, 1, size=(len(v), 1)) / np.linalg.norm(v, axis=1, keepdims=True)
    r = np.linalg.norm(x, axis=1)
    n, a = model.n, model.alpha
    fl = np.linalg.norm(model.force(x, v, "long"), axis=1)
    fs = np.linalg.norm(model.force(x, v, "short"), axis=1)
    assert np.all(fl <= 2 * n * model.beta_l[1] * (1 + r) ** (-a - 1) * (1 + 1e-12))
    assert np.all(fs <= 2 * n * model.beta_s[1] * (1 + r) ** (-a - 2) * (1 + 1e-12))


coord = st.floats(-20, 20, allow_nan=False)
point = arrays(float, 2, elements=coord)
vel = arrays(float, 2, elements=st.floats(-0.7, 0.7, allow_nan=False))
EPS = np.linspace(0, 1, 101)


def _seg_sup(x, y, power):
    pts = EPS[:, None] * x + (1 - EPS[:, None]) * y
    return np.max((1 + np.linalg.norm(pts, axis=1)) ** (-power))


@given(point, point, vel, vel)
def test_force_lipschitz_bounds(x, y, v, w):
    model = MODELS[0]
    n, a, c = 2, model.alpha, model.c
    bl, bs = model.beta_l, model.beta_s
    dl = np.linalg.norm(model.force(x, v, "long") - model.force(y, w, "long"))
    rl = (n * bl[1] / c * np.linalg.norm(v - w) * _seg_sup(x, y, a + 1)
          + 2 * n**1.5 * bl[2] * np.linalg.norm(x - y) * _seg_sup(x, y, a + 2))
    ds = np.linalg.norm(model.force(x, v, "short") - model.force(y, w, "short"))
    rs = (n * bs[1] / c * np.linalg.norm(v - w) * _seg_sup(x, y, a + 2)
          + 2 * n**1.5 * bs[2] * np.linalg.norm(x - y) * _seg_sup(x, y, a + 3))
    assert dl <= rl * (1 + 1e-6) + 1e-15
    assert ds <= rs * (1 + 1e-6) + 1e-15


def test_model_validation():
    with pytest.raises(ValueError):
        FieldModel(n=1)
    with pytest.raises(ValueError):
        FieldModel(alpha=1.5)
    with pytest.raises(ValueError):
        FieldModel(family=Family.GAUSSIAN_BUMP, q_s=1.0, width=0.0)


def test_scaling_and_splits():
    m = MODELS[0]
    half = m.scaled(0.5)
    np.testing.assert_allclose(half.beta, m.beta / 2, rtol=1e-15)
    np.testing.assert_allclose(m.with_beta(1e-3).beta, 1e-3, rtol=1e-15)
    x = RNG.normal(size=(20, 2))
    v = 0.5 * RNG.uniform(size=(20, 2))
    np.testing.assert_allclose(m.long_range_only().force(x, v) + m.short_range_only().force(x, v),
                               m.force(x, v), rtol=1e-14)
    assert not m.long_range_only().has_short_range
    assert not m.short_range_only().has_long_range
