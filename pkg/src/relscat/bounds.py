"""Explicit thresholds, contraction constants and error bounds.

Every function takes the field model (for n, alpha, c and the decay
constants), the incoming speed ``speed`` = |v_-|, the impact distance
``dist`` = |x_-| and the radius ``r`` of the contraction ball.  Pointwise
bounds accept array-valued times.

Shorthand used below::

    h     = sqrt(1 - speed^2/c^2)
    kappa = speed / 2^(3/2) - r
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NoRoot
from .kinematics import mu

SQRT2 = math.sqrt(2.0)
TWO32 = 2.0 ** 1.5


def _h(speed, c):
    s = speed / c
    # the factored form keeps full relative accuracy as speed -> c
    return math.sqrt(max(0.0, (1.0 - s) * (1.0 + s)))


def _kappa(speed, r):
    return speed / TWO32 - r


def _b(model):
    b1l = model.beta_l[1]
    b2l = model.beta_l[2]
    b3s = model.beta_s[2]
    beta2 = model.beta2
    return b1l, b2l, b3s, beta2, model.beta


# ---------------------------------------------------------------------------
# speed thresholds

def mu_l(model):
    """Minimal speed for which the long-range free solutions exist."""
    b1l, b2l = model.beta_l[1], model.beta_l[2]
    return mu(2.0**8 / model.alpha * model.n**2 * max(b1l, b2l), model.c)


def mu_l_sigma(model, sigma):
    """Threshold for free solutions anchored at distance ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    b1l, b2l = model.beta_l[1], model.beta_l[2]
    arg = 2.0**8 / model.alpha * model.n**2 * max(b1l, b2l) * (1.0 + sigma / SQRT2) ** (-model.alpha)
    return mu(arg, model.c)


# ---------------------------------------------------------------------------
# free solutions

def free_condition(model, speed, dist=0.0, qnorm=0.0):
    """Left-hand side of the admissibility condition for z_pm (must be <= 1)."""
    b1l, b2l = model.beta_l[1], model.beta_l[2]
    base = 1.0 + dist / SQRT2 - qnorm
    if base <= 0:
        return math.inf
    h = _h(speed, model.c)
    return (2.0**8 * model.n**2 * max(b1l, b2l) * h
            / (model.alpha * speed**2 * base**model.alpha))


def free_velocity_bound(model, speed, dist=0.0, qnorm=0.0):
    """sup_t |dz/dt - w| for the free solution anchored at x + q."""
    base = 1.0 + dist / SQRT2 - qnorm
    h = _h(speed, model.c)
    return (2.0**4.5 * model.n**1.5 * model.beta_l[1] * h
            / (model.alpha * speed * base**model.alpha))


# ---------------------------------------------------------------------------
# standard scattering map

def lambda0(model, speed):
    b1l, _, _, beta2, _ = _b(model)
    h = _h(speed, model.c)
    return 2.0**8 * model.n**2 * max(b1l, beta2) * h / (model.alpha * speed**2)


def lambda1(model, speed, dist, r):
    """Radius of the ball mapped into by A (the ratio lambda1 / r must be < 1)."""
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 4 * n**1.5 * h * (r * b1l / c + 2 * beta2 * (math.sqrt(n) * (dist + r) + 1)) * (1 + 1 / k)
    return num / (a * k * (1 - r) ** (a + 1))


def lambda2(model, speed, r):
    """Lipschitz constant of A in the weighted norm."""
    b1l, _, b3s, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 4 * n**1.5 * h * ((b1l + beta2) / c + 2 * math.sqrt(n) * (beta2 + b3s)) * (1 + 1 / k)
    return num / (a * k * (1 - r) ** (a + 2))


def lambda3(model, speed, r):
    """Left-hand side of the condition under which the deflection estimates hold."""
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 24 * n**2 * h * max(b1l, beta2) * (1 + 1 / c) * (1 + 1 / k)
    return num / (a * k * (1 - r) ** (a + 1))


def ball_speed_condition(model, speed, r):
    b1l, _, _, beta2, _ = _b(model)
    n, a = model.n, model.alpha
    h, k = _h(speed, model.c), _kappa(speed, r)
    return 2**2.5 * n * max(b1l, beta2) * h / (a * k**2 * (1 - r) ** (a + 1))


def standard_condition(model, speed, dist, r):
    """max(lambda0, lambda1/r, lambda2, lambda3); the contraction needs < 1."""
    if not 0 < r < min(1.0, speed / TWO32):
        return math.inf
    return max(lambda0(model, speed), lambda1(model, speed, dist, r) / r,
               lambda2(model, speed, r), lambda3(model, speed, r))


def standard_condition_upper(model, speed, dist, r):
    """The closed-form majorant of ``standard_condition``."""
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    return (32 * n**2 * h * model.beta * (1 + dist + 1 / c) * (1 + 1 / k)
            / (a * k * r * (1 - r) ** (a + 2)))


def deflection_rate_bound(model, speed, dist, r, t):
    """|dy_-/dt (t)| for t <= 0."""
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    t = np.asarray(t, dtype=float)
    num = 2 * n**1.5 * h * (r * b1l / c + 2 * beta2 * (math.sqrt(n) * (dist + r) + 1))
    return num / ((a + 1) * k * (1 - r - k * t) ** (a + 1))


def a_sc_bound(model, speed, dist, r):
    """|a_sc|."""
    b1l, _, _, beta2, _ = _b(model)
    n, a = model.n, model.alpha
    h, k = _h(speed, model.c), _kappa(speed, r)
    base = 1 + dist / SQRT2 - r
    return 8 * n**1.5 * h / (k * base**a) * (b1l / a + beta2 / ((a + 1) * base))


def b_sc_bound(model, speed, dist, r):
    """|b_sc|."""
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 4 * n**1.5 * h * (r * b1l / c + beta2 * (math.sqrt(n) * (4 * dist + r) + 4))
    return num / (a * (a + 1) * k**2 * (1 - r) ** a)


def outgoing_rate_bound(model, speed, dist, r, t):
    """|dy_+/dt (t)| for t >= 0."""
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    t = np.asarray(t, dtype=float)
    num = 2 * n**1.5 * (r * b1l / c + 2 * beta2 * (math.sqrt(n) * (3 * dist + r) + 3)) * h
    return num / ((a + 1) * k * (1 - r + t * k) ** (a + 1))


def born_a_bound(model, speed, dist, r):
    """|a_sc - Born term| at fixed speed."""
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 520 * n**4 * model.beta**2 * h**2 * (r / c + dist + 1) * (1 / c + 1) * (1 + 1 / k) ** 2
    return num / (a**2 * k**2 * (1 - r) ** (2 * a + 3))


def born_b_bound(model, speed, dist, r):
    """|b_sc - W - Born term| at fixed speed."""
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 468 * n**4 * model.beta**2 * h**2 * (r / c + dist + 1) * (1 / c + 1) * (1 + 1 / k) ** 2
    return num / (a**2 * (a + 1) * k**3 * (1 - r) ** (2 * a + 2))


def high_energy_a_bound(model, rho, dist, r):
    """High-energy residual of (rho/h) a_sc against the line integral of F(., rho theta)."""
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(rho, c), _kappa(rho, r)
    num = 640 * n**4 * rho * (r / c + dist + 1) * (1 / c + 1) * (1 + 1 / k) ** 2
    return model.beta**2 * h * num / (a**2 * k**2 * (1 - r) ** (2 * a + 3))


def high_energy_b_bound(model, rho, dist, r):
    """High-energy residual of (rho^2/h)(b_sc - W)."""
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(rho, c), _kappa(rho, r)
    num = 464 * n**4 * rho**2 * (r / c + dist + 1) * (1 / c + 1) * (1 + 1 / k) ** 2
    return model.beta**2 * h * num / (a**2 * (a + 1) * k**3 * (1 - r) ** (2 * a + 2))


# ---------------------------------------------------------------------------
# modified scattering map

def _mod_base(dist, r):
    return 1 - r + dist / SQRT2


def ball_speed_condition_mod(model, speed, dist, r):
    b1l, _, _, beta2, _ = _b(model)
    n, a = model.n, model.alpha
    h, k = _h(speed, model.c), _kappa(speed, r)
    base = 1 + dist / SQRT2 - r
    return 2**1.5 * n * max(b1l, beta2) * h * (1 + 1 / base) / (a * k**2 * base**a)


def lambda1_mod(model, speed, dist, r):
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    base = _mod_base(dist, r)
    num = 2 * n**1.5 * h * (b1l * r / c + 4 * beta2 * (math.sqrt(n) * r + 1))
    return num / (a * k * base**a) * (1 + 1 / k + 1 / base)


def lambda2_mod(model, speed, dist, r):
    b1l, _, b3s, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    base = _mod_base(dist, r)
    inner = b1l / c + 2 * beta2 * math.sqrt(n) + (beta2 / c + 2 * b3s * math.sqrt(n)) / base
    return 4 * n**1.5 * h * inner / (a * k * base**a) * (1 + 1 / k + 1 / base)


def b_tilde_condition(model, speed, dist, r):
    """Left-hand side of the condition for the b-tilde contraction (must be <= 1)."""
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    if k <= 0:
        return math.inf
    return (48 * n**2 * (1 / c + 1) * max(b1l, beta2) * h
            / (a * k * (0.5 + dist / SQRT2) ** a) * (1 + 1 / k))


def modified_condition(model, speed, dist, r):
    """Right-hand side of the root equation for rho-tilde_0 evaluated at ``speed``.

    Majorises max(lambda1~/r, lambda2~, lambda3~); admissible iff < 1.
    """
    if not 0 < r < min(0.5, speed / TWO32):
        return math.inf
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    return (72 * n**2 * (1 / c + 1) * model.beta * h * (1 + 1 / k)
            / (a * r * k * (0.5 + dist / SQRT2) ** a))


def g_map_bound(model, speed, dist, r):
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 4 * n**1.5 * h * (b1l / c + 2 * math.sqrt(n) * beta2 + 4 * beta2)
    return num / (a * (a + 1) * k**2 * (0.5 + dist / SQRT2) ** a)


def g_map_lipschitz(model, speed, dist):
    """Lipschitz constant of the b-tilde map (proved <= 1/6 under the condition)."""
    b1l, b2l = model.beta_l[1], model.beta_l[2]
    n, a, c = model.n, model.alpha, model.c
    h = _h(speed, c)
    num = 4 * n**1.5 * h * (b1l / c + 2 * math.sqrt(n) * b2l)
    return num / (a * (a + 1) * (speed / TWO32) ** 2 * (0.5 + dist / SQRT2) ** a)


def deflection_rate_bound_mod(model, speed, dist, r, t):
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    t = np.asarray(t, dtype=float)
    num = 2 * n**1.5 * h * (r * b1l / c + 2 * beta2 * (math.sqrt(n) * r + 1))
    return num / ((a + 1) * k * (1 - r + dist / SQRT2 - k * t) ** (a + 1))


def a_tilde_sc_bound(model, speed, dist, r):
    b1l, _, _, beta2, _ = _b(model)
    n, a = model.n, model.alpha
    h, k = _h(speed, model.c), _kappa(speed, r)
    return 24 * n**1.5 * h * max(b1l, beta2) / (a * k * (0.5 + dist / SQRT2) ** a)


def b_tilde_sc_bound(model, speed, dist, r):
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    return (24 * n**2 * h * max(b1l, beta2) * (1 / c + 1)
            / (a * (a + 1) * k**2 * (0.5 + dist / SQRT2) ** a))


def outgoing_rate_bound_mod(model, speed, dist, r, t):
    b1l, _, _, beta2, _ = _b(model)
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    t = np.asarray(t, dtype=float)
    num = 20 * n**4 * h * max(b1l, beta2) * (1 / c + 1)
    return num / ((a + 1) * k * (0.5 + dist / SQRT2 + t * speed / TWO32) ** (a + 1))


def high_energy_a_bound_mod(model, speed, dist, r):
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 944 * n**4 * model.beta**2 * h**2 * (r / c + 1) * (1 + 1 / c) * (1 + 1 / k) ** 2
    return num / (a**2 * k**2 * (0.5 + dist / SQRT2) ** (2 * a + 1))


def high_energy_b_bound_mod(model, speed, dist, r):
    n, a, c = model.n, model.alpha, model.c
    h, k = _h(speed, c), _kappa(speed, r)
    num = 808 * n**4 * model.beta**2 * h**2 * (1 / c + 1) ** 2 * (1 + 1 / k) ** 2
    return num / (a**2 * (a + 1) * k**3 * (0.5 + dist / SQRT2) ** (2 * a))


# ---------------------------------------------------------------------------
# minimal speeds

def rho0_rhs(rho, sigma, r, beta, alpha, c=1.0, n=2):
    h = _h(rho, c)
    k = _kappa(rho, r)
    if k <= 0:
        return math.inf
    return (32 * n**2 * h * beta * (1 + sigma + 1 / c) * (1 + 1 / k)
            / (alpha * k * r * (1 - r) ** (alpha + 2)))


def rho0_tilde_rhs(rho, sigma, r, beta, alpha, c=1.0, n=2):
    h = _h(rho, c)
    k = _kappa(rho, r)
    if k <= 0:
        return math.inf
    return (72 * n**2 * (1 / c + 1) * beta * h * (1 + 1 / k)
            / (alpha * r * k * (0.5 + sigma / SQRT2) ** alpha))


def _bisect_root(fun, lo, hi, target_tol=1e-12, max_iter=400):
    """Root of a continuous, strictly decreasing ``fun - 1`` on (lo, hi)."""
    best, best_err = None, math.inf
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = fun(mid)
        err = abs(val - 1.0)
        if err < best_err:
            best, best_err = mid, err
        if err <= target_tol:
            return mid
        if val > 1.0:
            lo = mid
        else:
            hi = mid
    if best is None:
        raise NoRoot("bracket collapsed before any evaluation")
    if best_err > target_tol:
        raise NoRoot(f"bisection stalled with |RHS-1| = {best_err:.3e}")
    return best


def rho0(sigma, r, beta, alpha, c=1.0, n=2):
    """Minimal speed above which the standard-map estimates hold."""
    if not 0 < r < min(1.0, c / TWO32):
        raise ValueError("r must lie in (0, min(1, c/2^(3/2)))")
    if beta <= 0:
        return TWO32 * r
    return _bisect_root(lambda p: rho0_rhs(p, sigma, r, beta, alpha, c, n), TWO32 * r, c)


def rho0_tilde(sigma, r, beta, alpha, c=1.0, n=2):
    """Minimal speed above which the modified-map estimates hold."""
    if not 0 < r < min(0.5, c / TWO32):
        raise ValueError("r must lie in (0, min(1/2, c/2^(3/2)))")
    if beta <= 0:
        return TWO32 * r
    return _bisect_root(lambda p: rho0_tilde_rhs(p, sigma, r, beta, alpha, c, n), TWO32 * r, c)


# ---------------------------------------------------------------------------
# radius selection

def default_radius(speed):
    """min(0.45, |v|/2^(3/2) - 0.05), floored to stay positive."""
    return max(min(0.45, speed / TWO32 - 0.05), 0.5 * speed / TWO32 * 0.5)


def best_radius(model, speed, dist, kind="standard"):
    """Radius minimising the admissibility quantity of the chosen map."""
    top = min(1.0, speed / TWO32) if kind == "standard" else min(0.5, speed / TWO32)
    cond = standard_condition if kind == "standard" else modified_condition
    if model.beta == 0:
        return 0.5 * top
    res = minimize_scalar(lambda s: math.log(cond(model, speed, dist, s * top)),
                          bounds=(1e-6, 1 - 1e-6), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x * top)
