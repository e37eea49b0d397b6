"""Deflection fixed point, scattering data (a, b), correction W and an ODE oracle.

The trajectory with incoming data (v, x) is written x(t) = z_-(v, t) + x + y(t)
where the deflection y solves y = A(y),

    dA(f)/dt = g(g^{-1}(v) + int_{-inf}^t F(z_- + x + f))
               - g(g^{-1}(v) + int_{-inf}^t F^l(z_-)).

All differences of g are evaluated with ``g_diff`` from integrals of
pointwise force differences, so nothing cancels catastrophically even for
deflections many orders of magnitude below |v|.

The solvers are vectorised over rays: inputs carry a leading axis R and the
iteration keeps a per-ray active mask so converged rays stop early.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from . import bounds
from .errors import (BelowThreshold, ConditionViolated, ExtrapolationDiverged,
                     NoConvergence, NonPerpendicular, SpeedExceeded, StepFailure)
from .free import (FUTURE, PAST, TWO_SIDED, Trajectory, contraction_ratios,
                   default_grid, free_from_batch, solve_free, solve_free_batch)
from .kinematics import g_diff, g_inv

MAX_ITER = 200
NOISE = 1e-14
EMPIRICAL_RATIO = 0.9
EMPIRICAL_WINDOW = 5
PERP_TOL = 1e-12


# ---------------------------------------------------------------------------
# result types

@dataclass(frozen=True)
class DeflectionSolution:
    """Fixed point y_- of A (or of the modified operator) for one ray."""

    v_minus: np.ndarray
    x_minus: np.ndarray
    r: float
    y_minus: Trajectory
    norm_M: float
    z_minus: Trajectory
    iterations: int
    residual: float
    contraction: float
    mode: str
    modified: bool = False
    # arrays on the grid used by the data stage
    path_force: np.ndarray = field(default=None, repr=False)
    A0: np.ndarray = field(default=None, repr=False)

    def path(self, t):
        """x(t) = z_-(t) + x_- + y_-(t) (the shift is already in z_- for the modified map)."""
        shift = 0.0 if self.modified else self.x_minus
        return self.z_minus.position(t) + shift + self.y_minus.deviation_at(t)

    def path_velocity(self, t):
        return self.z_minus.velocity(t) + self.y_minus.grid.interpolate(
            self.y_minus.deviation_rate, t)


@dataclass(frozen=True)
class ScatteringDatum:
    """Scattering data of one ray together with solver diagnostics."""

    v_minus: np.ndarray
    x_minus: np.ndarray
    a: np.ndarray
    b: np.ndarray
    a_sc: np.ndarray
    b_sc: np.ndarray
    W: np.ndarray
    r: float
    iterations: int
    residual: float
    contraction: float
    mode: str
    y_plus: Trajectory | None = field(default=None, repr=False)
    z_plus: Trajectory | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# input checks

def check_ray(model, v, x):
    v = np.atleast_2d(np.asarray(v, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if v.shape[-1] != model.n or x.shape[-1] != model.n:
        raise ValueError(f"vectors must have n = {model.n} components")
    speed = np.linalg.norm(v, axis=-1)
    if np.any(speed == 0):
        raise ValueError("v_minus must be nonzero")
    if np.any(speed >= model.c):
        raise SpeedExceeded("|v_minus| >= c")
    dot = np.abs(np.einsum("ri,ri->r", v, x))
    if np.any(dot > PERP_TOL * np.maximum(1.0, speed * np.linalg.norm(x, axis=-1))):
        raise NonPerpendicular(f"v_minus . x_minus = {float(dot.max()):.3e} is not zero")
    return v, x, speed


def _radius(r, speed, modified):
    if r is None:
        r = np.array([bounds.default_radius(s) for s in speed])
    r = np.broadcast_to(np.asarray(r, dtype=float), speed.shape).copy()
    top = np.minimum(0.5 if modified else 1.0, speed / bounds.TWO32)
    if np.any(r <= 0) or np.any(r >= top):
        raise ValueError("r must lie in (0, min(%s, |v|/2^(3/2)))" % ("1/2" if modified else "1"))
    return r


def _weights(grid, r, kappa, extra):
    """Weight multiplying |df/dt| for t < 0 in the (weighted) M-norm."""
    t = grid.t[None]
    return np.maximum(1.0, 1.0 - r[:, None, None] + extra[:, None, None]
                      + kappa[:, None, None] * np.abs(t))


def weighted_norm(grid, rate, pos, weight):
    """max(sup_{t<0} weight |rate|, sup_{t>0} |rate|, sup_{t<0} |pos|) per ray."""
    neg = grid.t <= 0
    pos_mask = grid.t >= 0
    nr = np.linalg.norm(rate, axis=-1)
    npos = np.linalg.norm(pos, axis=-1)
    a = np.max(np.where(neg, weight * nr, 0.0), axis=(1, 2))
    b = np.max(np.where(pos_mask, nr, 0.0), axis=(1, 2))
    cc = np.max(np.where(neg, npos, 0.0), axis=(1, 2))
    return np.maximum(np.maximum(a, b), cc)


# ---------------------------------------------------------------------------
# shared fixed-point core

def _free_past(model, v, anchor, tol, mode, grid, modified):
    """z_-(v, anchor, .) for every ray, deduplicating identical inputs."""
    key = np.concatenate([v, anchor], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    n = v.shape[1]
    dist = np.linalg.norm(uniq[:, n:], axis=1) if modified else np.zeros(len(uniq))
    out = solve_free_batch(model, uniq[:, :n], uniq[:, n:], PAST, tol=min(tol, 1e-13),
                           grid=grid, mode=mode, dist=dist, qnorm=np.zeros(len(uniq)))
    return {k: (val[inv] if isinstance(val, np.ndarray) and val.shape[:1] == (len(uniq),)
                else val) for k, val in out.items()}


def deflection_batch(model, v, x, r=None, tol=1e-12, mode="strict", grid=None,
                     modified=False, max_iter=MAX_ITER):
    """Solve the deflection fixed point for R rays.

    Returns a dict of per-ray arrays; see ``solve_deflection`` for the
    single-ray interface.
    """
    v, x, speed = check_ray(model, v, x)
    c = model.c
    R, n = v.shape
    dist = np.linalg.norm(x, axis=-1)
    if modified:
        thresholds = [bounds.mu_l_sigma(model, d) for d in dist]
    else:
        thresholds = [bounds.mu_l(model)] * R
    for s, th in zip(speed, thresholds):
        if model.has_long_range and s <= th:
            raise BelowThreshold(f"|v_minus| = {s:.6g} <= threshold {th:.6g}")
    r = _radius(r, speed, modified)
    if mode == "strict" and not model.is_zero:
        cond = bounds.modified_condition if modified else bounds.standard_condition
        for s, d, rr in zip(speed, dist, r):
            lhs = cond(model, s, d, rr)
            if not lhs < 1.0:
                raise ConditionViolated(
                    f"contraction condition fails at |v|={s:.6g}, |x|={d:.6g}, r={rr:.6g}: {lhs:.6g} >= 1")
    grid = grid or default_grid(model)
    anchor = x if modified else np.zeros_like(x)
    zm = _free_past(model, v, anchor, tol, mode, grid, modified)

    tt = grid.t[None, :, :, None]
    zpos = anchor[:, None, None, :] + tt * v[:, None, None, :] + zm["dev"]
    zvel = v[:, None, None, :] + zm["rate"]
    base = zpos if modified else zpos + x[:, None, None, :]
    pK = g_inv(v, c)[:, None, None, :] + zm["K"]
    Fl0 = model.force(zpos, zvel, part="long")
    kappa = speed / bounds.TWO32 - r
    extra = dist / math.sqrt(2) if modified else np.zeros(R)
    weight = _weights(grid, r, kappa, extra)

    def apply(rate, idx):
        f = grid.cumulative_left(rate)
        Fx = model.force(base[idx] + f, zvel[idx] + rate)
        D = grid.cumulative_left(Fx - Fl0[idx])
        return g_diff(pK[idx], D, c), f, Fx

    shape = (R,) + grid.t.shape + (n,)
    rate = np.zeros(shape)
    iters = np.zeros(R, dtype=int)
    history = [[] for _ in range(R)]
    active = np.ones(R, dtype=bool)
    for it in range(1, max_iter + 1):
        idx = np.nonzero(active)[0]
        new, _, _ = apply(rate[idx], idx)
        d_rate = new - rate[idx]
        d_norm = weighted_norm(grid, d_rate, grid.cumulative_left(d_rate), weight[idx])
        rate[idx] = new
        iters[idx] = it
        done = []
        for j, ray in enumerate(idx):
            history[ray].append(d_norm[j])
            if d_norm[j] <= tol:
                done.append(ray)
                continue
            ratios = contraction_ratios(history[ray], NOISE)
            if mode != "strict" and len(ratios) >= EMPIRICAL_WINDOW and \
                    max(ratios[-EMPIRICAL_WINDOW:]) >= EMPIRICAL_RATIO:
                raise NoConvergence(
                    f"deflection: observed contraction {max(ratios[-EMPIRICAL_WINDOW:]):.3g}"
                    " >= 0.9 in empirical mode", ray=(v[ray].tolist(), x[ray].tolist()))
            if len(history[ray]) > 8 and d_norm[j] <= 100 * NOISE and \
                    min(history[ray][-6:-1]) <= d_norm[j]:
                done.append(ray)
        active[done] = False
        if not active.any():
            break
    else:
        ray = int(np.nonzero(active)[0][0])
        raise NoConvergence(f"deflection did not reach tol={tol:g} in {max_iter} iterations",
                            ray=(v[ray].tolist(), x[ray].tolist()))

    # one more application: A(y) for the returned y, and the force along x
    all_idx = np.arange(R)
    a_rate, y_pos, Fx = apply(rate, all_idx)
    a_pos = grid.cumulative_left(a_rate)
    residual = weighted_norm(grid, a_rate - rate, a_pos - y_pos, weight)
    norm_M = weighted_norm(grid, rate, y_pos, weight)
    pi, ni = grid.zero_index
    A0 = a_pos[:, pi, ni, :]
    I = grid.total(Fx)
    a = v + g_diff(g_inv(v, c), I, c)
    contraction = np.array([max(contraction_ratios(h, NOISE), default=0.0) for h in history])
    return dict(v=v, x=x, r=r, speed=speed, grid=grid, zm=zm, y_rate=rate, y_pos=y_pos,
                Fx=Fx, A0=A0, a=a, a_sc=a - v, iterations=iters, residual=residual,
                contraction=contraction, norm=norm_M, mode=mode, modified=modified)


def plus_deflection(model, grid, Fx, zp, pa):
    """Rate and value of y_+(t) = -int_t^inf (g(p_a - int F(x)) - g(p_a - int F^l(z_+)))."""
    Fl = model.force(zp["pos"], zp["vel"], part="long")
    J = grid.cumulative_right(Fx - Fl)
    rate = g_diff(pa + zp["K"], -J, model.c)
    return rate, -grid.cumulative_right(rate)


def _free_future(model, w, anchor, tol, mode, grid, dist=None, qnorm=None, warm=None):
    out = solve_free_batch(model, w, anchor, FUTURE, tol=min(tol, 1e-13), grid=grid,
                           mode=mode, dist=dist, qnorm=qnorm, warm=warm)
    tt = grid.t[None, :, :, None]
    out["pos"] = anchor[:, None, None, :] + tt * w[:, None, None, :] + out["dev"]
    out["vel"] = w[:, None, None, :] + out["rate"]
    return out


def scatter_batch(model, v, x, r=None, tol=1e-12, mode="strict", grid=None, with_W=True):
    """Full standard scattering data (a, b, a_sc, b_sc, W) for R rays."""
    d = deflection_batch(model, v, x, r, tol, mode, grid, modified=False)
    grid = d["grid"]
    c = model.c
    a = d["a"]
    zp = _free_future(model, a, np.zeros_like(a), tol, mode, grid)
    pa = g_inv(a, c)[:, None, None, :]
    yp_rate, yp_pos = plus_deflection(model, grid, d["Fx"], zp, pa)
    pi, ni = grid.zero_index
    b = d["x"] + (d["A0"] - yp_pos[:, pi, ni, :])
    d.update(zp=zp, yp_rate=yp_rate, yp_pos=yp_pos, b=b, b_sc=b - d["x"])
    if with_W:
        d["W"] = compute_W_arrays(model, grid, d["v"], d["x"], a, d["zm"], zp)
    else:
        d["W"] = np.full_like(b, np.nan)
    return d


def compute_W_arrays(model, grid, v, x, a, zm, zp):
    """Four-term long-range correction W for every ray (arrays on the grid)."""
    c = model.c
    if not model.has_long_range:
        return np.zeros_like(v)
    tt = grid.t[None, :, :, None]
    zpos = tt * v[:, None, None, :] + zm["dev"]
    zvel = v[:, None, None, :] + zm["rate"]
    xs = x[:, None, None, :]
    diff_m = model.force(zpos + xs, zvel, part="long") - model.force(zpos, zvel, part="long")
    D1 = grid.cumulative_left(diff_m)
    pK = g_inv(v, c)[:, None, None, :] + zm["K"]
    term1 = grid.half_total(g_diff(pK, D1, c), -1)
    diff_p = (model.force(zp["pos"] + xs, zp["vel"], part="long")
              - model.force(zp["pos"], zp["vel"], part="long"))
    J1 = grid.cumulative_right(diff_p)
    pa = g_inv(a, c)[:, None, None, :]
    term2 = grid.half_total(g_diff(pa + zp["K"], -J1, c), +1)
    return term1 + term2


# ---------------------------------------------------------------------------
# single-ray API

def _traj_from(d, i, rate, pos, direction):
    grid = d["grid"]
    n = d["v"].shape[1]
    return Trajectory(grid, np.zeros(n), np.zeros(n), direction, pos[i], rate[i])


def _deflection_solution(d, i, model):
    modified = d["modified"]
    anchor = d["x"][i] if modified else np.zeros(model.n)
    zm = free_from_batch(d["zm"], i, d["v"][i], anchor, PAST, model.c, d["mode"])
    y = _traj_from(d, i, d["y_rate"], d["y_pos"], TWO_SIDED)
    return DeflectionSolution(d["v"][i], d["x"][i], float(d["r"][i]), y, float(d["norm"][i]),
                              zm, int(d["iterations"][i]), float(d["residual"][i]),
                              float(d["contraction"][i]), d["mode"], modified,
                              d["Fx"][i], d["A0"][i])


def solve_deflection(model, v_minus, x_minus, r=None, tol=1e-12, mode="strict", grid=None):
    """Deflection y_- for one incoming ray (v_minus . x_minus = 0).

    Raises
    ------
    NonPerpendicular, BelowThreshold, ConditionViolated, NoConvergence
    """
    d = deflection_batch(model, v_minus, x_minus, r, tol, mode, grid, modified=False)
    return _deflection_solution(d, 0, model)


def scattering_data(model, deflection, tol=1e-12, with_W=True):
    """Scattering data of a converged standard deflection."""
    defl = deflection
    grid = defl.y_minus.grid
    c = model.c
    v, x = defl.v_minus, defl.x_minus
    I = grid.total(defl.path_force)
    a = v + g_diff(g_inv(v, c), I, c)
    zp = _free_future(model, a[None], np.zeros((1, model.n)), tol, defl.mode, grid)
    pa = g_inv(a, c)[None, None, None, :]
    yp_rate, yp_pos = plus_deflection(model, grid, defl.path_force[None], zp, pa)
    pi, ni = grid.zero_index
    b = x + (defl.A0 - yp_pos[0, pi, ni, :])
    if with_W:
        zm = dict(dev=defl.z_minus.deviation[None], rate=defl.z_minus.deviation_rate[None],
                  K=defl.z_minus.force_integral[None])
        W = compute_W_arrays(model, grid, v[None], x[None], a[None], zm, zp)[0]
    else:
        W = np.full(model.n, np.nan)
    y_plus = Trajectory(grid, np.zeros(model.n), np.zeros(model.n), FUTURE, yp_pos[0], yp_rate[0])
    z_plus = free_from_batch(zp, 0, a, np.zeros(model.n), FUTURE, c, defl.mode)
    return ScatteringDatum(v, x, a, b, a - v, b - x, W, defl.r, defl.iterations,
                           defl.residual, defl.contraction, defl.mode, y_plus, z_plus)


def scatter(model, v_minus, x_minus, r=None, tol=1e-12, mode="strict", grid=None, with_W=True):
    """Convenience: ``scattering_data(solve_deflection(...))``."""
    defl = solve_deflection(model, v_minus, x_minus, r, tol, mode, grid)
    return scattering_data(model, defl, tol, with_W)


def compute_W(model, v, x, a, z_minus=None, z_plus=None, grid=None, tol=1e-13, mode="strict"):
    """Long-range correction W(v, x) from F^l and the outgoing velocity ``a``."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if not model.has_long_range:
        return np.zeros_like(v)
    grid = grid or (z_minus.grid if z_minus is not None else default_grid(model))
    if z_minus is None:
        z_minus = solve_free(model, v, None, PAST, tol, grid, mode=mode)
    if z_plus is None:
        z_plus = solve_free(model, a, None, FUTURE, tol, grid, mode=mode)
    zm = dict(dev=z_minus.deviation[None], rate=z_minus.deviation_rate[None],
              K=z_minus.force_integral[None])
    _, pos, vel = z_plus.nodes()
    zp = dict(pos=pos[None], vel=vel[None], K=z_plus.force_integral[None])
    return compute_W_arrays(model, grid, v[None], x[None], a[None], zm, zp)[0]


# ---------------------------------------------------------------------------
# independent check: direct integration of the equation of motion

@dataclass(frozen=True)
class OdeResult:
    a_est: np.ndarray
    b_est: np.ndarray
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    energy_drift: float
    b_history: tuple
    solution: object = field(repr=False, default=None)

    def position(self, t):
        """Path position at times inside the integration window."""
        return self._eval(t)[0]

    def _eval(self, t):
        t = np.asarray(t, dtype=float)
        y = self.solution["sol"](t)
        n = self.a_est.shape[0]
        pos = self.solution["x"] + t[..., None] * self.solution["v"] + np.moveaxis(y[:n], 0, -1)
        return pos, y


def _default_start(alpha):
    return min(10.0 ** (9.0 / alpha), 1e15)


def ode_oracle(model, v_minus, x_minus, T=1e4, tol=1e-12, t_start=None, z_minus=None,
               grid=None, mode="strict", anchored=False):
    """Scattering data by direct adaptive Runge-Kutta integration.

    The state is carried relative to the straight line x_- + t v_-:
    dx = x - x_- - t v_- and dp = p - g^{-1}(v_-).  Integration starts at
    -t_start on z_-(v_-, .) + x_- and ends at T.  ``a_est`` adds the force
    integral beyond T along the tangent line; ``b_est`` is the Richardson
    two-level Richardson extrapolation (exponents alpha, then alpha + 1) of
    x(t) - z_+(a_est, t) over t in {T/4, T/2, T}.

    With ``anchored=True`` the incoming asymptote is z_-(v_-, x_-, .), the
    free solution anchored at x_- used by the modified map.
    """
    v = np.asarray(v_minus, dtype=float)
    x0 = np.asarray(x_minus, dtype=float)
    c = model.c
    n = model.n
    if (1.0 + T) ** (-model.alpha) > 0.1:
        raise ValueError("T too small: need (1+T)^(-alpha) <= 0.1")
    check_ray(model, v, x0)
    if model.has_long_range:
        dist = float(np.linalg.norm(x0))
        th = bounds.mu_l_sigma(model, dist) if anchored else bounds.mu_l(model)
        if np.linalg.norm(v) <= th:
            raise BelowThreshold(f"|v_minus| = {np.linalg.norm(v):.6g} <= threshold {th:.6g}")
    t_start = _default_start(model.alpha) if t_start is None else t_start
    pv = g_inv(v, c)
    if z_minus is None:
        if anchored:
            z_minus = solve_free(model, v, x0, PAST, 1e-14, grid, mode=mode,
                                 dist=float(np.linalg.norm(x0)), qnorm=0.0)
        else:
            z_minus = solve_free(model, v, None, PAST, 1e-14, grid, mode=mode)
    ts = np.array([-t_start])
    dx0 = z_minus.deviation_at(ts)[0]
    if z_minus.force_integral is not None and model.has_long_range:
        dp0 = z_minus.grid.interpolate(z_minus.force_integral, ts)[0]
    else:
        dp0 = np.zeros(n)

    def rhs(t, y):
        dx, dp = y[:n], y[n:]
        dv = g_diff(pv, dp, c)
        F = model.force(x0 + t * v + dx, v + dv)
        return np.concatenate([dv, F])

    sol = solve_ivp(rhs, (-t_start, T), np.concatenate([dx0, dp0]), method="DOP853",
                    rtol=tol, atol=tol * 1e-2, dense_output=True)
    if not sol.success:
        raise StepFailure(f"ODE integration failed: {sol.message}", ray=(v.tolist(), x0.tolist()))
    yT = sol.y[:, -1]
    pos_T = x0 + T * v + yT[:n]
    vel_T = v + g_diff(pv, yT[n:], c)
    tail, err = quad_vec(lambda s: model.force(pos_T + s * vel_T, vel_T), 0.0, np.inf,
                         epsabs=1e-16, epsrel=1e-12)
    a_sc = g_diff(pv, yT[n:] + tail, c)
    a_est = v + a_sc

    # energy along the path
    tt = sol.t
    pos = x0 + tt[:, None] * v + sol.y[:n].T
    p = pv + sol.y[n:].T
    energy = c**2 * np.sqrt(1.0 + np.sum(p * p, axis=1) / c**2) + model.potential(pos)
    drift = float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))

    z_plus = solve_free(model, a_est, None, FUTURE, 1e-14, grid, mode=mode)
    times = np.array([T / 4, T / 2, T])
    ys = sol.sol(times)
    D = []
    for k, tk in enumerate(times):
        dev_p = z_plus.deviation_at(np.array([tk]))[0]
        D.append(x0 + ys[:n, k] - tk * a_sc - dev_p)
    D = np.array(D)
    q = 2.0 ** model.alpha
    r0 = (q * D[1] - D[0]) / (q - 1)
    r1 = (q * D[2] - D[1]) / (q - 1)
    q2 = 2.0 * q
    b_est = (q2 * r1 - r0) / (q2 - 1)
    step_old = np.linalg.norm(D[1] - D[0])
    step_new = np.linalg.norm(D[2] - D[1])
    scale = 1.0 + np.linalg.norm(x0)
    if step_new > 1.5 * step_old + 1e-12 * scale:
        raise ExtrapolationDiverged(
            f"b estimates not Cauchy: |D(T)-D(T/2)| = {step_new:.3e} > |D(T/2)-D(T/4)| = {step_old:.3e}",
            ray=(v.tolist(), x0.tolist()))
    extra = dict(sol=sol.sol, x=x0, v=v)
    return OdeResult(a_est, b_est, tt, pos, v + np.array([g_diff(pv, q_, c) for q_ in sol.y[n:].T]),
                     drift, (r0, r1, b_est), extra)
