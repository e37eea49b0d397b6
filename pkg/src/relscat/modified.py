"""Modified scattering map: free solutions anchored at x_-.

Here x(t) = z_-(v, x_-, t) + y(t) with y = A~(y), the outgoing velocity is
a~ = g(g^{-1}(v) + int F(x)), and the position offset b~_sc is the fixed
point of

    G(q) = A~(y)(0) - h(q, 0),
    h(q, t) = -int_t^inf ( dx/dt - dz_+(a~, x_- + q, .)/dt ),

each evaluation of G needing a fresh z_+(a~, x_- + q, .) (warm started).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .errors import ConditionViolated, NoConvergence
from .free import FUTURE, Trajectory, contraction_ratios, free_from_batch
from .kinematics import g_diff, g_inv
from .scattering import (_deflection_solution, _free_future, deflection_batch,
                         plus_deflection)

G_MAX_ITER = 50
G_NOISE = 1e-14


@dataclass(frozen=True)
class ModifiedDatum:
    """Modified scattering data of one ray with diagnostics of both stages."""

    v_minus: np.ndarray
    x_minus: np.ndarray
    a_tilde: np.ndarray
    a_tilde_sc: np.ndarray
    b_tilde: np.ndarray
    b_tilde_sc: np.ndarray
    W_tilde: np.ndarray
    r: float
    iterations: int
    residual: float
    contraction: float
    mode: str
    g_iterations: int = 0
    g_residual: float = 0.0
    g_contraction: float = 0.0
    g_history: tuple = ()
    y_plus: Trajectory | None = field(default=None, repr=False)
    z_plus: Trajectory | None = field(default=None, repr=False)


def solve_deflection_mod(model, v_minus, x_minus, r=None, tol=1e-12, mode="strict", grid=None):
    """Deflection y_- for the modified map (weighted *-norm).

    Raises
    ------
    NonPerpendicular, BelowThreshold, ConditionViolated, NoConvergence
    """
    d = deflection_batch(model, v_minus, x_minus, r, tol, mode, grid, modified=True)
    return _deflection_solution(d, 0, model)


def a_tilde(model, v_minus, x_minus, y_minus):
    """k~(v, x, y) = g(g^{-1}(v) + int F(z_-(v, x, .) + y)) for a modified deflection."""
    defl = y_minus
    v = np.asarray(v_minus, dtype=float)
    grid = defl.y_minus.grid
    I = grid.total(defl.path_force)
    return v + g_diff(g_inv(v, model.c), I, model.c)


def _check_b_tilde_condition(model, speed, dist, r):
    for s, d, rr in zip(speed, dist, r):
        lhs = bounds.b_tilde_condition(model, s, d, rr)
        if not lhs <= 1.0:
            raise ConditionViolated(f"b~ contraction condition fails: lhs = {lhs:.6g} > 1")


def b_tilde_batch(model, d, tol=1e-13, mode="strict", max_iter=G_MAX_ITER):
    """Fixed point of G for every ray of a modified ``deflection_batch`` result."""
    grid = d["grid"]
    v, x, a = d["v"], d["x"], d["a"]
    R, n = v.shape
    dist = np.linalg.norm(x, axis=-1)
    if mode == "strict" and not model.is_zero:
        _check_b_tilde_condition(model, d["speed"], dist, d["r"])
    pa = g_inv(a, model.c)[:, None, None, :]
    pi, ni = grid.zero_index
    q = np.zeros((R, n))
    warm = None
    history = [[] for _ in range(R)]
    done = np.zeros(R, dtype=bool)
    out = dict(q=q, yp_rate=None, yp_pos=None, zp=None)
    for it in range(1, max_iter + 1):
        qn = np.linalg.norm(q, axis=-1)
        zp = _free_future(model, a, x + q, tol, mode, grid, dist=dist, qnorm=qn, warm=warm)
        warm = zp["rate"]
        yp_rate, yp_pos = plus_deflection(model, grid, d["Fx"], zp, pa)
        Gq = d["A0"] - yp_pos[:, pi, ni, :]
        step = np.linalg.norm(Gq - q, axis=-1)
        if it == 1:
            out["zp0"] = zp
        for i in range(R):
            if not done[i]:
                history[i].append(step[i])
        newly = (~done) & (step <= tol)
        if it > 8:
            for i in np.nonzero(~done & ~newly)[0]:
                h = history[i]
                if h[-1] <= 100 * G_NOISE and min(h[-6:-1]) <= h[-1]:
                    newly[i] = True
        # rays that converge keep q; y_+ is h(q, .) for that very q
        keep = done | newly
        for key, val in (("yp_rate", yp_rate), ("yp_pos", yp_pos)):
            if out[key] is None:
                out[key] = val.copy()
            else:
                out[key][~done] = val[~done]
        if out["zp"] is None:
            out["zp"] = {k: (np.array(vv) if isinstance(vv, np.ndarray) else vv)
                         for k, vv in zp.items()}
        else:
            for k in ("rate", "dev", "K", "pos", "vel"):
                out["zp"][k][~done] = zp[k][~done]
        done = keep
        q = np.where(done[:, None], q, Gq)
        if done.all():
            break
    else:
        raise NoConvergence(f"b~ iteration did not reach tol={tol:g} in {max_iter} iterations")
    residual = np.array([h[-1] for h in history])
    contraction = np.array([max(contraction_ratios(h, G_NOISE), default=0.0) for h in history])
    iters = np.array([len(h) for h in history])
    return dict(b_sc=q, residual=residual, contraction=contraction, iterations=iters,
                history=history, **{k: out[k] for k in ("yp_rate", "yp_pos", "zp", "zp0")})


def w_tilde_arrays(model, grid, v, zm_batch, zp0):
    """g(g^{-1}(v) + int_{-inf}^0 F^l(z_-) + int_0^inf F^l(z_+(a~, x_-))) - v per ray."""
    if not model.has_long_range:
        return np.zeros_like(v)
    fm = model.force(zm_batch["pos"], zm_batch["vel"], part="long")
    fp = model.force(zp0["pos"], zp0["vel"], part="long")
    I = grid.half_total(fm, -1) + grid.half_total(fp, +1)
    return g_diff(g_inv(v, model.c), I, model.c)


def _zm_nodes(d):
    grid = d["grid"]
    tt = grid.t[None, :, :, None]
    zm = d["zm"]
    pos = d["x"][:, None, None, :] + tt * d["v"][:, None, None, :] + zm["dev"]
    vel = d["v"][:, None, None, :] + zm["rate"]
    return dict(pos=pos, vel=vel)


def modified_batch(model, v, x, r=None, tol=1e-12, mode="strict", grid=None, with_b=True):
    """Modified data (a~, a~_sc, W~ and optionally b~_sc) for R rays."""
    d = deflection_batch(model, v, x, r, tol, mode, grid, modified=True)
    grid = d["grid"]
    if with_b:
        bt = b_tilde_batch(model, d, min(tol, 1e-13), mode)
        d.update(bt=bt, b_sc=bt["b_sc"])
        zp0 = bt["zp0"]
    else:
        zp0 = _free_future(model, d["a"], d["x"], tol, mode, grid,
                           dist=np.linalg.norm(d["x"], axis=-1), qnorm=np.zeros(len(d["x"])))
    d["W_tilde"] = w_tilde_arrays(model, grid, d["v"], _zm_nodes(d), zp0)
    return d


def solve_b_tilde(model, v_minus, x_minus, deflection, tol=1e-13, mode="strict"):
    """b~_sc and y_+ = h(b~_sc, .) for a converged modified deflection.

    Returns
    -------
    (b_tilde_sc, y_plus, info) where info holds iterations, residual,
    the observed contraction factor and the step history.
    """
    defl = deflection
    grid = defl.y_minus.grid
    v = np.asarray(v_minus, dtype=float)
    x = np.asarray(x_minus, dtype=float)
    a = a_tilde(model, v, x, defl)
    d = dict(grid=grid, v=v[None], x=x[None], a=a[None], speed=np.array([np.linalg.norm(v)]),
             r=np.array([defl.r]), Fx=defl.path_force[None], A0=defl.A0[None])
    bt = b_tilde_batch(model, d, tol, mode)
    n = model.n
    y_plus = Trajectory(grid, np.zeros(n), np.zeros(n), FUTURE, bt["yp_pos"][0], bt["yp_rate"][0])
    info = dict(iterations=int(bt["iterations"][0]), residual=float(bt["residual"][0]),
                contraction=float(bt["contraction"][0]), history=tuple(bt["history"][0]),
                z_plus=free_from_batch(bt["zp"], 0, a, x + bt["b_sc"][0], FUTURE, model.c, mode),
                z_plus0=free_from_batch(bt["zp0"], 0, a, x, FUTURE, model.c, mode))
    return bt["b_sc"][0], y_plus, info


def compute_W_tilde(model, v_minus, x_minus, a_tilde_value, z_minus=None, z_plus=None,
                    grid=None, mode="strict"):
    """W~ from F^l, the incoming ray and the outgoing velocity a~."""
    from .free import PAST, default_grid, solve_free
    v = np.asarray(v_minus, dtype=float)
    x = np.asarray(x_minus, dtype=float)
    a = np.asarray(a_tilde_value, dtype=float)
    if not model.has_long_range:
        return np.zeros_like(v)
    dist = float(np.linalg.norm(x))
    grid = grid or (z_minus.grid if z_minus is not None else default_grid(model))
    if z_minus is None:
        z_minus = solve_free(model, v, x, PAST, 1e-14, grid, mode=mode, dist=dist, qnorm=0.0)
    if z_plus is None:
        z_plus = solve_free(model, a, x, FUTURE, 1e-14, grid, mode=mode, dist=dist, qnorm=0.0)
    _, pm, vm = z_minus.nodes()
    _, pp, vp = z_plus.nodes()
    return w_tilde_arrays(model, grid, v[None], dict(pos=pm[None], vel=vm[None]),
                          dict(pos=pp[None], vel=vp[None]))[0]


def scatter_mod(model, v_minus, x_minus, r=None, tol=1e-12, mode="strict", grid=None):
    """Full modified datum for one ray."""
    d = modified_batch(model, v_minus, x_minus, r, tol, mode, grid, with_b=True)
    return modified_datum(d, 0, model)


def modified_datum(d, i, model):
    bt = d["bt"]
    a = d["a"][i]
    v, x = d["v"][i], d["x"][i]
    b_sc = d["b_sc"][i]
    b = x + b_sc
    grid = d["grid"]
    n = model.n
    y_plus = Trajectory(grid, np.zeros(n), np.zeros(n), FUTURE, bt["yp_pos"][i], bt["yp_rate"][i])
    z_plus = free_from_batch(bt["zp"], i, a, b, FUTURE, model.c, d["mode"])
    return ModifiedDatum(v, x, a, a - v, b, b - x, d["W_tilde"][i], float(d["r"][i]),
                         int(d["iterations"][i]), float(d["residual"][i]),
                         float(d["contraction"][i]), d["mode"], int(bt["iterations"][i]),
                         float(bt["residual"][i]), float(bt["contraction"][i]),
                         tuple(bt["history"][i]), y_plus, z_plus)
