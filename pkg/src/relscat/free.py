"""Long-range free trajectories z_pm(w, x+q, .) by Picard iteration.

The free solution with asymptotic velocity ``w`` anchored at ``anchor`` is
``anchor + t w + f(t)`` where f(0) = 0 and, for the future solution,

    df/dt = g(g^{-1}(w) - int_t^inf F^l(anchor + . w + f)) - w

(the past solution integrates from -inf instead, with a plus sign).  Only the
deviation f is stored, so positions keep full relative precision of f even
at |t| ~ 1e15.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import bounds
from .errors import ConditionViolated, NoConvergence
from .grid import TimeGrid, span_for_decay
from .kinematics import g_diff, g_inv

PAST, FUTURE, TWO_SIDED = "past", "future", "two-sided"

MAX_ITER = 200
NOISE = 1e-13
EMPIRICAL_RATIO = 0.9
EMPIRICAL_WINDOW = 5


@lru_cache(maxsize=32)
def _grid(span, scale):
    return TimeGrid(span=span, scale=scale)


def default_grid(model, scale=1.0):
    """Grid whose truncation tail is below double precision for this model."""
    amp = 10.0 * max(1.0, model.beta)
    return _grid(round(span_for_decay(model.alpha, amp), 6), scale)


@dataclass(frozen=True)
class Trajectory:
    """A curve anchor + t w + f(t) sampled on a ``TimeGrid``.

    ``deviation`` holds f and ``deviation_rate`` its derivative, both of shape
    (P, m, n).  Beyond the grid the curve is continued linearly.
    """

    grid: TimeGrid
    anchor: np.ndarray
    asymptotic_velocity: np.ndarray
    direction: str
    deviation: np.ndarray
    deviation_rate: np.ndarray
    c: float = 1.0
    force_integral: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.anchor.shape[-1]

    def deviation_at(self, t):
        t = np.asarray(t, dtype=float)
        inside = self.grid.interpolate(self.deviation, t)
        edge = np.clip(t, -self.grid.t_max, self.grid.t_max)
        rate = self.grid.interpolate(self.deviation_rate, t)
        return inside + (t - edge)[..., None] * rate

    def position(self, t):
        t = np.asarray(t, dtype=float)
        return self.anchor + t[..., None] * self.asymptotic_velocity + self.deviation_at(t)

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        return self.asymptotic_velocity + self.grid.interpolate(self.deviation_rate, t)

    def nodes(self):
        """(t, position, velocity) on the grid, shapes (P, m), (P, m, n), (P, m, n)."""
        t = self.grid.t
        pos = self.anchor + t[..., None] * self.asymptotic_velocity + self.deviation
        return t, pos, self.asymptotic_velocity + self.deviation_rate

    def samples(self):
        """Compactified time s = t/(1+|t|) with positions and velocities (duplicates removed)."""
        t, pos, vel = self.nodes()
        keep = np.ones(t.shape, dtype=bool)
        keep[1:, 0] = False
        t, pos, vel = t[keep], pos[keep], vel[keep]
        return t / (1.0 + np.abs(t)), pos, vel


def _split_anchor(w, anchor):
    what = w / np.linalg.norm(w, axis=-1, keepdims=True)
    along = np.einsum("...i,...i->...", anchor, what)
    perp = anchor - along[..., None] * what
    return np.linalg.norm(perp, axis=-1), np.abs(along)


def check_free_condition(model, w, anchor, dist=None, qnorm=None):
    """Raise ConditionViolated unless the admissibility condition holds strictly."""
    speed = np.linalg.norm(w, axis=-1)
    if dist is None or qnorm is None:
        d, q = _split_anchor(np.atleast_2d(w), np.atleast_2d(anchor))
        dist = d if dist is None else np.broadcast_to(dist, d.shape)
        qnorm = q if qnorm is None else np.broadcast_to(qnorm, q.shape)
    speed = np.atleast_1d(speed)
    dist = np.atleast_1d(dist)
    qnorm = np.atleast_1d(qnorm)
    for s, d, q in zip(speed, dist, qnorm):
        if q >= 1.0:
            raise ConditionViolated(f"anchor offset |q| = {q:.6g} >= 1 cannot be certified")
        lhs = bounds.free_condition(model, s, d, q)
        if not lhs <= 1.0 - 1e-12:
            raise ConditionViolated(f"free-solution condition fails: lhs = {lhs:.6g}")


def contraction_ratios(history, floor):
    """Ratios of successive iterate differences that lie above ``floor``."""
    out = []
    for a, b in zip(history[:-1], history[1:]):
        if a > floor and b > floor:
            out.append(b / a)
    return out


def solve_free_batch(model, w, anchor, direction, tol=1e-13, grid=None,
                     max_iter=MAX_ITER, mode="strict", warm=None,
                     dist=None, qnorm=None):
    """Vectorised free solve for R rays.

    Parameters
    ----------
    w, anchor : (R, n) arrays
    direction : "past" or "future"
    warm : optional (R, P, m, n) starting guess for df/dt

    Returns
    -------
    dict with keys ``rate``, ``dev``, ``K`` (force integral, signed so that
    df/dt = g(g^{-1}(w) + K) - w), ``iterations``, ``residual``,
    ``contraction`` (per ray).
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    anchor = np.atleast_2d(np.asarray(anchor, dtype=float))
    anchor = np.broadcast_to(anchor, w.shape).copy()
    if direction not in (PAST, FUTURE):
        raise ValueError(f"direction must be 'past' or 'future', got {direction!r}")
    if np.any(np.linalg.norm(w, axis=-1) == 0):
        raise ValueError("asymptotic velocity must be nonzero")
    grid = grid or default_grid(model)
    R, n = w.shape
    shape = (R,) + grid.t.shape + (n,)
    if not model.has_long_range:
        zeros = np.zeros(shape)
        return dict(rate=zeros, dev=zeros.copy(), K=zeros.copy(), grid=grid,
                    iterations=np.zeros(R, dtype=int), residual=np.zeros(R),
                    contraction=np.zeros(R))
    if mode == "strict":
        check_free_condition(model, w, anchor, dist, qnorm)

    c = model.c
    pw = g_inv(w, c)[:, None, None, :]
    tt = grid.t[None, :, :, None]
    base = anchor[:, None, None, :] + tt * w[:, None, None, :]
    wv = w[:, None, None, :]
    rate = np.zeros(shape) if warm is None else np.array(warm, dtype=float)
    active = np.ones(R, dtype=bool)
    history = [[] for _ in range(R)]
    iters = np.zeros(R, dtype=int)
    K = np.zeros(shape)
    floor = NOISE * max(1.0, c)

    for it in range(1, max_iter + 1):
        idx = np.nonzero(active)[0]
        r_a = rate[idx]
        dev = grid.cumulative_from_zero(r_a)
        force = model.force(base[idx] + dev, wv[idx] + r_a, part="long")
        if direction == FUTURE:
            k_a = -grid.cumulative_right(force)
        else:
            k_a = grid.cumulative_left(force)
        new = g_diff(pw[idx], k_a, c)
        diff = np.max(np.abs(new - r_a), axis=(1, 2, 3))
        rate[idx] = new
        K[idx] = k_a
        iters[idx] = it
        done = []
        for j, ray in enumerate(idx):
            history[ray].append(diff[j])
            if diff[j] <= tol:
                done.append(ray)
                continue
            ratios = contraction_ratios(history[ray], floor)
            if mode != "strict" and len(ratios) >= EMPIRICAL_WINDOW and \
                    max(ratios[-EMPIRICAL_WINDOW:]) >= EMPIRICAL_RATIO:
                raise NoConvergence(
                    f"free solve: observed contraction {max(ratios[-EMPIRICAL_WINDOW:]):.3g}"
                    " >= 0.9 in empirical mode")
            if len(history[ray]) > 8 and diff[j] <= 10 * floor and \
                    min(history[ray][-6:-1]) <= diff[j]:
                # stalled at round-off level
                done.append(ray)
        active[done] = False
        if not active.any():
            break
    else:
        worst = max(h[-1] for h, a in zip(history, active) if a)
        raise NoConvergence(f"free solve did not reach tol={tol:g} in {max_iter} "
                            f"iterations (residual {worst:.3g})")

    dev = grid.cumulative_from_zero(rate)
    residual = np.array([h[-1] for h in history])
    contraction = np.array([max(contraction_ratios(h, floor), default=0.0) for h in history])
    return dict(rate=rate, dev=dev, K=K, grid=grid, iterations=iters,
                residual=residual, contraction=contraction)


def solve_free(model, w, anchor=None, direction=FUTURE, tol=1e-13, grid=None,
               max_iter=MAX_ITER, mode="strict", dist=None, qnorm=None, warm=None):
    """Free solution z_pm(w, anchor, .) as a ``Trajectory``.

    Raises
    ------
    ConditionViolated
        strict mode and the admissibility condition fails.
    NoConvergence
        the iteration does not reach ``tol``.
    """
    w = np.asarray(w, dtype=float)
    anchor = np.zeros_like(w) if anchor is None else np.asarray(anchor, dtype=float)
    out = solve_free_batch(model, w[None], anchor[None], direction, tol, grid,
                           max_iter, mode, None if warm is None else warm[None],
                           dist, qnorm)
    info = dict(iterations=int(out["iterations"][0]), residual=float(out["residual"][0]),
                contraction=float(out["contraction"][0]), mode=mode)
    return Trajectory(out["grid"], anchor, w, direction, out["dev"][0], out["rate"][0],
                      model.c, out["K"][0], info)


def free_from_batch(out, i, w, anchor, direction, c, mode="strict"):
    """Trajectory for ray ``i`` of a ``solve_free_batch`` result."""
    info = dict(iterations=int(out["iterations"][i]), residual=float(out["residual"][i]),
                contraction=float(out["contraction"][i]), mode=mode)
    return Trajectory(out["grid"], np.asarray(anchor, dtype=float), np.asarray(w, dtype=float),
                      direction, out["dev"][i], out["rate"][i], c, out["K"][i], info)


def geometry_margin(traj, dist, qnorm):
    """min over nodes of |z(t)| - (dist/sqrt2 - |q| + |w| |t| / 2^(3/2))."""
    t, pos, _ = traj.nodes()
    speed = float(np.linalg.norm(traj.asymptotic_velocity))
    lower = dist / math.sqrt(2) - qnorm + speed * np.abs(t) / 2**1.5
    return float(np.min(np.linalg.norm(pos, axis=-1) - lower))
