"""High-energy data extraction, Born terms, x-ray transform and its inversion.

Directions in the plane are theta = (cos phi, sin phi), phi in [0, pi), and a
line is {t theta + s theta_perp} with theta_perp = (-sin phi, cos phi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec

from . import bounds
from .errors import (BelowRho0, ExtrapolationDiverged, InsufficientSampling,
                     NonPerpendicular, SlowDecay)
from .grid import TimeGrid
from .modified import modified_batch, w_tilde_arrays
from .scattering import _free_future, _free_past, deflection_batch, scatter_batch

PERP_TOL = 1e-12


# ---------------------------------------------------------------------------
# data types

@dataclass(frozen=True)
class Sinogram:
    """Line integrals on a (K angles) x (M offsets) grid, scalar or vector valued."""

    angles: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    residual: np.ndarray | None = None

    @property
    def shape(self):
        return self.values.shape[:2]

    def component(self, i):
        if self.values.ndim == 2:
            if i != 0:
                raise IndexError("scalar sinogram has a single component")
            return self
        return Sinogram(self.angles, self.offsets, self.values[..., i])


@dataclass(frozen=True)
class ReconstructionGrid:
    """Field values on an N x N cell-centred grid covering [-L, L]^2."""

    extent: float
    values: np.ndarray
    ground_truth: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def resolution(self):
        return self.values.shape[0]

    def coordinates(self):
        return cell_centres(self.extent, self.resolution)

    @property
    def rms_error(self):
        """sqrt(mean |err|^2) / sqrt(mean |truth|^2); None without ground truth."""
        if self.ground_truth is None:
            return None
        err = np.sum(np.abs(self.values - self.ground_truth) ** 2)
        ref = np.sum(np.abs(self.ground_truth) ** 2)
        return float(math.sqrt(err / ref)) if ref > 0 else float(math.sqrt(err))


@dataclass(frozen=True)
class HighEnergyReport:
    """One row per (ray, rho, quantity); pass iff residual <= bound (1 + 1e-8)."""

    rows: tuple

    @property
    def all_pass(self):
        return all(r["pass"] for r in self.rows)

    def residuals(self, quantity):
        return np.array([r["residual"] for r in self.rows if r["quantity"] == quantity])


def cell_centres(extent, n):
    h = 2.0 * extent / n
    ax = -extent + h * (np.arange(n) + 0.5)
    return np.meshgrid(ax, ax, indexing="xy")


def direction(phi):
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1), np.stack([-np.sin(phi), np.cos(phi)], axis=-1)


# ---------------------------------------------------------------------------
# x-ray transform

def _check_line(theta, x):
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
        raise ValueError("theta must be a unit vector")
    if abs(theta @ x) > PERP_TOL * max(1.0, np.linalg.norm(x)):
        raise NonPerpendicular(f"theta . x = {theta @ x:.3e}")
    return theta, x


def xray_forward(f, theta, x, tol=1e-12, decay=None):
    """int f(t theta + x) dt over the real line.

    ``decay`` is the exponent b in |f(y)| = O(|y|^-b); the transform needs b > 1.
    """
    theta, x = _check_line(theta, x)
    if decay is not None and decay <= 1.0:
        raise SlowDecay(f"integrand decays like |y|^-{decay}, need exponent > 1")
    val, _ = quad_vec(lambda t: np.asarray(f(t * theta + x), dtype=float), -np.inf, np.inf,
                      epsabs=tol, epsrel=tol, limit=2000)
    return val


def model_line_integral(model, theta, x, speed=None, part="total", tol=1e-13):
    """int F(t theta + x, speed theta) dt (speed defaults to c)."""
    speed = model.c if speed is None else speed
    theta, x = _check_line(theta, x)
    decay = model.alpha + (1.0 if part == "long" or (part == "total" and model.has_long_range) else 2.0)
    return xray_forward(lambda y: model.force(y, speed * theta, part=part), theta, x, tol, decay)


def potential_line_integral(model, theta, x, part="short", tol=1e-13):
    theta, x = _check_line(theta, x)
    decay = model.alpha + (1.0 if part == "short" else 0.0)
    return xray_forward(lambda y: model.potential(y, part=part), theta, x, tol, decay)


def forward_sinogram(f, angles, offsets, tol=1e-11):
    """Sinogram of a vectorised function f(points (..., 2)) -> (...) or (..., k)."""
    angles = np.asarray(angles, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    th, perp = direction(angles)
    base = perp[:, None, :] * offsets[None, :, None]

    def integrand(t):
        return np.asarray(f(base + t * th[:, None, :]), dtype=float)

    vals, _ = quad_vec(integrand, -np.inf, np.inf, epsabs=tol, epsrel=tol, limit=4000)
    return Sinogram(angles, offsets, vals)


def ramlak_kernel(m, d):
    """Spatial Ram-Lak kernel h[k], k = -(m-1)..(m-1), sampling step d."""
    k = np.arange(-(m - 1), m)
    h = np.zeros(k.shape)
    h[k == 0] = 1.0 / (4.0 * d * d)
    odd = (k % 2) != 0
    h[odd] = -1.0 / (np.pi**2 * k[odd] ** 2 * d * d)
    return h


def xray_invert(sino, extent, n=128):
    """Filtered backprojection of a scalar or vector sinogram onto [-L, L]^2."""
    K, M = sino.shape
    if K < 64 or M < 128:
        raise InsufficientSampling(f"need K >= 64 and M >= 128, got K={K}, M={M}")
    s = np.asarray(sino.offsets, dtype=float)
    d = float(s[1] - s[0])
    if not np.allclose(np.diff(s), d, rtol=1e-9, atol=0.0):
        raise InsufficientSampling("offsets must be uniformly spaced")
    vals = np.asarray(sino.values, dtype=float)
    vec = vals.ndim == 3
    if not vec:
        vals = vals[..., None]
    h = ramlak_kernel(M, d)
    size = 1 << int(math.ceil(math.log2(3 * M)))
    H = np.fft.rfft(h, size)
    P = np.fft.rfft(vals, size, axis=1)
    filt = np.fft.irfft(P * H[None, :, None], size, axis=1)[:, M - 1:2 * M - 1, :] * d
    X, Y = cell_centres(extent, n)
    th, perp = direction(sino.angles)
    out = np.zeros((n, n, vals.shape[2]))
    for k in range(K):
        proj = X * perp[k, 0] + Y * perp[k, 1]
        for c in range(vals.shape[2]):
            out[:, :, c] += np.interp(proj, s, filt[k, :, c], left=0.0, right=0.0)
    out *= np.pi / K
    return ReconstructionGrid(extent, out if vec else out[..., 0])


# ---------------------------------------------------------------------------
# high-energy extraction

def extract_line_integrals(rho, data, c=1.0, degree=2, noise=1e-10):
    """Extrapolate (rho/h) * data to h = sqrt(1 - rho^2/c^2) = 0.

    The scaled data is fitted by a polynomial in h.  Degree 2 is the default:
    beyond the first-order Born remainder, the magnetic force is evaluated
    at speed rho rather than c, a relative difference of about h^2 / 2.

    Parameters
    ----------
    rho : (S,) speeds
    data : (S, ...) a_sc (standard) or a~_sc - W~ (modified) at those speeds
    noise : fit residuals below this absolute level are solver noise and
        never count as a failed extrapolation

    Returns
    -------
    (estimate, standard error of the estimate) with the trailing shape of
    ``data``.  The standard error needs more speeds than degree + 1.
    """
    rho = np.asarray(rho, dtype=float)
    data = np.asarray(data, dtype=float)
    if rho.size < 3:
        raise ValueError("need at least three speeds")
    if rho.max() < 0.999 * c:
        raise ValueError("largest speed must be >= 0.999 c")
    if degree + 1 > rho.size:
        raise ValueError("degree too high for the number of speeds")
    h = np.sqrt(1.0 - (rho / c) ** 2)
    scaled = (rho / h).reshape((-1,) + (1,) * (data.ndim - 1)) * data
    flat = scaled.reshape(rho.size, -1)
    vander = np.vander(h, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(vander, flat, rcond=None)
    fit = vander @ coef
    ssr = np.sum((fit - flat) ** 2, axis=0)
    est = coef[0]
    if not np.all(np.isfinite(est)):
        raise ExtrapolationDiverged("non-finite extrapolated value")
    spread = np.max(np.abs(flat), axis=0)
    if np.any(np.sqrt(ssr / rho.size) > np.maximum(0.5 * spread, noise)):
        raise ExtrapolationDiverged(f"speed sweep is not polynomial of degree {degree} in h")
    # standard error of the intercept (zero when the fit interpolates)
    dof = rho.size - degree - 1
    sigma2 = ssr / dof if dof > 0 else np.zeros_like(ssr)
    stderr = np.sqrt(sigma2 * np.linalg.inv(vander.T @ vander)[0, 0])
    shape = data.shape[1:]
    return est.reshape(shape), stderr.reshape(shape)


def born_terms(model, theta, x, rho, tol=1e-13):
    """Leading Born terms of a_sc and of b_sc - W at speed rho along (theta, x).

    The iterated integrals of F^s are reduced to -int t F^s(t theta + x) dt.
    """
    theta, x = _check_line(theta, x)
    c = model.c
    h = math.sqrt(1.0 - (rho / c) ** 2)
    vel = rho * theta
    first = xray_forward(lambda y: model.force(y, vel), theta, x, tol)
    moment = quad_vec(lambda t: -t * model.force(t * theta + x, vel, part="short"),
                      -np.inf, np.inf, epsabs=tol, epsrel=tol, limit=2000)[0]
    pv = xray_forward(lambda y: model.potential(y, part="short"), theta, x, tol)
    a_term = h / rho * first
    b_term = h / rho**2 * (moment + pv * rho**2 * theta / c**2)
    return a_term, b_term


def pick_radius(model, rho, dist, kind="standard", r=None):
    return bounds.best_radius(model, rho, dist, kind) if r is None else r


def verify_high_energy(model, rays, rhos, mode="standard", r=None, tol=1e-12):
    """Residuals of the high-energy estimates against their explicit bounds.

    Standard mode compares (rho/h) a_sc and (rho^2/h)(b_sc - W) with the line
    integrals at speed rho; modified mode compares a~_sc - W~ and b~_sc with
    the Born terms of F^s.  Every speed must exceed the relevant minimal speed
    for the chosen radius.
    """
    rows = []
    c = model.c
    for theta, x in rays:
        theta = np.asarray(theta, dtype=float)
        x = np.asarray(x, dtype=float)
        dist = float(np.linalg.norm(x))
        for rho in rhos:
            h = math.sqrt(1.0 - (rho / c) ** 2)
            kind = "standard" if mode == "standard" else "modified"
            rr = pick_radius(model, rho, dist, kind, r)
            if model.beta > 0:
                if mode == "standard":
                    ok = bounds.rho0_rhs(rho, dist, rr, model.beta, model.alpha, c, model.n) < 1
                else:
                    ok = bounds.rho0_tilde_rhs(rho, dist, rr, model.beta, model.alpha, c, model.n) < 1
                if not ok:
                    raise BelowRho0(f"rho = {rho} does not exceed the minimal speed for r = {rr:.4g}",
                                    ray=(theta.tolist(), x.tolist(), rho))
            # the b-side Born term involves F^s and V^s only
            a_born, b_born = born_terms(model.short_range_only() if mode != "standard" else model,
                                        theta, x, rho)
            if mode == "standard":
                d = scatter_batch(model, rho * theta, x, rr, tol, "strict")
                lhs_a = rho / h * d["a_sc"][0]
                tgt_a = rho / h * a_born
                lhs_b = rho**2 / h * (d["b_sc"][0] - d["W"][0])
                tgt_b = rho**2 / h * b_born
                bnd_a = bounds.high_energy_a_bound(model, rho, dist, rr)
                bnd_b = bounds.high_energy_b_bound(model, rho, dist, rr)
                names = ("a_sc", "b_sc")
            else:
                d = modified_batch(model, rho * theta, x, rr, tol, "strict", with_b=True)
                lhs_a = d["a_sc"][0] - d["W_tilde"][0]
                tgt_a = a_born
                lhs_b = d["b_sc"][0]
                tgt_b = b_born
                bnd_a = bounds.high_energy_a_bound_mod(model, rho, dist, rr)
                bnd_b = bounds.high_energy_b_bound_mod(model, rho, dist, rr)
                names = ("a_tilde_sc", "b_tilde_sc")
            for name, lhs, tgt, bnd in ((names[0], lhs_a, tgt_a, bnd_a), (names[1], lhs_b, tgt_b, bnd_b)):
                res = float(np.linalg.norm(lhs - tgt))
                rows.append(dict(theta=theta, x=x, rho=rho, r=rr, quantity=name, lhs=lhs,
                                 target=tgt, residual=res, bound=bnd,
                                 **{"pass": res <= bnd * (1 + 1e-8)}))
    return HighEnergyReport(tuple(rows))


# ---------------------------------------------------------------------------
# end-to-end reconstruction

@dataclass(frozen=True)
class SweepConfig:
    """Synthetic high-energy sweep on a parallel-beam geometry."""

    n_angles: int = 180
    n_offsets: int = 128
    offset_extent: float = 5.0
    speeds: tuple = (0.999, 0.9993, 0.9996, 0.9999)
    extent: float = 4.0
    resolution: int = 128
    mode: str = "standard"
    solver_mode: str = "empirical"
    tol: float = 1e-12
    batch: int = 512
    # coarse time grid: about 1e-12 relative agreement with the default grid
    grid_span: float = 30.0
    grid_inner_width: float = 0.5
    grid_outer_width: float = 2.0
    grid_nodes: int = 12

    def time_grid(self):
        return TimeGrid(span=self.grid_span, inner_width=self.grid_inner_width,
                        outer_width=self.grid_outer_width, m=self.grid_nodes)

    def geometry(self):
        angles = np.pi * np.arange(self.n_angles) / self.n_angles
        offsets = np.linspace(-self.offset_extent, self.offset_extent, self.n_offsets)
        return angles, offsets


def synthetic_sweep(model, cfg, mapper=map):
    """Scattering data of the full model on every (speed, angle, offset).

    Returns an array (S, K, M, 2) of a_sc (standard) or a~_sc (modified).
    The work is split into ray chunks handed to ``mapper``.
    """
    angles, offsets = cfg.geometry()
    th, perp = direction(angles)
    K, M = len(angles), len(offsets)
    theta = np.repeat(th, M, axis=0)
    xs = (perp[:, None, :] * offsets[None, :, None]).reshape(-1, 2)
    grid = cfg.time_grid()
    out = []
    for rho in cfg.speeds:
        v = rho * theta
        chunks = [(s, min(s + cfg.batch, len(v))) for s in range(0, len(v), cfg.batch)]

        def work(ch, v=v):
            lo, hi = ch
            d = deflection_batch(model, v[lo:hi], xs[lo:hi], None, cfg.tol, cfg.solver_mode,
                                 grid, modified=cfg.mode != "standard")
            return d["a_sc"]

        res = np.concatenate(list(mapper(work, chunks)))
        out.append(res.reshape(K, M, 2))
    return np.array(out)


def _w_tilde_sweep(long_model, cfg, a_sc, mapper=map):
    """W~ computed from F^l alone and the measured outgoing velocities."""
    angles, offsets = cfg.geometry()
    th, perp = direction(angles)
    K, M = len(angles), len(offsets)
    theta = np.repeat(th, M, axis=0)
    xs = (perp[:, None, :] * offsets[None, :, None]).reshape(-1, 2)
    grid = cfg.time_grid()
    out = []
    for si, rho in enumerate(cfg.speeds):
        v = rho * theta
        a = v + a_sc[si].reshape(-1, 2)
        chunks = [(s, min(s + cfg.batch, len(v))) for s in range(0, len(v), cfg.batch)]

        def work(ch, v=v, a=a):
            lo, hi = ch
            vv, xx, aa = v[lo:hi], xs[lo:hi], a[lo:hi]
            dist = np.linalg.norm(xx, axis=-1)
            zm = _free_past(long_model, vv, xx, cfg.tol, cfg.solver_mode, grid, True)
            tt = grid.t[None, :, :, None]
            zmn = dict(pos=xx[:, None, None, :] + tt * vv[:, None, None, :] + zm["dev"],
                       vel=vv[:, None, None, :] + zm["rate"])
            zp = _free_future(long_model, aa, xx, cfg.tol, cfg.solver_mode, grid,
                              dist=dist, qnorm=np.zeros(len(xx)))
            return w_tilde_arrays(long_model, grid, vv, zmn, zp)

        res = np.concatenate(list(mapper(work, chunks)))
        out.append(res.reshape(K, M, 2))
    return np.array(out)


def reconstruct_Fs(long_model, data, cfg, ground_truth_model=None, mapper=map):
    """Recover F^s(., c theta) from synthetic high-energy data.

    Parameters
    ----------
    long_model : FieldModel
        The known long-range tail (F^l only).  This is all the reconstructor
        knows about the field.
    data : (S, K, M, 2) array
        a_sc (standard) or a~_sc (modified) from ``synthetic_sweep``.
    cfg : SweepConfig
    ground_truth_model : optional full model, used only to score the result.

    Returns
    -------
    (ReconstructionGrid of the force -grad V^s, Sinogram of extracted line integrals)
    """
    if long_model.n != 2:
        raise ValueError("reconstruction is implemented for n = 2 only")
    angles, offsets = cfg.geometry()
    c = long_model.c
    speeds = np.asarray(cfg.speeds, dtype=float)
    data = np.asarray(data, dtype=float)
    if cfg.mode == "modified" and long_model.has_long_range:
        data = data - _w_tilde_sweep(long_model, cfg, data, mapper)
    est, resid = extract_line_integrals(speeds, data, c)
    if cfg.mode == "standard" and long_model.has_long_range:
        th, perp = direction(angles)
        pl = forward_sinogram(
            lambda y: long_model.force(y, c * th[:, None, :], part="long"), angles, offsets)
        est = est - pl.values
    sino = Sinogram(angles, offsets, est, resid)
    grid = xray_invert(sino, cfg.extent, cfg.resolution)
    info = dict(noise_floor=noise_floor(sino), magnetic_ambiguity=False)
    truth = None
    if ground_truth_model is not None:
        X, Y = cell_centres(cfg.extent, cfg.resolution)
        pts = np.stack([X, Y], axis=-1)
        truth = -ground_truth_model.grad_potential(pts, part="short")
        info["magnetic_ambiguity"] = bool(ground_truth_model.m_s)
    return ReconstructionGrid(cfg.extent, grid.values, truth, info), sino


def noise_floor(sino):
    """Backprojection amplification of the extraction error: pi rms(stderr) / (2 d)."""
    if sino.residual is None:
        return 0.0
    d = float(sino.offsets[1] - sino.offsets[0])
    return float(np.pi * np.sqrt(np.mean(np.asarray(sino.residual) ** 2)) / (2 * d))
