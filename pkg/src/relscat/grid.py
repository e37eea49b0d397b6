"""Panelled spectral grid on the whole time axis.

Time is parametrised by ``t = scale * sinh(u)``.  The u-interval [-U, U] is
split into panels (fine near the origin, unit width further out) carrying
Chebyshev-Lobatto nodes.  Integrands decaying like |t|^(-1-alpha) become
exp(-alpha |u|) in u, so a handful of unit panels covers many decades of t.

Values live on arrays of shape (..., P, m, k): P panels, m nodes per panel,
k trailing components.  Panel endpoints are duplicated, which keeps every
operation a panel-local matrix product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C

NODES_PER_PANEL = 16


def _lobatto(m):
    return -np.cos(np.pi * np.arange(m) / (m - 1))


def _integration_matrix(m):
    """S[i, j] = int_{-1}^{x_i} l_j(x) dx for the Lagrange basis on Lobatto nodes."""
    x = _lobatto(m)
    vander = C.chebvander(x, m - 1)
    integ = np.empty((m, m))
    for k in range(m):
        coef = np.zeros(m)
        coef[k] = 1.0
        integ[:, k] = C.chebval(x, C.chebint(coef, lbnd=-1.0))
    return integ @ np.linalg.inv(vander)


def _bary_weights(m):
    w = (-1.0) ** np.arange(m)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


_STD = {}


def _std(m):
    if m not in _STD:
        s = _integration_matrix(m)
        _STD[m] = (_lobatto(m), s, s[-1][None, :] - s, _bary_weights(m))
    return _STD[m]


def span_for_decay(alpha, amplitude=1.0, tol=1e-16, u_min=30.0, u_max=72.0):
    """Half-width U such that amplitude * T^(-alpha) <= tol at T = sinh(U)."""
    log_t = math.log(max(amplitude, 1e-300) / tol) / alpha
    # asinh(T) = log(2T) to double precision once T > 1e8
    u = math.log(2.0) + log_t if log_t > 20.0 else math.asinh(math.exp(log_t))
    return float(min(max(u, u_min), u_max))


def _panel_apply(mat, f):
    """mat @ f over the node axis of (..., P, m, k) as one matrix product."""
    x = np.moveaxis(f, -2, -1)
    m = mat.shape[0]
    y = np.ascontiguousarray(x).reshape(-1, m) @ mat.T
    return np.moveaxis(y.reshape(x.shape[:-1] + (m,)), -1, -2)


def _panel_dot(row, f):
    """sum_j row[j] f[..., p, j, k] summed over panels p."""
    return np.tensordot(f, row, axes=([-2], [0])).sum(axis=-2)


@dataclass(frozen=True)
class TimeGrid:
    """Symmetric panelled grid in u with t = scale * sinh(u)."""

    span: float = 36.0
    scale: float = 1.0
    inner: float = 3.0
    inner_width: float = 0.25
    outer_width: float = 1.0
    m: int = NODES_PER_PANEL
    breaks: np.ndarray = field(init=False, repr=False)
    u: np.ndarray = field(init=False, repr=False)
    t: np.ndarray = field(init=False, repr=False)
    jac: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n_in = int(round(self.inner / self.inner_width))
        right = list(np.linspace(0.0, self.inner, n_in + 1))
        pos = self.inner
        while pos < self.span - 1e-12:
            pos = min(pos + self.outer_width, self.span)
            right.append(pos)
        right = np.array(right)
        breaks = np.concatenate([-right[:0:-1], right])
        x, _, _, _ = _std(self.m)
        lo, hi = breaks[:-1, None], breaks[1:, None]
        u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x[None, :]
        u[:, 0] = breaks[:-1]
        u[:, -1] = breaks[1:]
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "t", self.scale * np.sinh(u))
        # dt/du times the half panel width, i.e. the factor mapping the
        # standard integration matrix to t-integrals
        half = 0.5 * (hi - lo)
        object.__setattr__(self, "jac", self.scale * np.cosh(u) * half)

    # -- shapes -----------------------------------------------------------
    @property
    def n_panels(self):
        return self.u.shape[0]

    @property
    def t_max(self):
        return float(self.t[-1, -1])

    @property
    def zero_index(self):
        """(panel, node) of t = 0 (the left endpoint of the first right panel)."""
        return self.n_panels // 2, 0

    def flat_t(self):
        return self.t.reshape(-1)

    # -- integration --------------------------------------------------------
    def _weighted(self, f):
        return f * self.jac[..., None]

    def cumulative_left(self, f):
        """int_{-T}^{t} f for every node; f has shape (..., P, m, k)."""
        _, s, _, _ = _std(self.m)
        fw = self._weighted(f)
        local = _panel_apply(s, fw)
        totals = local[..., -1, :]
        prefix = np.cumsum(totals, axis=-2) - totals
        return local + prefix[..., None, :]

    def cumulative_right(self, f):
        """int_{t}^{T} f for every node."""
        _, _, r, _ = _std(self.m)
        fw = self._weighted(f)
        local = _panel_apply(r, fw)
        totals = local[..., 0, :]
        suffix = np.flip(np.cumsum(np.flip(totals, axis=-2), axis=-2), axis=-2) - totals
        return local + suffix[..., None, :]

    def cumulative_from_zero(self, f):
        """int_0^t f (negative orientation for t < 0)."""
        _, s, r, _ = _std(self.m)
        fw = self._weighted(f)
        out = np.empty(np.broadcast_shapes(fw.shape))
        mid = self.n_panels // 2
        right = fw[..., mid:, :, :]
        loc = _panel_apply(s, right)
        tot = loc[..., -1, :]
        out[..., mid:, :, :] = loc + (np.cumsum(tot, axis=-2) - tot)[..., None, :]
        left = fw[..., :mid, :, :]
        loc = _panel_apply(r, left)
        tot = loc[..., 0, :]
        suf = np.flip(np.cumsum(np.flip(tot, axis=-2), axis=-2), axis=-2) - tot
        out[..., :mid, :, :] = -(loc + suf[..., None, :])
        return out

    def total(self, f):
        """int_{-T}^{T} f."""
        _, s, _, _ = _std(self.m)
        fw = self._weighted(f)
        return _panel_dot(s[-1], fw)

    def half_total(self, f, side):
        """int over t < 0 (side=-1) or t > 0 (side=+1)."""
        _, s, _, _ = _std(self.m)
        fw = self._weighted(f)
        mid = self.n_panels // 2
        sl = slice(None, mid) if side < 0 else slice(mid, None)
        return _panel_dot(s[-1], fw[..., sl, :, :])

    # -- interpolation --------------------------------------------------------
    def locate(self, t):
        """Panel index and u for given times (clipped to the grid)."""
        t = np.asarray(t, dtype=float)
        u = np.arcsinh(t / self.scale)
        u = np.clip(u, self.breaks[0], self.breaks[-1])
        idx = np.searchsorted(self.breaks, u, side="right") - 1
        idx = np.clip(idx, 0, self.n_panels - 1)
        return idx, u

    def interpolate(self, values, t):
        """Barycentric interpolation of nodal ``values`` (P, m, k) at times t."""
        x, _, _, w = _std(self.m)
        idx, u = self.locate(t)
        lo, hi = self.breaks[idx], self.breaks[idx + 1]
        xs = (2.0 * u - lo - hi) / (hi - lo)
        diff = xs[..., None] - x
        exact = diff == 0.0
        diff = np.where(exact, 1.0, diff)
        coef = w / diff
        hit = exact.any(axis=-1)
        coef = np.where(hit[..., None], exact.astype(float), coef)
        coef = coef / coef.sum(axis=-1, keepdims=True)
        panel_vals = values[idx]
        return np.einsum("...j,...jk->...k", coef, panel_vals)
