"""Relativistic velocity/impulse maps, energy and the speed threshold mu.

All functions broadcast over leading axes; the last axis is the spatial one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeInput, SpeedExceeded

# g_inv refuses speeds within this relative distance of c
LIGHTSPEED_GUARD = 1e-14


def _norm2(a):
    return np.einsum("...i,...i->...", a, a)


def g(p, c=1.0):
    """Velocity of a particle with impulse ``p``: p / sqrt(1 + |p|^2/c^2)."""
    p = np.asarray(p, dtype=float)
    gamma = np.sqrt(1.0 + _norm2(p) / c**2)
    return p / gamma[..., None]


def g_inv(v, c=1.0):
    """Impulse of a particle moving with velocity ``v`` (|v| < c)."""
    v = np.asarray(v, dtype=float)
    beta2 = _norm2(v) / c**2
    if np.any(beta2 >= (1.0 - LIGHTSPEED_GUARD) ** 2):
        raise SpeedExceeded(f"|v| >= c (max |v|/c = {np.sqrt(np.max(beta2)):.17g})")
    return v / np.sqrt(1.0 - beta2)[..., None]


def g_diff(p, dp, c=1.0):
    """Return g(p + dp) - g(p) without cancellation when |dp| << |p|.

    Uses g(p1) - g(p0) = dp/gamma1 - p0 (dp.(p0+p1)) / (c^2 gamma0 gamma1 (gamma0+gamma1)).
    """
    p = np.asarray(p, dtype=float)
    dp = np.asarray(dp, dtype=float)
    p1 = p + dp
    g0 = np.sqrt(1.0 + _norm2(p) / c**2)
    g1 = np.sqrt(1.0 + _norm2(p1) / c**2)
    proj = np.einsum("...i,...i->...", dp, p + p1)
    coef = proj / (c**2 * g0 * g1 * (g0 + g1))
    return dp / g1[..., None] - p * coef[..., None]


def grad_g(p, c=1.0):
    """Jacobian d g_i / d p_k, shape (..., n, n)."""
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    gamma2 = 1.0 + _norm2(p) / c**2
    eye = np.eye(n)
    return (eye / np.sqrt(gamma2)[..., None, None]
            - p[..., :, None] * p[..., None, :] / (c**2 * gamma2[..., None, None] ** 1.5))


def lorentz_factor(v, c=1.0):
    v = np.asarray(v, dtype=float)
    return 1.0 / np.sqrt(1.0 - _norm2(v) / c**2)


def mu(sigma, c=1.0):
    """Speed threshold sqrt(2 sigma / (sigma/c^2 + sqrt(sigma^2/c^4 + 4)))."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise NegativeInput("mu() needs sigma >= 0")
    s = sigma / c**2
    out = np.sqrt(2.0 * sigma / (s + np.sqrt(s * s + 4.0)))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KinState:
    """Position/velocity pair with cached impulse."""

    x: np.ndarray
    v: np.ndarray
    c: float = 1.0
    p: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if np.linalg.norm(self.v) >= self.c:
            raise SpeedExceeded("KinState requires |v| < c")
        object.__setattr__(self, "p", g_inv(self.v, self.c))


def energy(model, state: KinState) -> float:
    """Conserved energy c^2 sqrt(1 + |p|^2/c^2) + V(x)."""
    c = state.c
    rest = c**2 * np.sqrt(1.0 + _norm2(state.p) / c**2)
    return float(rest + model.potential(state.x))
