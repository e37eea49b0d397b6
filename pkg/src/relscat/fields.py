"""Electromagnetic field families with a long/short-range split.

A model carries a potential V = V^l + V^s and an antisymmetric magnetic
matrix B = B^l + B^s.  The force on a particle at x with velocity v is
``-grad V(x) + B(x) v / c``.

Builtin families
----------------
zero
    Everything vanishes.
soft_coulomb
    V^l = q_l (1+|x|^2)^(-alpha/2),  V^s = q_s (1+|x|^2)^(-(alpha+1)/2),
    B^l with profile (1+|x|^2)^(-(alpha+1)/2) and amplitude m_l,
    B^s with profile (1+|x|^2)^(-(alpha+2)/2) and amplitude m_s.
gaussian_bump
    Same long-range tail as soft_coulomb; the short-range part is a
    Gaussian bump q_s exp(-|x-center|^2/width^2) (and m_s for B^s).

For n = 2 the magnetic matrix is B_12 = m phi(|y|^2).  For n >= 3 it is the
exterior derivative of the vector potential -phi(|y|^2) M y / 2 with M the
generator of rotations in the (x_1, x_2) plane, so it is closed by
construction.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SpeedExceeded

# safety factor applied on top of sampled suprema when fixing decay constants
BETA_MARGIN = 1.01


class Family(str, enum.Enum):
    ZERO = "zero"
    SOFT_COULOMB = "soft_coulomb"
    GAUSSIAN_BUMP = "gaussian_bump"


# ---------------------------------------------------------------------------
# radial profiles phi(s), s = |y|^2, with first and second s-derivatives

def _soft(power):
    h = 0.5 * power

    def prof(s):
        base = 1.0 + s
        f = base ** (-h)
        return f, -h * f / base, h * (h + 1.0) * f / base**2

    return prof


def _gauss(width):
    w2 = width * width

    def prof(s):
        f = np.exp(-s / w2)
        return f, -f / w2, f / (w2 * w2)

    return prof


@dataclass(frozen=True)
class _Term:
    amp: float
    profile: object
    center: np.ndarray | None = None

    def shifted(self, x):
        return x if self.center is None else x - self.center


def _scalar_terms(x, term, order):
    y = term.shifted(x)
    s = np.einsum("...i,...i->...", y, y)
    f, f1, f2 = term.profile(s)
    if order == 0:
        return term.amp * f
    if order == 1:
        return term.amp * 2.0 * f1[..., None] * y
    n = y.shape[-1]
    return term.amp * (4.0 * f2[..., None, None] * y[..., :, None] * y[..., None, :]
                       + 2.0 * f1[..., None, None] * np.eye(n))


def _rotation_generator(n):
    m = np.zeros((n, n))
    m[0, 1], m[1, 0] = 1.0, -1.0
    return m


def _magnetic_matrix(x, term):
    y = term.shifted(x)
    n = y.shape[-1]
    s = np.einsum("...i,...i->...", y, y)
    f, f1, _ = term.profile(s)
    gen = _rotation_generator(n)
    if n == 2:
        return term.amp * f[..., None, None] * gen
    my = y @ gen.T
    outer = y[..., :, None] * my[..., None, :] - my[..., :, None] * y[..., None, :]
    return term.amp * (f[..., None, None] * gen - f1[..., None, None] * outer)


def _magnetic_apply(x, v, term):
    """B(x) v for one term; avoids building matrices in 2-D."""
    y = term.shifted(x)
    s = np.einsum("...i,...i->...", y, y)
    f, f1, _ = term.profile(s)
    if y.shape[-1] == 2:
        b = term.amp * f
        return np.stack([b * v[..., 1], -b * v[..., 0]], axis=-1)
    return np.einsum("...ik,...k->...i", _magnetic_matrix(x, term), v)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldModel:
    """Immutable field description with stored decay constants.

    ``beta_l`` holds (beta_0^l, beta_1^l, beta_2^l) and ``beta_s`` holds
    (beta_1^s, beta_2^s, beta_3^s).  When left as None they are fixed at
    construction by maximising the decay ratios over a dense sample set.
    """

    n: int = 2
    c: float = 1.0
    alpha: float = 1.0
    family: Family = Family.ZERO
    q_l: float = 0.0
    q_s: float = 0.0
    m_l: float = 0.0
    m_s: float = 0.0
    width: float = 1.0
    center: tuple | None = None
    beta_l: tuple | None = None
    beta_s: tuple | None = None
    _terms: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "family", Family(self.family))
        if self.n < 2:
            raise ValueError("dimension n must be >= 2")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.center is not None:
            ctr = tuple(float(t) for t in self.center)
            if len(ctr) != self.n:
                raise ValueError("center must have n components")
            set_(self, "center", ctr)
        if self.family is Family.ZERO:
            for name in ("q_l", "q_s", "m_l", "m_s"):
                set_(self, name, 0.0)
        set_(self, "_terms", self._build_terms())
        if self.beta_l is None or self.beta_s is None:
            bl, bs = decay_constants(self)
            if self.beta_l is None:
                set_(self, "beta_l", bl)
            if self.beta_s is None:
                set_(self, "beta_s", bs)
        set_(self, "beta_l", tuple(float(b) for b in self.beta_l))
        set_(self, "beta_s", tuple(float(b) for b in self.beta_s))

    def _build_terms(self):
        a = self.alpha
        terms = {"V_l": [], "V_s": [], "B_l": [], "B_s": []}
        if self.family is Family.ZERO:
            return terms
        if self.q_l:
            terms["V_l"].append(_Term(self.q_l, _soft(a)))
        if self.m_l:
            terms["B_l"].append(_Term(self.m_l, _soft(a + 1.0)))
        if self.family is Family.SOFT_COULOMB:
            if self.q_s:
                terms["V_s"].append(_Term(self.q_s, _soft(a + 1.0)))
            if self.m_s:
                terms["B_s"].append(_Term(self.m_s, _soft(a + 2.0)))
        else:
            ctr = None if self.center is None else np.asarray(self.center)
            if self.q_s:
                terms["V_s"].append(_Term(self.q_s, _gauss(self.width), ctr))
            if self.m_s:
                terms["B_s"].append(_Term(self.m_s, _gauss(self.width), ctr))
        return terms

    # -- derived constants -------------------------------------------------
    @property
    def has_long_range(self):
        return bool(self._terms["V_l"] or self._terms["B_l"])

    @property
    def has_short_range(self):
        return bool(self._terms["V_s"] or self._terms["B_s"])

    @property
    def is_zero(self):
        return not (self.has_long_range or self.has_short_range)

    @property
    def beta2(self):
        """max(beta_2^l, beta_2^s)."""
        return max(self.beta_l[2], self.beta_s[1])

    @property
    def beta(self):
        """max(beta_1^l, beta_2^l, beta_2^s, beta_3^s), the constant in the error bounds."""
        return max(self.beta_l[1], self.beta_l[2], self.beta_s[1], self.beta_s[2])

    # -- variants ----------------------------------------------------------
    def scaled(self, s):
        """All amplitudes multiplied by ``s``; decay constants scale exactly."""
        s = float(s)
        return replace(self, q_l=self.q_l * s, q_s=self.q_s * s, m_l=self.m_l * s,
                       m_s=self.m_s * s,
                       beta_l=tuple(abs(s) * b for b in self.beta_l),
                       beta_s=tuple(abs(s) * b for b in self.beta_s))

    def with_beta(self, target):
        """Rescale amplitudes so that ``self.beta == target``."""
        if self.beta == 0:
            raise ValueError("cannot rescale a zero field")
        return self.scaled(target / self.beta)

    def long_range_only(self):
        return replace(self, q_s=0.0, m_s=0.0, beta_l=self.beta_l,
                       beta_s=(0.0, 0.0, 0.0))

    def short_range_only(self):
        return replace(self, q_l=0.0, m_l=0.0, beta_l=(0.0, 0.0, 0.0),
                       beta_s=self.beta_s)

    # -- evaluation --------------------------------------------------------
    def _keys(self, kind, part):
        if part == "total":
            return (kind + "_l", kind + "_s")
        if part == "long":
            return (kind + "_l",)
        if part == "short":
            return (kind + "_s",)
        raise ValueError(f"unknown part {part!r}")

    def potential(self, x, part="total"):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for key in self._keys("V", part):
            for term in self._terms[key]:
                out = out + _scalar_terms(x, term, 0)
        return out if out.ndim else float(out)

    def grad_potential(self, x, part="total"):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for key in self._keys("V", part):
            for term in self._terms[key]:
                out = out + _scalar_terms(x, term, 1)
        return out

    def hessian_potential(self, x, part="total"):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.n,))
        for key in self._keys("V", part):
            for term in self._terms[key]:
                out = out + _scalar_terms(x, term, 2)
        return out

    def magnetic(self, x, part="total"):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.n,))
        for key in self._keys("B", part):
            for term in self._terms[key]:
                out = out + _magnetic_matrix(x, term)
        return out

    def force(self, x, v, part="total"):
        """Vectorised -grad V(x) + B(x) v / c (no speed check)."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape, v.shape))
        for key in self._keys("V", part):
            for term in self._terms[key]:
                out -= _scalar_terms(x, term, 1)
        for key in self._keys("B", part):
            for term in self._terms[key]:
                out += _magnetic_apply(x, v, term) / self.c
        return out


# ---------------------------------------------------------------------------
# public operations

def eval_field(model, x):
    """Return (V^l, grad V^l, V^s, grad V^s, B^l, B^s) at a single point."""
    x = np.asarray(x, dtype=float)
    return (model.potential(x, "long"), model.grad_potential(x, "long"),
            model.potential(x, "short"), model.grad_potential(x, "short"),
            model.magnetic(x, "long"), model.magnetic(x, "short"))


def total_force(model, x, v):
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) > model.c:
        raise SpeedExceeded(f"|v| = {np.linalg.norm(v)!r} exceeds c = {model.c!r}")
    return model.force(np.asarray(x, dtype=float), v)


def fd_step(x):
    """Central-difference step 1e-6 * max(1, |x|)."""
    return 1e-6 * np.maximum(1.0, np.linalg.norm(x, axis=-1))


def magnetic_jacobian(model, x, part="total"):
    """d B_{ik} / d x_j by central differences, shape (..., j, i, k)."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x)[..., None]
    out = []
    for j in range(model.n):
        e = np.zeros(model.n)
        e[j] = 1.0
        bp = model.magnetic(x + h * e, part)
        bm = model.magnetic(x - h * e, part)
        out.append((bp - bm) / (2.0 * h[..., None]))
    return np.stack(out, axis=-3)


# (name, field kind, part, derivative order, beta index, power offset)
_DECAY_BOUNDS = (
    ("V_l[0]", "V", "long", 0, ("l", 0), 0),
    ("V_l[1]", "V", "long", 1, ("l", 1), 1),
    ("V_l[2]", "V", "long", 2, ("l", 2), 2),
    ("B_l[0]", "B", "long", 0, ("l", 1), 1),
    ("B_l[1]", "B", "long", 1, ("l", 2), 2),
    ("V_s[0]", "V", "short", 0, ("s", 0), 1),
    ("V_s[1]", "V", "short", 1, ("s", 1), 2),
    ("V_s[2]", "V", "short", 2, ("s", 2), 3),
    ("B_s[0]", "B", "short", 0, ("s", 1), 2),
    ("B_s[1]", "B", "short", 1, ("s", 2), 3),
)


def _derivative_sup(model, x, kind, part, order):
    """max |entry| of the order-th derivative tensor at each point."""
    if kind == "V":
        if order == 0:
            val = np.abs(model.potential(x, part))
            return np.asarray(val, dtype=float)
        if order == 1:
            return np.max(np.abs(model.grad_potential(x, part)), axis=-1)
        return np.max(np.abs(model.hessian_potential(x, part)), axis=(-2, -1))
    if order == 0:
        return np.max(np.abs(model.magnetic(x, part)), axis=(-2, -1))
    return np.max(np.abs(magnetic_jacobian(model, x, part)), axis=(-3, -2, -1))


def _weighted_sups(model, points):
    r = np.linalg.norm(points, axis=-1)
    out = {}
    for name, kind, part, order, _, offset in _DECAY_BOUNDS:
        sup = _derivative_sup(model, points, kind, part, order)
        out[name] = sup * (1.0 + r) ** (model.alpha + offset)
    return out


def _sample_points(model):
    n = model.n
    rng = np.random.default_rng(12345)
    dirs = [np.eye(n), -np.eye(n)]
    for i, k in itertools.combinations(range(n), 2):
        for si, sk in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            d = np.zeros(n)
            d[i], d[k] = si, sk
            dirs.append(d[None, :] / np.sqrt(2.0))
    rnd = rng.normal(size=(48, n))
    dirs.append(rnd / np.linalg.norm(rnd, axis=1, keepdims=True))
    dirs = np.concatenate(dirs)
    radii = np.concatenate([np.linspace(0.0, 12.0, 1201), np.geomspace(12.0, 1e6, 240)[1:]])
    pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    if model.center is not None:
        ctr = np.asarray(model.center)
        local = np.concatenate([np.linspace(0.0, 6.0 * model.width, 601)])
        pts = np.concatenate([pts, ctr + (local[:, None, None] * dirs[None]).reshape(-1, n)])
    return pts


def decay_constants(model):
    """Fix (beta_l, beta_s) by maximising the decay ratios over sample points.

    A beta shared by a potential bound and a magnetic bound takes the larger
    of the two suprema.  The result is inflated by BETA_MARGIN.
    """
    if not model._terms or model.family is Family.ZERO:
        return (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)
    pts = _sample_points(model)
    sups = {}
    for start in range(0, len(pts), 20000):
        chunk = _weighted_sups(model, pts[start:start + 20000])
        for key, val in chunk.items():
            sups[key] = max(sups.get(key, 0.0), float(np.max(val)))
    beta = {"l": [0.0, 0.0, 0.0], "s": [0.0, 0.0, 0.0]}
    for name, _, _, _, (side, idx), _ in _DECAY_BOUNDS:
        beta[side][idx] = max(beta[side][idx], BETA_MARGIN * sups[name])
    return tuple(beta["l"]), tuple(beta["s"])


@dataclass(frozen=True)
class DecayReport:
    ratios: dict
    passed: bool

    @property
    def max_ratio(self):
        return max(self.ratios.values())


def verify_decay(model, probes):
    """Check the stored decay constants at ``probes``.

    Each ratio is max over probes of |derivative| (1+|x|)^power / beta; a
    bound with beta = 0 contributes 0 when its field vanishes and inf
    otherwise.  Passes iff every ratio is <= 1 + 1e-8.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.size == 0:
        raise ValueError("need at least one probe point")
    sups = _weighted_sups(model, probes)
    ratios = {}
    for name, _, _, _, (side, idx), _ in _DECAY_BOUNDS:
        b = (model.beta_l if side == "l" else model.beta_s)[idx]
        top = float(np.max(sups[name]))
        if b > 0:
            ratios[name] = top / b
        else:
            ratios[name] = 0.0 if top == 0.0 else np.inf
    return DecayReport(ratios, all(r <= 1.0 + 1e-8 for r in ratios.values()))


def verify_closure(model, probes):
    """Max of |d_i B_km + d_m B_ik + d_k B_mi| over probes and index triples."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    jac = magnetic_jacobian(model, probes)  # (..., j, i, k)
    # cyclic sum: d_i B_km + d_m B_ik + d_k B_mi
    res = (jac
           + np.transpose(jac, (0, 2, 3, 1))
           + np.transpose(jac, (0, 3, 1, 2)))
    return float(np.max(np.abs(res))) if res.size else 0.0
