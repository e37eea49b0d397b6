"""Run configuration: a sectioned key=value text file.

Grammar (``configparser`` syntax, ``#`` or ``;`` starts a comment line)::

    [model]
    family = soft_coulomb        # zero | soft_coulomb | gaussian_bump
    n = 2
    c = 1.0
    alpha = 1.0
    q_l = 0.0
    q_s = 0.05
    m_l = 0.0
    m_s = 0.0
    width = 1.0
    center = 0 0                 # optional, n numbers
    beta = 1e-3                  # optional: rescale amplitudes to this beta

    [rays]
    # explicit rays, one per line: theta components | x components
    list =
        1 0 | 0 1
        0 1 | -2 0
    # and/or a product grid: theta = (cos phi, sin phi), x = s theta_perp
    angles = 0 90                # degrees
    offsets = 1 2

    [run]
    rho = 0.95 0.99              # speeds
    mode = strict                # strict | empirical
    threads = 1
    out = out.csv
    radius = auto                # contraction radius r, or auto

    [tolerances]
    picard = 1e-12
    quadrature = 1e-13           # must be <= picard / 10
    ode = 1e-12

    [sweep]                      # reconstruct and xray tasks
    n_angles = 180
    n_offsets = 128
    offset_extent = 5.0
    extent = 4.0
    resolution = 128
    speeds = 0.999 0.9993 0.9996 0.9999
    map = standard               # standard | modified
    max_rms = 0.10

Rays are normalised (theta to unit length) and must satisfy
|theta . x| <= 1e-12 max(1, |x|).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fields import Family, FieldModel

TASKS = ("free-solve", "scatter", "scatter-mod", "verify-asymptotics", "xray", "reconstruct",
         "fields-check")
MODES = ("strict", "empirical")

_MODEL_FLOATS = ("c", "alpha", "q_l", "q_s", "m_l", "m_s", "width")
_KNOWN = {
    "model": {"family", "n", "beta", "center", *_MODEL_FLOATS},
    "rays": {"list", "angles", "offsets"},
    "run": {"rho", "mode", "threads", "out", "radius"},
    "tolerances": {"picard", "quadrature", "ode"},
    "sweep": {"n_angles", "n_offsets", "offset_extent", "extent", "resolution", "speeds",
              "map", "max_rms"},
}


@dataclass(frozen=True)
class Tolerances:
    picard: float = 1e-12
    quadrature: float = 1e-13
    ode: float = 1e-12


@dataclass(frozen=True)
class SweepSection:
    n_angles: int = 180
    n_offsets: int = 128
    offset_extent: float = 5.0
    extent: float = 4.0
    resolution: int = 128
    speeds: tuple = (0.999, 0.9993, 0.9996, 0.9999)
    map: str = "standard"
    max_rms: float = 0.10


@dataclass(frozen=True)
class RunConfig:
    """Validated run description."""

    model: FieldModel
    rays: tuple = ()
    rho: tuple = ()
    tolerances: Tolerances = field(default_factory=Tolerances)
    mode: str = "strict"
    threads: int = 1
    out: str | None = None
    radius: float | None = None
    sweep: SweepSection = field(default_factory=SweepSection)
    task: str | None = None

    def with_overrides(self, task=None, out=None, threads=None, mode=None):
        """Copy with command-line overrides applied and validated."""
        kw = dict(self.__dict__)
        if task is not None:
            if task not in TASKS:
                raise ConfigError(f"unknown task {task!r}", "task")
            kw["task"] = task
        if out is not None:
            kw["out"] = out
        if threads is not None:
            kw["threads"] = _positive_int(threads, "run.threads")
        if mode is not None:
            kw["mode"] = _choice(mode, MODES, "run.mode")
        return RunConfig(**kw)


# ---------------------------------------------------------------------------
# value parsers

def _float(text, name):
    try:
        val = float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {text!r}", name) from None
    if not math.isfinite(val):
        raise ConfigError(f"expected a finite number, got {text!r}", name)
    return val


def _floats(text, name):
    return tuple(_float(t, name) for t in text.replace(",", " ").split())


def _positive_int(text, name):
    try:
        val = int(text)
    except (TypeError, ValueError):
        raise ConfigError(f"expected an integer, got {text!r}", name) from None
    if val < 1:
        raise ConfigError(f"must be >= 1, got {val}", name)
    return val


def _choice(text, options, name):
    text = str(text).strip()
    if text not in options:
        raise ConfigError(f"must be one of {', '.join(options)}, got {text!r}", name)
    return text


def _ray(theta, x, name):
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if theta.shape != x.shape:
        raise ConfigError("theta and x must have the same number of components", name)
    norm = float(np.linalg.norm(theta))
    if norm == 0.0:
        raise ConfigError("theta must be nonzero", name)
    theta = theta / norm + 0.0
    x = x + 0.0
    if abs(float(theta @ x)) > 1e-12 * max(1.0, float(np.linalg.norm(x))):
        raise ConfigError(f"theta . x = {float(theta @ x):.3g} is not zero", name)
    return tuple(theta.tolist()), tuple(x.tolist())


def _parse_rays(sec, n):
    rays = []
    if "list" in sec:
        for k, line in enumerate(l for l in sec["list"].splitlines() if l.strip()):
            name = f"rays.list[{k}]"
            parts = line.split("|")
            if len(parts) != 2:
                raise ConfigError(f"expected 'theta | x', got {line.strip()!r}", name)
            theta, x = _floats(parts[0], name), _floats(parts[1], name)
            if len(theta) != n:
                raise ConfigError(f"ray has {len(theta)} components, model has n = {n}", name)
            rays.append(_ray(theta, x, name))
    if ("angles" in sec) != ("offsets" in sec):
        raise ConfigError("angles and offsets must be given together", "rays.angles")
    if "angles" in sec:
        if n != 2:
            raise ConfigError("angle grids need n = 2", "rays.angles")
        for phi in _floats(sec["angles"], "rays.angles"):
            th = np.array([math.cos(math.radians(phi)), math.sin(math.radians(phi))])
            perp = np.array([-th[1], th[0]])
            for s in _floats(sec["offsets"], "rays.offsets"):
                rays.append(_ray(th, s * perp, "rays.offsets"))
    return tuple(rays)


def _parse_model(sec):
    kw = {}
    if "family" in sec:
        try:
            kw["family"] = Family(sec["family"].strip())
        except ValueError:
            opts = ", ".join(f.value for f in Family)
            raise ConfigError(f"must be one of {opts}, got {sec['family']!r}",
                              "model.family") from None
    if "n" in sec:
        kw["n"] = _positive_int(sec["n"], "model.n")
    for key in _MODEL_FLOATS:
        if key in sec:
            kw[key] = _float(sec[key], f"model.{key}")
    if "center" in sec:
        kw["center"] = _floats(sec["center"], "model.center")
    try:
        model = FieldModel(**kw)
        if "beta" in sec:
            beta = _float(sec["beta"], "model.beta")
            if beta < 0:
                raise ConfigError("must be >= 0", "model.beta")
            model = model.with_beta(beta)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "model") from None
    return model


def _parse_sweep(sec):
    kw = {}
    for key in ("n_angles", "n_offsets", "resolution"):
        if key in sec:
            kw[key] = _positive_int(sec[key], f"sweep.{key}")
    for key in ("offset_extent", "extent", "max_rms"):
        if key in sec:
            kw[key] = _float(sec[key], f"sweep.{key}")
            if kw[key] <= 0:
                raise ConfigError("must be positive", f"sweep.{key}")
    if "speeds" in sec:
        kw["speeds"] = _floats(sec["speeds"], "sweep.speeds")
    if "map" in sec:
        kw["map"] = _choice(sec["map"], ("standard", "modified"), "sweep.map")
    return SweepSection(**kw)


def parse_config(text, source="<string>"):
    """Parse and validate configuration text into a ``RunConfig``.

    Raises
    ------
    ConfigError
        naming the offending ``section.key`` (or the line for syntax errors).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), f"{source}") from None
    for section in cp.sections():
        if section not in _KNOWN:
            raise ConfigError("unknown section", section)
        for key in cp[section]:
            if key not in _KNOWN[section]:
                raise ConfigError("unknown key", f"{section}.{key}")

    model = _parse_model(cp["model"] if cp.has_section("model") else {})
    rays = _parse_rays(cp["rays"] if cp.has_section("rays") else {}, model.n)
    run = cp["run"] if cp.has_section("run") else {}
    tol = cp["tolerances"] if cp.has_section("tolerances") else {}

    rho = _floats(run["rho"], "run.rho") if "rho" in run else ()
    for s in rho:
        if not 0.0 < s < model.c:
            raise ConfigError(f"speed {s} must lie in (0, c = {model.c})", "run.rho")
    tols = Tolerances(**{k: _float(tol[k], f"tolerances.{k}") for k in ("picard", "quadrature",
                                                                        "ode") if k in tol})
    for k in ("picard", "quadrature", "ode"):
        if getattr(tols, k) <= 0:
            raise ConfigError("must be positive", f"tolerances.{k}")
    if tols.quadrature > tols.picard / 10:
        raise ConfigError(f"{tols.quadrature:g} exceeds picard / 10 = {tols.picard / 10:g}",
                          "tolerances.quadrature")
    radius = None
    if "radius" in run and run["radius"].strip() != "auto":
        radius = _float(run["radius"], "run.radius")
        if radius <= 0:
            raise ConfigError("must be positive", "run.radius")
    sweep = _parse_sweep(cp["sweep"] if cp.has_section("sweep") else {})
    for s in sweep.speeds:
        if not 0.0 < s < model.c:
            raise ConfigError(f"speed {s} must lie in (0, c = {model.c})", "sweep.speeds")
    return RunConfig(
        model=model, rays=rays, rho=rho, tolerances=tols,
        mode=_choice(run.get("mode", "strict"), MODES, "run.mode"),
        threads=_positive_int(run.get("threads", "1"), "run.threads"),
        out=run.get("out"), radius=radius, sweep=sweep)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))
