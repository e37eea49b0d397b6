"""Command-line driver: ``relscat <task> --config FILE [--out PATH] [--threads N] [--mode M]``.

Exit status is 0 when every row passes, 1 on numerical failures and 2 on
configuration errors.  Rows are produced by a pure worker per ray and
written by a single writer in ray order, so the output does not depend on
the thread count.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fields
from .config import TASKS, RunConfig, load_config
from .errors import ConfigError, RelscatError
from .free import FUTURE, PAST, default_grid, solve_free
from .inverse import (SweepConfig, cell_centres, forward_sinogram,
                      reconstruct_Fs, synthetic_sweep, verify_high_energy, xray_invert)
from .modified import modified_batch
from .scattering import scatter_batch

SPEED_TOL = 1e-8


def fmt(value):
    """Number formatting used for every CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def parallel_map(fn, items, threads):
    """Ordered map; results come back in the order of ``items``."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _vec(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


def _ray_items(cfg):
    if not cfg.rays:
        raise ConfigError("at least one ray is required", "rays")
    if not cfg.rho:
        raise ConfigError("at least one speed is required", "run.rho")
    return [(k, np.array(th), np.array(x), rho)
            for k, (th, x, rho) in enumerate((th, x, rho) for th, x in cfg.rays for rho in cfg.rho)]


def _guard(fn, n_err_cols):
    """Wrap a per-ray worker so failures become rows carrying the ray."""
    def run(item):
        k, th, x, rho = item
        try:
            return fn(item)
        except RelscatError as exc:
            if exc.ray is None:
                exc.ray = (th.tolist(), x.tolist(), rho)
            return [[k, *th, *x, rho] + [math.nan] * n_err_cols + [False, str(exc)]]
    return run


# ---------------------------------------------------------------------------
# tasks; each returns (header, rows)

def task_scatter(cfg, modified=False):
    model, n = cfg.model, cfg.model.n
    tol = cfg.tolerances.picard
    if modified:
        cols = _vec("a_tilde_sc", n) + _vec("b_tilde_sc", n) + _vec("W_tilde", n) + [
            "speed_error", "iterations", "residual", "contraction", "g_contraction"]
    else:
        cols = _vec("a_sc", n) + _vec("b_sc", n) + _vec("W", n) + [
            "speed_error", "iterations", "residual", "contraction"]

    def work(item):
        k, th, x, rho = item
        v = rho * th
        if modified:
            d = modified_batch(model, v, x, cfg.radius, tol, cfg.mode, with_b=True)
            extra = [float(d["bt"]["contraction"][0])]
            W = d["W_tilde"][0]
        else:
            d = scatter_batch(model, v, x, cfg.radius, tol, cfg.mode, with_W=True)
            extra = []
            W = d["W"][0]
        a = d["a"][0]
        err = abs(np.linalg.norm(a) - rho) / rho
        return [[k, *th, *x, rho, *d["a_sc"][0], *d["b_sc"][0], *W, err,
                 int(d["iterations"][0]), float(d["residual"][0]),
                 float(d["contraction"][0]), *extra, err <= SPEED_TOL, ""]]

    header = ["ray", *_vec("theta", n), *_vec("x", n), "rho", *cols, "pass", "error"]
    return header, parallel_map(_guard(work, len(cols)), _ray_items(cfg), cfg.threads)


def task_free_solve(cfg):
    model, n = cfg.model, cfg.model.n
    grid = default_grid(model)
    cols = ["direction", "s", "t", *_vec("pos", n), *_vec("vel", n), "iterations", "residual"]

    def work(item):
        k, th, x, rho = item
        rows = []
        for direction in (PAST, FUTURE):
            traj = solve_free(model, rho * th, x, direction, cfg.tolerances.picard, grid,
                              mode=cfg.mode, dist=float(np.linalg.norm(x)), qnorm=0.0)
            t, pos, vel = traj.nodes()
            keep = np.ones(t.shape, dtype=bool)
            keep[1:, 0] = False  # panel endpoints are stored twice
            t, pos, vel = t[keep], pos[keep], vel[keep]
            s = t / (1.0 + np.abs(t))
            for j in range(len(s)):
                rows.append([k, *th, *x, rho, direction, s[j], t[j], *pos[j], *vel[j],
                             traj.info["iterations"], traj.info["residual"], True, ""])
        return rows

    header = ["ray", *_vec("theta", n), *_vec("x", n), "rho", *cols, "pass", "error"]
    return header, parallel_map(_guard(work, len(cols)), _ray_items(cfg), cfg.threads)


def task_verify(cfg):
    model, n = cfg.model, cfg.model.n
    kind = cfg.sweep.map
    cols = ["r", "quantity", *_vec("lhs", n), *_vec("target", n), "residual", "bound"]

    def work(item):
        k, th, x, rho = item
        rep = verify_high_energy(model, [(th, x)], [rho], kind, cfg.radius, cfg.tolerances.picard)
        return [[k, *th, *x, rho, row["r"], row["quantity"], *row["lhs"], *row["target"],
                 row["residual"], row["bound"], row["pass"], ""] for row in rep.rows]

    header = ["ray", *_vec("theta", n), *_vec("x", n), "rho", *cols, "pass", "error"]
    return header, parallel_map(_guard(work, len(cols)), _ray_items(cfg), cfg.threads)


def task_fields_check(cfg):
    model = cfg.model
    n = model.n
    # deterministic probes: a few directions times geometric radii
    radii = np.concatenate([[0.0], np.geomspace(1e-2, 1e3, 60)])
    dirs = np.eye(n)
    dirs = np.concatenate([dirs, -dirs, np.ones((1, n)) / math.sqrt(n)])
    probes = (radii[:, None, None] * dirs[None]).reshape(-1, n)
    decay = fields.verify_decay(model, probes)
    closure = fields.verify_closure(model, probes)
    rows = [[name, ratio, 1.0 + 1e-8, ratio <= 1.0 + 1e-8] for name, ratio in sorted(
        decay.ratios.items())]
    rows.append(["closure", closure, 1e-8, closure <= 1e-8])
    return ["check", "value", "threshold", "pass"], [rows]


def _sweep_config(cfg):
    s = cfg.sweep
    return SweepConfig(n_angles=s.n_angles, n_offsets=s.n_offsets, offset_extent=s.offset_extent,
                       speeds=tuple(s.speeds), extent=s.extent, resolution=s.resolution,
                       mode=s.map, solver_mode=cfg.mode, tol=cfg.tolerances.picard)


def _grid_block(values, sino_shape, extent, N, label):
    """Header line then one CSV row per grid row (or per angle for sinograms)."""
    K, M = sino_shape[:2]
    lines = [f"# K={K} M={M} L={fmt(float(extent))} N={N} component={label}"]
    lines += [",".join(fmt(v) for v in row) for row in values]
    return lines


def task_xray(cfg):
    """Forward-project V^s of the configured model, invert, compare."""
    model = cfg.model
    if model.n != 2:
        raise ConfigError("xray needs n = 2", "model.n")
    sc = _sweep_config(cfg)
    angles, offsets = sc.geometry()
    sino = forward_sinogram(lambda y: model.potential(y, part="short"), angles, offsets,
                            cfg.tolerances.quadrature)
    grid = xray_invert(sino, sc.extent, sc.resolution)
    X, Y = cell_centres(sc.extent, sc.resolution)
    truth = model.potential(np.stack([X, Y], axis=-1), part="short")
    rms = _rms(grid.values, truth)
    N = sc.resolution
    blocks = {"grid": _grid_block(grid.values, sino.shape, sc.extent, N, "V"),
              "sinogram": _grid_block(sino.values, sino.shape, sc.offset_extent, N, "V")}
    return rms, blocks


def task_reconstruct(cfg):
    model = cfg.model
    if model.n != 2:
        raise ConfigError("reconstruct needs n = 2", "model.n")
    sc = _sweep_config(cfg)
    mapper = lambda fn, items: parallel_map(fn, items, cfg.threads)  # noqa: E731
    data = synthetic_sweep(model, sc, mapper)
    rec, sino = reconstruct_Fs(model.long_range_only(), data, sc, model, mapper)
    rms = rec.rms_error
    grid_lines, sino_lines = [], []
    N = sc.resolution
    for i in range(2):
        grid_lines += _grid_block(rec.values[..., i], sino.shape, sc.extent, N, f"F{i}")
        sino_lines += _grid_block(sino.values[..., i], sino.shape, sc.offset_extent, N, f"F{i}")
    return rms, {"grid": grid_lines, "sinogram": sino_lines}


def _rms(values, truth):
    den = math.sqrt(float(np.mean(truth**2)))
    err = math.sqrt(float(np.mean((values - truth) ** 2)))
    return err / den if den > 0 else err


# ---------------------------------------------------------------------------
# output

def render_csv(header, row_groups):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for group in row_groups:
        for row in group:
            w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def run(cfg: RunConfig):
    """Execute ``cfg.task``; returns the exit status (0 pass, 1 failure)."""
    task = cfg.task
    if task in ("xray", "reconstruct"):
        rms, blocks = task_xray(cfg) if task == "xray" else task_reconstruct(cfg)
        ok = rms <= cfg.sweep.max_rms
        _write(cfg.out, "\n".join(blocks["grid"]) + "\n")
        if cfg.out is not None:
            p = Path(cfg.out)
            _write(p.with_name(p.stem + "_sinogram" + p.suffix),
                   "\n".join(blocks["sinogram"]) + "\n")
        print(f"{task}: rms relative error {rms:.4g} (limit {cfg.sweep.max_rms:g}) "
              f"{'PASS' if ok else 'FAIL'}", file=sys.stderr)
        return 0 if ok else 1
    if task == "scatter":
        header, groups = task_scatter(cfg)
    elif task == "scatter-mod":
        header, groups = task_scatter(cfg, modified=True)
    elif task == "free-solve":
        header, groups = task_free_solve(cfg)
    elif task == "verify-asymptotics":
        header, groups = task_verify(cfg)
    elif task == "fields-check":
        header, groups = task_fields_check(cfg)
    else:
        raise ConfigError(f"unknown task {task!r}", "task")
    _write(cfg.out, render_csv(header, groups))
    rows = [r for g in groups for r in g]
    pcol = header.index("pass")
    failed = [r for r in rows if not r[pcol]]
    for r in failed:
        if "error" in header and r[header.index("error")]:
            print(r[header.index("error")], file=sys.stderr)
    print(f"{task}: {len(rows) - len(failed)}/{len(rows)} rows pass", file=sys.stderr)
    return 0 if not failed else 1


def build_parser():
    p = argparse.ArgumentParser(prog="relscat", description=__doc__.splitlines()[0])
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True, help="sectioned key=value run file")
    p.add_argument("--out", default=None, help="output path (default: config value or stdout)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--mode", choices=("strict", "empirical"), default=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.task, args.out, args.threads,
                                                      args.mode)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RelscatError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
