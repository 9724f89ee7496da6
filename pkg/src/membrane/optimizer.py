"""Rearrangement fixed-point iteration for min lambda(alpha, D) over |D| = A.

Each outer step solves the eigenproblem for the current D and replaces D by
the sublevel set of the eigenfunction with area A (the bathtub step).  Both
the sublevel geometry and the potential integral are exact for the P1
field, so lambda_n is nonincreasing up to round-off; a violation means a
bug and is raised.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .eigen import EigenSolverError, smallest_eigpair
from .fem import FEMSystem, rayleigh_quotient
from .mesh import Mesh
from .sublevel import (EXPLICIT, SUBLEVEL, Configuration, SublevelArea,
                       make_configuration, sublevel_configuration, sublevel_fraction,
                       symmetric_difference_area)

log = logging.getLogger(__name__)

DESCENT_SLACK = 1e-11


class DescentError(RuntimeError):
    """lambda increased across an outer step beyond round-off."""


class ThresholdError(ValueError):
    pass


# ---------------------------------------------------------------------------
# bathtub step


def _plateau_fill(mesh, field, lo, hi, A):
    """Sublevel set at a level carrying positive area, filled to exactly A.

    Triangles with all values in [lo, hi] form the plateau; they are added in
    ascending index order and the last one is clipped partially.  The other
    triangles are clipped at lo.
    """
    vals = field[mesh.triangles]
    flat = (vals.min(axis=1) >= lo) & (vals.max(axis=1) <= hi)
    values = vals.copy()
    thr = np.full(mesh.n_triangles, float(lo))
    frac = sublevel_fraction(vals, lo)
    frac[flat] = 0.0
    areas = mesh.areas
    need = A - float(np.dot(frac, areas))
    values[flat] = (0.0, 1.0, 2.0)
    thr[flat] = -1.0
    for i in np.flatnonzero(flat):
        if need <= 0:
            break
        f = min(need / areas[i], 1.0)
        thr[i] = 2.0 if f >= 1.0 else (
            math.sqrt(2 * f) if f <= 0.5 else 2.0 - math.sqrt(2 * (1 - f)))
        need -= f * areas[i]
    return make_configuration(mesh, values, thr, lo, EXPLICIT, plateau=True)


def find_threshold(mesh: Mesh, field: np.ndarray, A: float, area_tol: float | None = None,
                   value_tol: float | None = None, max_steps: int = 200):
    """Bisection for t0 with |{field <= t0}| = A.

    Returns (t0, bracket) where bracket = (down, up) at termination.
    """
    field = np.asarray(field, dtype=float)
    if not np.all(np.isfinite(field)):
        raise ThresholdError("field is not finite")
    L = SublevelArea(mesh, field)
    total = L.total
    if A < -1e-12 * total or A > total * (1 + 1e-12):
        raise ThresholdError(f"target area {A} outside [0, {total}]")
    area_tol = 1e-10 * total if area_tol is None else area_tol
    fmin, fmax = float(field.min()), float(field.max())
    scale = max(abs(fmin), abs(fmax), 1e-300)
    value_tol = 1e-12 * scale if value_tol is None else value_tol
    if A >= total - area_tol:
        return fmax, (fmax, fmax)
    down, up = min(0.0, fmin), fmax
    t = down
    for _ in range(max_steps):
        t = 0.5 * (up + down)
        lt = L(t)
        if lt < A:
            down = t
        elif lt > A:
            up = t
        if abs(lt - A) <= area_tol and up - down <= value_tol:
            break
        if lt == A or up - down <= 4 * np.spacing(scale):
            break
    return t, (down, up)


def bathtub_config(mesh: Mesh, field: np.ndarray, A: float, area_tol: float | None = None,
                   value_tol: float | None = None) -> Configuration:
    """Exact sublevel set of `field` with area A (plateaus filled deterministically)."""
    field = np.asarray(field, dtype=float)
    total = mesh.area
    area_tol = 1e-10 * total if area_tol is None else area_tol
    t, (down, up) = find_threshold(mesh, field, A, area_tol, value_tol)
    config = sublevel_configuration(mesh, field, t)
    if abs(config.total_area - A) <= area_tol:
        return config
    # L jumps inside [down, up]: a level set of positive measure
    config = _plateau_fill(mesh, field, down, up, A)
    log.info("plateau in sublevel area at t=%.6g; filled by triangle order", t)
    return config


# ---------------------------------------------------------------------------
# initial shapes


@dataclass(frozen=True)
class InitShape:
    """How D_0 is generated; every kind yields a configuration of area exactly A.

    kinds: boundary_ring, half_plane(angle), sector(angle, outside),
    random(seed), lobe(side), explicit(config).
    """

    kind: str
    angle: float = 0.0
    seed: int = 0
    side: int = -1
    outside: bool = False
    config: Configuration | None = None

    def label(self) -> str:
        if self.kind == "half_plane":
            return f"half_plane:{self.angle:g}"
        if self.kind == "sector":
            return f"sector:{self.angle:g}" + (":out" if self.outside else "")
        if self.kind == "random":
            return f"random:{self.seed}"
        if self.kind == "lobe":
            return f"lobe:{self.side:+d}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "InitShape":
        parts = text.strip().split(":")
        kind = parts[0]
        if kind == "boundary_ring":
            return cls(kind)
        if kind == "half_plane":
            return cls(kind, angle=float(parts[1]) if len(parts) > 1 else 0.0)
        if kind == "sector":
            return cls(kind, angle=float(parts[1]) if len(parts) > 1 else 0.0,
                       outside=len(parts) > 2 and parts[2] == "out")
        if kind == "random":
            return cls(kind, seed=int(parts[1]) if len(parts) > 1 else 0)
        if kind == "lobe":
            return cls(kind, side=int(parts[1]) if len(parts) > 1 else -1)
        raise ValueError(f"unknown init shape {text!r}")


def default_inits(seed: int = 0) -> list[InitShape]:
    seeds = np.random.SeedSequence(seed).generate_state(3)
    return [
        InitShape("boundary_ring"),
        InitShape("half_plane", angle=0.0),
        InitShape("half_plane", angle=math.pi),
        InitShape("half_plane", angle=math.pi / 2),
        InitShape("half_plane", angle=-math.pi / 2),
        InitShape("sector", angle=math.pi / 2),
    ] + [InitShape("random", seed=int(s)) for s in seeds]


def boundary_distance(mesh: Mesh) -> np.ndarray:
    from .mesh import _segment_distance

    be = mesh.boundary_edges()
    return _segment_distance(mesh.nodes, mesh.nodes[be[:, 0]], mesh.nodes[be[:, 1]])


def init_field(mesh: Mesh, init: InitShape) -> np.ndarray:
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    c = mesh.nodes.mean(axis=0) if mesh.tag.kind in ("rectangle", "custom") else np.zeros(2)
    if init.kind == "boundary_ring":
        return boundary_distance(mesh)
    if init.kind == "half_plane":
        return (x - c[0]) * math.cos(init.angle) + (y - c[1]) * math.sin(init.angle)
    if init.kind == "sector":
        th = np.arctan2(y - c[1], x - c[0])
        d = np.abs(np.angle(np.exp(1j * (th - init.angle))))
        return -d if init.outside else d
    if init.kind == "random":
        return np.random.default_rng(init.seed).random(mesh.n_nodes)
    if init.kind == "lobe":
        return -np.hypot(x - 2.0 * init.side, y)
    raise ValueError(f"init kind {init.kind!r} has no generating field")


def initial_config(mesh: Mesh, init: InitShape, A: float, area_tol=None) -> Configuration:
    if init.kind == "explicit":
        return init.config
    return bathtub_config(mesh, init_field(mesh, init), A, area_tol)


# ---------------------------------------------------------------------------
# main loop


@dataclass
class TraceRow:
    n: int
    lam: float
    t: float
    area_err: float
    inner_iters: int
    coupling: float = math.nan  # R(u_{n-1}, D_n)


@dataclass
class OptRun:
    alpha: float
    A: float
    eps: float
    trace: list[TraceRow]
    final_field: np.ndarray
    final_config: Configuration
    converged: bool
    cycling: bool = False
    init: str = ""
    area_tol: float = 0.0

    @property
    def lam(self) -> float:
        return self.trace[-1].lam

    @property
    def n_outer(self) -> int:
        return self.trace[-1].n

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_outer"


def optimize(mesh: Mesh, alpha: float, A: float, init: InitShape | Configuration | None = None,
             eps: float = 1e-8, max_outer: int = 500, area_tol: float | None = None,
             system: FEMSystem | None = None, eig_tol: float = 1e-12,
             config_tol: float | None = None) -> OptRun:
    """Alternate eigensolves and bathtub steps until lambda and D both settle.

    Stops when |lambda_n - lambda_(n-1)| < eps and the last step moved D by at
    most config_tol in symmetric-difference area (default 10 area_tol).  The
    configuration test matters because lambda is stationary in D: a change
    of order eps in lambda still allows D to move by about sqrt(eps).  If
    lambda has stalled for three steps while D oscillates (D_n is closer to
    D_(n-2) than to D_(n-1)), the run stops as converged with the cycling
    flag set.  Slow monotone drift is not cycling: it runs on to max_outer.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if eps <= 0:
        raise ValueError("eps must be positive")
    system = system or FEMSystem(mesh)
    total = mesh.area
    if A < 0 or A > total * (1 + 1e-12):
        raise ThresholdError(f"A={A} outside [0, |Omega|={total}]")
    area_tol = 1e-10 * total if area_tol is None else area_tol
    config_tol = 10 * area_tol if config_tol is None else config_tol
    if init is None:
        init = InitShape("boundary_ring")
    if isinstance(init, Configuration):
        config, label = init, "explicit"
    else:
        config, label = initial_config(mesh, init, A, area_tol), init.label()
    K, M = system.K, system.M

    def solve(cfg, x0):
        P = system.potential(cfg)
        return smallest_eigpair(K, P, M, alpha, tol=eig_tol, x0=x0, system=system), P

    pair, _ = solve(config, None)
    trace = [TraceRow(0, pair.lam, config.threshold, abs(config.total_area - A), pair.iterations)]
    prev_config = older_config = config
    converged = cycling = False
    diffs: list[float] = []
    stalled = 0
    for n in range(1, max_outer + 1):
        u = pair.full
        config = bathtub_config(mesh, u, A, area_tol)
        P = system.potential(config)
        coupling = rayleigh_quotient(K, P, M, alpha, pair.vector)
        new, _ = solve(config, pair.vector)
        row = TraceRow(n, new.lam, config.threshold, abs(config.total_area - A),
                       new.iterations, coupling)
        trace.append(row)
        if new.lam > pair.lam + DESCENT_SLACK * abs(new.lam):
            raise DescentError(
                f"lambda rose from {pair.lam!r} to {new.lam!r} at outer step {n}")
        step = abs(new.lam - pair.lam)
        diffs.append(symmetric_difference_area(mesh, config, prev_config))
        older_config, prev_config, pair = prev_config, config, new
        stalled = stalled + 1 if step < eps else 0
        if stalled and diffs[-1] <= config_tol:
            converged = True
            break
        if stalled >= 3 and (symmetric_difference_area(mesh, config, older_config)
                             < 0.5 * diffs[-1]):
            converged = cycling = True
            log.info("lambda stalled while D oscillates (%.3g); flagged as cycling", diffs[-1])
            break
    return OptRun(alpha, A, eps, trace, pair.full, prev_config, converged, cycling,
                  label, area_tol)


# ---------------------------------------------------------------------------
# multi-start


@dataclass
class MultiStart:
    best: OptRun
    runs: list[OptRun | None]
    ties: list[int] = field(default_factory=list)
    failures: dict[int, str] = field(default_factory=dict)


def _run_one(args):
    mesh, alpha, A, init, eps, max_outer = args
    return optimize(mesh, alpha, A, init, eps=eps, max_outer=max_outer)


def multi_start(mesh: Mesh, alpha: float, A: float, inits: list, eps: float = 1e-8,
                max_outer: int = 500, workers: int = 1,
                system: FEMSystem | None = None) -> MultiStart:
    """Run the optimizer from every initial shape and keep the lowest lambda."""
    if not inits:
        raise ValueError("need at least one initial shape")
    runs: list[OptRun | None] = []
    failures: dict[int, str] = {}
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futs = [pool.submit(_run_one, (mesh, alpha, A, i, eps, max_outer)) for i in inits]
            for k, f in enumerate(futs):
                try:
                    runs.append(f.result())
                except (EigenSolverError, DescentError, ThresholdError) as exc:
                    runs.append(None)
                    failures[k] = repr(exc)
    else:
        system = system or FEMSystem(mesh)
        for k, init in enumerate(inits):
            try:
                runs.append(optimize(mesh, alpha, A, init, eps=eps, max_outer=max_outer,
                                     system=system))
            except (EigenSolverError, DescentError, ThresholdError) as exc:
                runs.append(None)
                failures[k] = repr(exc)
    ok = [k for k, r in enumerate(runs) if r is not None]
    if not ok:
        raise RuntimeError(f"all runs failed: {failures}")
    best_k = min(ok, key=lambda k: (runs[k].lam, k))
    best = runs[best_k]
    ties = [k for k in ok if abs(runs[k].lam - best.lam) <= 1e-9 * abs(best.lam)]
    return MultiStart(best, runs, ties, failures)
