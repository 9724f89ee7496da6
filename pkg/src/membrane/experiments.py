"""Canonical experiments and run artifacts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import io
from .config import ExperimentConfig
from .eigen import smallest_eigpair
from .fem import FEMSystem
from .mesh import Mesh, build_annulus_mesh, build_dumbbell_mesh
from .optimizer import InitShape, MultiStart, bathtub_config, multi_start
from .radial import RadialGrid, mode_gap_check, radial_optimize, sector_eigenvalue
from .shapes import (Isometry2D, asymmetry, lobe_report, rasterize_config,
                     rotational_asymmetry)

EIG_TOL = 1e-12
BREAK_ASYM = 0.1


# -- run artifacts -----------------------------------------------------------------

ARTIFACT_FILES = {"config": "config.txt", "mesh": "mesh.txt", "field": "field.csv",
                  "clips": "clips.txt", "trace": "trace.csv", "summary": "summary.txt",
                  "runs": "runs.csv", "vtk": "solution.vtk"}


def _kv(d: dict) -> str:
    def fmt(v):
        return f"{v:.17g}" if isinstance(v, float) else str(v)
    return "".join(f"{k} = {fmt(v)}\n" for k, v in d.items())


def read_kv(path) -> dict:
    out = {}
    for ln in Path(path).read_text().splitlines():
        if "=" in ln:
            k, v = ln.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def solve(cfg: ExperimentConfig, mesh: Mesh | None = None) -> tuple[Mesh, MultiStart]:
    mesh = mesh or cfg.build_mesh()
    ms = multi_start(mesh, cfg.alpha, cfg.measure(mesh), cfg.init_shapes(), eps=cfg.eps,
                     max_outer=cfg.max_outer, workers=cfg.workers)
    return mesh, ms


def write_run(outdir, cfg: ExperimentConfig, mesh: Mesh, ms: MultiStart) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    best = ms.best
    last = best.trace[-1]
    cfg.save(out / ARTIFACT_FILES["config"])
    io.save_mesh(mesh, out / ARTIFACT_FILES["mesh"])
    io.save_field(best.final_field, out / ARTIFACT_FILES["field"])
    io.save_config(best.final_config, out / ARTIFACT_FILES["clips"])
    (out / ARTIFACT_FILES["trace"]).write_text(io.trace_to_csv(best.trace))
    runs = ["init,lambda,n_outer,status"]
    for init, r in zip(cfg.init_shapes(), ms.runs):
        runs.append(f"{init.label()},{r.lam:.17g},{r.n_outer},{r.status}" if r is not None
                    else f"{init.label()},nan,0,failed")
    (out / ARTIFACT_FILES["runs"]).write_text("\n".join(runs) + "\n")
    summary = {"lambda": last.lam, "t": last.t, "area_err": last.area_err,
               "n_outer": best.n_outer, "status": best.status, "init": best.init,
               "alpha": cfg.alpha, "A": best.A, "omega": mesh.area, "eps": cfg.eps,
               "area_tol": best.area_tol, "runs": sum(r is not None for r in ms.runs),
               "failures": len(ms.failures), "ties": len(ms.ties),
               "mesh": mesh.tag.describe(), "nodes": mesh.n_nodes, "triangles": mesh.n_triangles}
    (out / ARTIFACT_FILES["summary"]).write_text(_kv(summary))
    return out


def export_vtk(rundir, path=None) -> Path:
    rd = Path(rundir)
    missing = [f for k, f in ARTIFACT_FILES.items()
               if k in ("mesh", "field", "clips") and not (rd / f).exists()]
    if missing:
        raise FileNotFoundError(f"run directory lacks {', '.join(missing)}")
    mesh = io.load_mesh(rd / ARTIFACT_FILES["mesh"])
    u = io.load_field(rd / ARTIFACT_FILES["field"])
    config = io.load_config(rd / ARTIFACT_FILES["clips"], mesh)
    target = Path(path) if path else rd / ARTIFACT_FILES["vtk"]
    io.write_vtk(target, mesh, u, config.fractions, title=f"membrane run {rd.name}")
    return target


# -- annulus ---------------------------------------------------------------------


@dataclass
class AnnulusReport:
    a: float
    delta: float
    alpha: float
    N: int
    sigma: float              # radial optimum (1D oracle)
    tau: float                # lowest mode-N eigenvalue over the radial optimum
    gap_bound: float          # N^2 / a^2
    gap_ok: bool
    sector_lambda: float      # first eigenvalue of the pi/N sector
    sector_below_sigma: bool
    symmetric_2d: float       # 2D eigenvalue of the radial configuration on the same mesh
    best_2d: float
    best_init: str
    asymmetry: float
    margin: float             # min(sigma, symmetric_2d) - best_2d
    breaking: bool
    runs: dict = field(default_factory=dict)

    def to_text(self) -> str:
        d = asdict(self)
        runs = d.pop("runs")
        return _kv(d) + "".join(f"run[{k}] = {v:.17g}\n" for k, v in runs.items())


def annulus_res(a: float, layers: int) -> int:
    """Angular segments giving roughly square cells at mid radius."""
    return max(64, 8 * math.ceil(2 * math.pi * (a + 0.5) * layers / 8))


def annulus_study(a: float, delta: float, alpha: float, layers: int = 8, res: int | None = None,
                  eps: float = 1e-9, inits: list | None = None, n_radial: int = 2000,
                  max_outer: int = 500, workers: int = 1) -> tuple[AnnulusReport, Mesh, MultiStart]:
    if not a > 0 or not 0 < delta < 1:
        raise ValueError("need a > 0 and delta in (0, 1)")
    gap = mode_gap_check(a, delta, alpha, n=n_radial)
    sec = sector_eigenvalue(a, gap.N, res=max(16, math.ceil(math.pi * (a + 0.5) * layers / gap.N)),
                            layers=layers)
    mesh = build_annulus_mesh(a, res or annulus_res(a, layers), layers)
    A = delta * mesh.area
    inits = inits or [InitShape("boundary_ring"), InitShape("sector", angle=0.0, outside=True),
                      InitShape("half_plane", angle=0.0), InitShape("random", seed=1)]
    ms = multi_start(mesh, alpha, A, inits, eps=eps, max_outer=max_outer, workers=workers)
    # radially symmetric competitor: the 1D optimum transplanted onto the mesh
    grid = RadialGrid(a, a + 1.0, n_radial)
    ropt = radial_optimize(grid, alpha, delta * grid.measure)
    rad = np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])
    prof = np.interp(rad, ropt.profile.r, ropt.profile.h)
    system = FEMSystem(mesh)
    sym_cfg = bathtub_config(mesh, prof, A)
    sym = smallest_eigpair(system.K, system.potential(sym_cfg), system.M, alpha, tol=EIG_TOL).lam
    best = ms.best
    ras = rasterize_config(mesh, best.final_config)
    asym = rotational_asymmetry(ras, 8)
    ref = min(gap.sigma, sym)
    margin = ref - best.lam
    runs = {init.label(): r.lam for init, r in zip(inits, ms.runs) if r is not None}
    rep = AnnulusReport(a, delta, alpha, gap.N, gap.sigma, gap.tau, gap.bound, gap.satisfied,
                        sec, sec < gap.sigma, sym, best.lam, best.init, asym, margin,
                        bool(margin > 3 * EIG_TOL * ref and asym > BREAK_ASYM), runs)
    return rep, mesh, ms


# -- dumbbell -------------------------------------------------------------------


def reflection_permutation(mesh: Mesh) -> np.ndarray:
    """perm[i] = index of the mirror image of node i under x1 -> -x1."""
    d, perm = cKDTree(mesh.nodes).query(mesh.nodes * np.array([-1.0, 1.0]))
    if d.max() > 1e-9:
        raise ValueError("mesh is not mirror symmetric")
    return perm


@dataclass
class DumbbellReport:
    h: float
    alpha: float
    A: float
    best_lambda: float
    best_init: str
    asymmetry: float
    mirror_gap: float          # max relative lambda difference across mirrored init pairs
    mirror_config_diff: float  # |D_left symmetric-difference flip(D_right)| / |D|, raster
    lobe: int
    lobe_fractions: dict
    contained: bool | None     # None when A <= pi (hypothesis not met)
    note: str
    sup_outside: float
    sup_ratio: float
    runs: dict = field(default_factory=dict)

    def to_text(self) -> str:
        d = asdict(self)
        runs, fr = d.pop("runs"), d.pop("lobe_fractions")
        return (_kv(d) + "".join(f"dc_share[{k}] = {v:.17g}\n" for k, v in fr.items())
                + "".join(f"run[{k}] = {v:.17g}\n" for k, v in runs.items()))


def dumbbell_study(h: float, alpha: float, A: float, res: int = 128, eps: float = 1e-10,
                   max_outer: int = 500, workers: int = 1) -> tuple[DumbbellReport, Mesh, MultiStart]:
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    mesh = build_dumbbell_mesh(h, res)
    pairs = [(InitShape("lobe", side=-1), InitShape("lobe", side=1)),
             (InitShape("half_plane", angle=0.0), InitShape("half_plane", angle=math.pi))]
    inits = [s for p in pairs for s in p] + [InitShape("boundary_ring")]
    ms = multi_start(mesh, alpha, A, inits, eps=eps, max_outer=max_outer, workers=workers)
    runs = ms.runs
    gaps = [abs(runs[2 * k].lam - runs[2 * k + 1].lam) / runs[2 * k].lam
            for k in range(len(pairs)) if runs[2 * k] is not None and runs[2 * k + 1] is not None]
    best = ms.best
    ras = rasterize_config(mesh, best.final_config)
    asym = asymmetry(ras, Isometry2D.flip_x1())
    diff = math.nan
    if runs[0] is not None and runs[1] is not None:
        r0 = rasterize_config(mesh, runs[0].final_config)
        r1 = rasterize_config(mesh, runs[1].final_config)
        diff = float(np.abs(r0.values - r1.transformed(Isometry2D.flip_x1())).sum()
                     / r0.values.sum())
    lr = lobe_report(mesh, best.final_config, best.final_field)
    if A > math.pi:
        contained, note = lr.contained, "A > pi: lobe containment checked"
    else:
        contained, note = None, "A <= pi: lobe containment not asserted"
    rep = DumbbellReport(h, alpha, A, best.lam, best.init, asym, max(gaps, default=math.nan),
                         diff, lr.lobe, lr.fractions, contained, note, lr.sup_outside,
                         lr.sup_ratio,
                         {i.label(): r.lam for i, r in zip(inits, runs) if r is not None})
    return rep, mesh, ms
