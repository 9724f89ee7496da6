"""Command-line entry point: `membrane <subcommand> ...`.

Exit codes for `solve`: 0 converged, 2 stopped at max_outer, 1 error.
Artifacts go to --out, else the config's output_dir, else
$MEMBRANE_OUTPUT_ROOT/<run name> (default root: ./runs).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .atlas import Atlas, AtlasError, Protocol, audit_table
from .config import ConfigError, ExperimentConfig, output_root
from .experiments import annulus_study, dumbbell_study, export_vtk, solve, write_run
from .optimizer import multi_start
from .radial import RadialGrid, radial_optimize

log = logging.getLogger("membrane")

_CONFIG_FLAGS = [
    ("domain", str), ("a", float), ("b", float), ("width", float), ("height", float),
    ("h", float), ("n", int), ("res", int), ("layers", int), ("refinements", int),
    ("alpha", float), ("A", float), ("delta", float), ("eps", float), ("max_outer", int),
    ("inits", str), ("seed", int), ("workers", int), ("output_dir", str),
]


def _add_config_flags(p: argparse.ArgumentParser, skip=()) -> None:
    p.add_argument("--config", help="experiment config file (key = value)")
    for name, typ in _CONFIG_FLAGS:
        if name not in skip:
            p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None)


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for name, _ in _CONFIG_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "A", None) is not None:
        cfg.delta = None
    elif getattr(args, "delta", None) is not None:
        cfg.A = None
    return cfg.validate()


def _floats(text: str) -> list[float]:
    vals = [float(eval_number(t)) for t in text.split(",") if t.strip()]
    if not vals:
        raise ValueError("empty grid")
    return vals


def eval_number(text: str) -> float:
    """Parse a number, allowing the constant `pi` and a single factor (e.g. 1.5*pi, pi/2)."""
    t = text.strip().lower().replace("pi", repr(math.pi))
    if "*" in t:
        x, y = t.split("*", 1)
        return float(x) * float(y)
    if "/" in t:
        x, y = t.split("/", 1)
        return float(x) / float(y)
    return float(t)


# -- subcommands ----------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = _config(args)
    mesh, ms = solve(cfg)
    out = write_run(cfg.resolve_output(args.out), cfg, mesh, ms)
    if args.vtk:
        export_vtk(out)
    best = ms.best
    print(f"lambda = {best.lam:.12g}  t = {best.trace[-1].t:.6g}  n_outer = {best.n_outer}  "
          f"status = {best.status}  init = {best.init}")
    print(f"artifacts: {out}")
    return 0 if best.converged else 2


def _atlas_point(args):
    mesh, alpha, A, protocol = args
    ms = multi_start(mesh, alpha, A, protocol.inits, eps=protocol.eps, max_outer=protocol.max_outer)
    ok = [r for r in ms.runs if r is not None]
    return ms.best.lam, len(ok), all(r.converged for r in ok)


def cmd_atlas(args) -> int:
    cfg = _config(args)
    alphas = sorted(_floats(args.alpha_grid))
    mesh = cfg.build_mesh()
    if args.A_grid:
        As = sorted(_floats(args.A_grid))
    elif args.delta_grid:
        As = sorted(d * mesh.area for d in _floats(args.delta_grid))
    else:
        raise ValueError("give --A-grid or --delta-grid")
    protocol = Protocol(cfg.init_shapes(), cfg.eps, cfg.max_outer)
    points = [(mesh, a, A, protocol) for a in alphas for A in As]
    results = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futs = [pool.submit(_atlas_point, p) for p in points]
            for f in futs:
                try:
                    results.append(f.result())
                except Exception as exc:  # recorded per row, the grid continues
                    log.warning("atlas point failed: %s", exc)
                    results.append((math.nan, 0, False))
    else:
        for p in points:
            try:
                results.append(_atlas_point(p))
            except Exception as exc:
                log.warning("atlas point failed: %s", exc)
                results.append((math.nan, 0, False))
    rows = [(a, A, *res) for (_, a, A, _), res in zip(points, results)]
    lam = np.array([r[0] for r in results]).reshape(len(alphas), len(As))
    mu = Atlas(mesh).mu
    report = audit_table(alphas, As, lam, mu, mesh.area, slack=args.slack)
    text = io.atlas_to_csv(rows) + "\n# audit\n" + report.to_text()
    out = Path(args.out) if args.out else output_root() / f"atlas_{cfg.domain}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(io.atlas_to_csv(rows), end="")
    print(f"audit violations: {len(report.violations)}")
    for v in report.violations:
        print(f"  {v}")
    print(f"written: {out}")
    return 0


def cmd_abar(args) -> int:
    cfg = _config(args)
    mesh = cfg.build_mesh()
    at = Atlas(mesh, Protocol(cfg.init_shapes(), cfg.eps, cfg.max_outer))
    A = cfg.measure(mesh)
    ab = at.abar(A, tol=args.tol)
    print(f"A = {A:.12g}  abar = {ab:.12g}  Lambda(abar) - abar = {at.lam(ab, A) - ab:.3g}  "
          f"mu = {at.mu:.12g}")
    return 0


def cmd_annulus(args) -> int:
    rep, mesh, ms = annulus_study(args.a, args.delta, args.alpha, layers=args.layers,
                                  res=args.res, eps=args.eps, workers=args.workers)
    _report(rep, mesh, ms, args.out, f"annulus_a{args.a:g}_d{args.delta:g}_al{args.alpha:g}")
    return 0


def cmd_dumbbell(args) -> int:
    rep, mesh, ms = dumbbell_study(args.h, args.alpha, eval_number(args.A), res=args.res,
                                   eps=args.eps, workers=args.workers)
    _report(rep, mesh, ms, args.out, f"dumbbell_h{args.h:g}_al{args.alpha:g}")
    return 0


def _report(rep, mesh, ms, out, name) -> None:
    from .shapes import rasterize_config

    text = rep.to_text()
    print(text, end="")
    d = Path(out) if out else output_root() / name
    d.mkdir(parents=True, exist_ok=True)
    (d / "report.txt").write_text(text)
    io.save_mesh(mesh, d / "mesh.txt")
    io.save_field(ms.best.final_field, d / "field.csv")
    io.save_config(ms.best.final_config, d / "clips.txt")
    (d / "trace.csv").write_text(io.trace_to_csv(ms.best.trace))
    (d / "raster.txt").write_text(rasterize_config(mesh, ms.best.final_config, cells=256).to_text())
    print(f"written: {d}")


def cmd_export_vtk(args) -> int:
    print(f"written: {export_vtk(args.rundir, args.output)}")
    return 0


def cmd_radial(args) -> int:
    grid = RadialGrid(args.r_min, 1.0 if args.r_min == 0 else args.r_min + 1.0, args.n)
    A = eval_number(args.A) if args.A else args.delta * grid.measure
    opt = radial_optimize(grid, args.alpha, A, eps=args.eps)
    print(f"sigma = {opt.sigma:.12g}  converged = {opt.converged}")
    print(f"D = {opt.config.to_text().strip()}")
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "profile.csv").write_text(io.profile_to_csv(opt.profile.r, opt.profile.h))
        (d / "config.txt").write_text(opt.config.to_text())
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="membrane", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("solve", help="multi-start optimization, artifacts to a run directory")
    _add_config_flags(s)
    s.add_argument("--out")
    s.add_argument("--vtk", action="store_true", help="also write solution.vtk")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("atlas", help="Lambda on an (alpha, A) grid plus structural audit")
    _add_config_flags(s)
    s.add_argument("--alpha-grid", required=True, help="comma list")
    s.add_argument("--A-grid", dest="A_grid", help="comma list of absolute measures")
    s.add_argument("--delta-grid", help="comma list of fractions of |Omega|")
    s.add_argument("--slack", type=float, default=1e-3)
    s.add_argument("--out")
    s.set_defaults(func=cmd_atlas)

    s = sub.add_parser("abar", help="root of Lambda(alpha, A) = alpha")
    _add_config_flags(s)
    s.add_argument("--tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_abar)

    s = sub.add_parser("annulus-study", help="symmetry breaking on {a < |x| < a+1}")
    s.add_argument("--a", type=float, required=True)
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--alpha", type=float, default=10.0)
    s.add_argument("--layers", type=int, default=8)
    s.add_argument("--res", type=int)
    s.add_argument("--eps", type=float, default=1e-9)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_annulus)

    s = sub.add_parser("dumbbell-study", help="lobe selection on the dumbbell")
    s.add_argument("--h", type=float, default=0.1)
    s.add_argument("--alpha", type=float, default=5.0)
    s.add_argument("--A", default="1.5*pi", help="measure of D (accepts pi expressions)")
    s.add_argument("--res", type=int, default=128)
    s.add_argument("--eps", type=float, default=1e-10)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_dumbbell)

    s = sub.add_parser("export-vtk", help="legacy VTK file from a run directory")
    s.add_argument("rundir")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_export_vtk)

    s = sub.add_parser("radial", help="1D radial optimum on the disk (r-min 0) or an annulus")
    s.add_argument("--r-min", type=float, default=0.0)
    s.add_argument("--alpha", type=float, default=10.0)
    s.add_argument("--A", help="measure of D (accepts pi expressions)")
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--eps", type=float, default=1e-10)
    s.add_argument("--out")
    s.set_defaults(func=cmd_radial)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, AtlasError, ValueError, FileNotFoundError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
