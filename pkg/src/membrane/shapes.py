"""Symmetry, convexity, connectivity and boundary-strip diagnostics of configurations.

Set-valued metrics are measured on rasters over the mesh bounding box.  A
raster built from a configuration keeps a sampler that evaluates the exact
set at arbitrary points, so transformed copies g(D) are resampled exactly
rather than interpolated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from matplotlib.tri import Triangulation
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import ConvexHull

from .mesh import DomainTag, Mesh
from .sublevel import Configuration

DEFAULT_CELLS = 512
SUBSAMPLES = 2  # per cell and axis


class ShapeError(ValueError):
    pass


# -- point location -----------------------------------------------------------


class Locator:
    """Triangle lookup and barycentric coordinates for points in a mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self._tri = Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)
        self._finder = self._tri.get_trifinder()

    def locate(self, pts: np.ndarray):
        pts = np.asarray(pts, float).reshape(-1, 2)
        tid = np.asarray(self._finder(pts[:, 0], pts[:, 1]), dtype=np.int64)
        bary = np.zeros((len(pts), 3))
        ok = tid >= 0
        p = self.mesh.nodes[self.mesh.triangles[tid[ok]]]
        d1, d2, r = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], pts[ok] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        b1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        b2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        bary[ok] = np.column_stack([1 - b1 - b2, b1, b2])
        return tid, bary

    def inside(self, pts) -> np.ndarray:
        return self.locate(pts)[0] >= 0

    def indicator(self, config: Configuration) -> Callable[[np.ndarray], np.ndarray]:
        def f(pts):
            tid, bary = self.locate(pts)
            out = np.zeros(len(tid))
            ok = tid >= 0
            lin = np.einsum("ij,ij->i", bary[ok], config.values[tid[ok]])
            out[ok] = (lin <= config.thresholds[tid[ok]]).astype(float)
            return out
        return f

    def interpolant(self, values: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        values = np.asarray(values, float)

        def f(pts):
            tid, bary = self.locate(pts)
            out = np.full(len(tid), np.nan)
            ok = tid >= 0
            out[ok] = np.einsum("ij,ij->i", bary[ok], values[self.mesh.triangles[tid[ok]]])
            return out
        return f


# -- rasters -------------------------------------------------------------------


@dataclass
class Raster:
    x0: float
    y0: float
    dx: float
    dy: float
    values: np.ndarray                 # (ny, nx), row j is y = y0 + (j + 1/2) dy
    domain: np.ndarray | None = None   # (ny, nx) fraction of each cell inside the domain
    tag: DomainTag | None = None
    sampler: Callable | None = field(default=None, repr=False)
    subsamples: int = SUBSAMPLES

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def total(self) -> float:
        return float(np.nansum(self.values) * self.cell_area)

    def centers(self) -> np.ndarray:
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.dy
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def sample_points(self) -> np.ndarray:
        """s*s points per cell, ordered cell-major (ny*nx*s*s, 2)."""
        s = self.subsamples
        off = (np.arange(s) + 0.5) / s - 0.5
        ox, oy = np.meshgrid(off * self.dx, off * self.dy)
        c = self.centers()
        return (c[:, None, :] + np.column_stack([ox.ravel(), oy.ravel()])[None]).reshape(-1, 2)

    def cell_average(self, samples: np.ndarray) -> np.ndarray:
        s2 = self.subsamples ** 2
        return samples.reshape(self.ny * self.nx, s2).mean(axis=1).reshape(self.ny, self.nx)

    def lookup(self, pts: np.ndarray) -> np.ndarray:
        """Nearest-cell value at points; zero outside the raster."""
        i = np.floor((pts[:, 0] - self.x0) / self.dx).astype(np.int64)
        j = np.floor((pts[:, 1] - self.y0) / self.dy).astype(np.int64)
        ok = (i >= 0) & (i < self.nx) & (j >= 0) & (j < self.ny)
        out = np.zeros(len(pts))
        out[ok] = np.nan_to_num(self.values[j[ok], i[ok]])
        return out

    def transformed(self, g: "Isometry2D") -> np.ndarray:
        """Coverage of g(D) on this grid: D evaluated at preimages of the sample points."""
        pts = g.inverse().apply(self.sample_points())
        if self.sampler is not None:
            return self.cell_average(self.sampler(pts))
        return self.cell_average(self.lookup(pts))

    def complement(self) -> "Raster":
        if self.domain is None:
            raise ShapeError("complement needs the domain coverage")
        vals = np.clip(self.domain - self.values, 0.0, 1.0)
        samp = None
        if self.sampler is not None and getattr(self, "_inside", None) is not None:
            inside, d = self._inside, self.sampler
            samp = lambda p: inside(p) * (1.0 - d(p))  # noqa: E731
        out = Raster(self.x0, self.y0, self.dx, self.dy, vals, self.domain, self.tag, samp,
                     self.subsamples)
        return out

    def to_text(self) -> str:
        head = f"{self.nx} {self.ny} {self.x0:.17g} {self.y0:.17g} {self.dx:.17g} {self.dy:.17g}\n"
        body = "\n".join(" ".join(f"{v:.17g}" for v in row) for row in self.values)
        return head + body + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Raster":
        lines = text.strip().splitlines()
        h = lines[0].split()
        nx, ny = int(h[0]), int(h[1])
        x0, y0, dx, dy = map(float, h[2:6])
        vals = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
        if vals.shape != (ny, nx):
            raise ShapeError(f"raster body is {vals.shape}, header says {(ny, nx)}")
        return cls(x0, y0, dx, dy, vals)


def _grid(mesh: Mesh, cells: int):
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    span = hi - lo
    h = float(span.max()) / cells
    nx, ny = max(int(math.ceil(span[0] / h - 1e-9)), 1), max(int(math.ceil(span[1] / h - 1e-9)), 1)
    # centre the grid on the bounding box so symmetric domains give symmetric grids
    x0 = lo[0] + 0.5 * (span[0] - nx * h)
    y0 = lo[1] + 0.5 * (span[1] - ny * h)
    return x0, y0, h, nx, ny


def rasterize_config(mesh: Mesh, config: Configuration, cells: int = DEFAULT_CELLS,
                     subsamples: int = SUBSAMPLES, locator: Locator | None = None) -> Raster:
    """Cell coverage of D (in [0, 1]) by supersampling the exact set."""
    loc = locator or Locator(mesh)
    x0, y0, h, nx, ny = _grid(mesh, cells)
    r = Raster(x0, y0, h, h, np.zeros((ny, nx)), None, mesh.tag, loc.indicator(config), subsamples)
    pts = r.sample_points()
    inside = loc.inside(pts).astype(float)
    r.domain = r.cell_average(inside)
    r.values = r.cell_average(r.sampler(pts))
    r._inside = lambda p: loc.inside(p).astype(float)
    return r


def rasterize_field(mesh: Mesh, values: np.ndarray, cells: int = DEFAULT_CELLS,
                    locator: Locator | None = None) -> Raster:
    """Nodal field sampled at cell centres (NaN outside the mesh)."""
    loc = locator or Locator(mesh)
    x0, y0, h, nx, ny = _grid(mesh, cells)
    r = Raster(x0, y0, h, h, np.zeros((ny, nx)), None, mesh.tag, loc.interpolant(values), 1)
    vals = r.sampler(r.centers())
    r.values = vals.reshape(ny, nx)
    r.domain = np.isfinite(r.values).astype(float)
    return r


# -- isometries ----------------------------------------------------------------


@dataclass(frozen=True)
class Isometry2D:
    """x -> Q x + b with Q orthogonal."""

    kind: str
    point: tuple = (0.0, 0.0)
    angle: float = 0.0

    @classmethod
    def rotation(cls, angle: float, center=(0.0, 0.0)) -> "Isometry2D":
        return cls("rotation", tuple(map(float, center)), float(angle))

    @classmethod
    def reflection(cls, angle: float, point=(0.0, 0.0)) -> "Isometry2D":
        """Reflection across the line through point with direction angle."""
        return cls("reflection", tuple(map(float, point)), float(angle))

    @classmethod
    def flip_x1(cls) -> "Isometry2D":
        """x1 -> -x1 (mirror in the x2-axis)."""
        return cls.reflection(math.pi / 2)

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        if self.kind == "rotation":
            return np.array([[c, -s], [s, c]])
        if self.kind == "reflection":
            c2, s2 = math.cos(2 * self.angle), math.sin(2 * self.angle)
            return np.array([[c2, s2], [s2, -c2]])
        raise ShapeError(f"unknown isometry {self.kind!r}")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        p = np.asarray(self.point)
        return (np.asarray(pts, float) - p) @ self.matrix.T + p

    def inverse(self) -> "Isometry2D":
        if self.kind == "rotation":
            return Isometry2D.rotation(-self.angle, self.point)
        return self


def asymmetry(raster: Raster, g: Isometry2D) -> float:
    """|D symmetric-difference g(D)| / |D|, in [0, 2]."""
    area = float(np.sum(raster.values))
    if area <= 0:
        raise ShapeError("asymmetry of an empty set")
    return float(np.sum(np.abs(raster.values - raster.transformed(g)))) / area


def _rotation_center(tag: DomainTag | None):
    if tag is None:
        raise ShapeError("rotational asymmetry needs a tagged domain")
    if tag.kind == "annulus":
        return (0.0, 0.0)
    if tag.kind == "ellipse" and abs(tag.params["a"] - tag.params["b"]) < 1e-14:
        return (0.0, 0.0)
    raise ShapeError(f"domain {tag.kind!r} is not rotationally symmetric")


def rotational_asymmetry(raster: Raster, n_angles: int = 12) -> float:
    """Largest asymmetry over the rotations by 2 pi k / n_angles, k = 1..n_angles-1."""
    c = _rotation_center(raster.tag)
    if n_angles < 1:
        raise ShapeError("n_angles must be positive")
    return max((asymmetry(raster, Isometry2D.rotation(2 * math.pi * k / n_angles, c))
                for k in range(1, n_angles)), default=0.0)


# -- mesh-level diagnostics ----------------------------------------------------


@dataclass
class TubularReport:
    ok: bool
    margin: float        # min clip coverage over boundary-edge triangles
    n_strip: int
    expected: bool       # alpha < abar


def boundary_strip(mesh: Mesh) -> np.ndarray:
    """Triangles having at least one edge on the boundary."""
    uniq, tri_edges, counts = mesh.edges()
    return np.flatnonzero(np.any(counts[tri_edges] == 1, axis=1))


def tubular_check(mesh: Mesh, config: Configuration, alpha: float, abar: float) -> TubularReport:
    if config.total_area <= 0:
        raise ShapeError("tubular check needs A > 0")
    strip = boundary_strip(mesh)
    cov = config.fractions[strip]
    margin = float(cov.min())
    return TubularReport(bool(margin >= 1 - 1e-12), margin, len(strip), bool(alpha < abar))


def _adjacency(mesh: Mesh, keep: np.ndarray):
    uniq, tri_edges, counts = mesh.edges()
    owner = np.repeat(np.arange(mesh.n_triangles), 3)
    e = tri_edges.ravel()
    order = np.argsort(e, kind="stable")
    e, owner = e[order], owner[order]
    pair = np.flatnonzero(e[1:] == e[:-1])
    a, b = owner[pair], owner[pair + 1]
    sel = keep[a] & keep[b]
    n = mesh.n_triangles
    return coo_matrix((np.ones(sel.sum()), (a[sel], b[sel])), shape=(n, n))


def _components(mesh: Mesh, keep: np.ndarray) -> list[np.ndarray]:
    if not keep.any():
        return []
    _, labels = _cc(_adjacency(mesh, keep), directed=False)
    labs = labels[keep]
    ids = np.flatnonzero(keep)
    return [ids[labs == k] for k in np.unique(labs)]


def connected_components(mesh: Mesh, config: Configuration, threshold: float = 0.5):
    """Element components of D (coverage >= threshold) and of D^c (coverage <= 1 - threshold)."""
    if not 0 < threshold < 1:
        raise ShapeError("threshold must lie in (0, 1)")
    fr = config.fractions
    return _components(mesh, fr >= threshold), _components(mesh, fr <= 1 - threshold)


def convexity_defect(raster_c: Raster) -> float:
    """(|hull of covered cells| - |set|) / |set|, clipped at zero.

    The hull is taken over centres of cells covered at least half, which keeps
    the raster error of a convex set at or below zero.
    """
    area = float(np.sum(raster_c.values)) * raster_c.cell_area
    if area <= 0:
        raise ShapeError("convexity defect of an empty set")
    c = raster_c.centers()[raster_c.values.ravel() >= 0.5]
    if len(c) < 3:
        return 0.0
    try:
        hull = ConvexHull(c).volume
    except Exception:  # collinear centres
        return 0.0
    return max(hull - area, 0.0) / area


# -- Steiner rearrangement -------------------------------------------------------


def pendulum_positions(n: int) -> np.ndarray:
    """Cell receiving the k-th ranked value: centre (n-1)//2, then right, left, right, ..."""
    c = (n - 1) // 2
    pos = [c]
    step = 1
    while len(pos) < n:
        if c + step < n:
            pos.append(c + step)
        if len(pos) < n and c - step >= 0:
            pos.append(c - step)
        step += 1
    return np.array(pos, dtype=np.int64)


def symmetric_decreasing(row) -> np.ndarray:
    row = np.asarray(row, float)
    out = np.empty_like(row)
    out[pendulum_positions(len(row))] = np.sort(row, kind="stable")[::-1]
    return out


def symmetric_increasing(row) -> np.ndarray:
    row = np.asarray(row, float)
    out = np.empty_like(row)
    out[pendulum_positions(len(row))] = np.sort(row, kind="stable")
    return out


def steiner_rearrange(raster, axis: int = 0):
    """Row-wise symmetric-decreasing rearrangement along x1.

    Accepts a Raster (fully inside the domain) or a 2D array and returns the
    same kind.
    """
    if axis != 0:
        raise ShapeError("only rearrangement along x1 is supported")
    vals = raster.values if isinstance(raster, Raster) else np.asarray(raster, float)
    if vals.ndim != 2 or not np.all(np.isfinite(vals)):
        raise ShapeError("Steiner rearrangement needs a rectangular raster")
    if isinstance(raster, Raster) and raster.domain is not None and np.any(raster.domain < 1):
        raise ShapeError("Steiner rearrangement needs a rectangular raster")
    out = np.array([symmetric_decreasing(r) for r in vals])
    if isinstance(raster, Raster):
        return Raster(raster.x0, raster.y0, raster.dx, raster.dy, out, raster.domain, raster.tag)
    return out


def row_energy(row, padded: bool = True) -> float:
    """Sum of squared adjacent differences; padded rows vanish just outside both ends."""
    r = np.asarray(row, float)
    if padded:
        r = np.concatenate([[0.0], r, [0.0]])
    return float(np.sum(np.diff(r) ** 2))


def column_monotonicity_violations(raster: Raster, tol: float = 0.0) -> int:
    """Count of row neighbours (x1 >= 0 half) where a sampled field increases outward."""
    xs = raster.x0 + (np.arange(raster.nx) + 0.5) * raster.dx
    v = raster.values[:, xs >= 0]
    d = np.diff(v, axis=1)
    return int(np.sum(np.nan_to_num(d, nan=-1.0) > tol))


# -- dumbbell ------------------------------------------------------------------


@dataclass
class LobeReport:
    lobe: int                # -1 left, +1 right
    fractions: dict          # share of D^c area in left, handle, right
    contained: bool
    sup_outside: float       # max nodal field value outside the lobe
    sup_ratio: float         # sup_outside / max field


def lobe_report(mesh: Mesh, config: Configuration, values: np.ndarray) -> LobeReport:
    if mesh.tag.kind != "dumbbell":
        raise ShapeError("lobe report needs a dumbbell mesh")
    cx = mesh.centroids[:, 0]
    dc = (1.0 - config.fractions) * mesh.areas
    total = float(dc.sum())
    parts = {"left": float(dc[cx <= -1].sum()), "handle": float(dc[np.abs(cx) < 1].sum()),
             "right": float(dc[cx >= 1].sum())}
    if total > 0:
        parts = {k: v / total for k, v in parts.items()}
    lobe = -1 if parts["left"] >= parts["right"] else 1
    key = "left" if lobe < 0 else "right"
    outside = lobe * mesh.nodes[:, 0] < 1.0
    values = np.asarray(values, float)
    sup = float(values[outside].max()) if outside.any() else 0.0
    top = float(values.max())
    return LobeReport(lobe, parts, bool(parts[key] >= 1 - 1e-12), sup,
                      sup / top if top > 0 else 0.0)
