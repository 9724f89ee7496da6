"""Exact geometry of {u <= t} for piecewise-linear u.

A configuration stores, per triangle, a linear function (its three vertex
values) and a threshold; the triangle's part of D is the half-plane clip
{f_T <= t_T}.  For sublevel sets of a nodal field every triangle shares the
field and threshold; plateau fills replace a few triangles' functions by
auxiliary ones.  Clip polygons are kept in barycentric coordinates of their
triangle, so containment in the triangle holds by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

SUBLEVEL = "sublevel-of-field"
EXPLICIT = "explicit-elements"

_CORNERS = np.eye(3)


@dataclass(frozen=True)
class ClipRegion:
    triangle_id: int
    polygon: np.ndarray  # (k, 2) cartesian vertices, k <= 5
    area: float


def clip_polygons(poly: np.ndarray, g: np.ndarray, t: np.ndarray):
    """Clip padded convex polygons by {g <= t} (vectorised Sutherland-Hodgman).

    poly: (T, K, 3) barycentric vertices, short polygons padded by repeating
    their last vertex; g: (T, 3) linear-function values at the triangle
    corners; t: (T,) thresholds.  Returns (T, K + 1, 3) padded polygons.
    """
    T, K, _ = poly.shape
    gv = np.einsum("tkc,tc->tk", poly, g)
    inside = gv <= t[:, None]
    nxt = np.roll(poly, -1, axis=1)
    gn = np.roll(gv, -1, axis=1)
    cross = inside != np.roll(inside, -1, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(cross, (t[:, None] - gv) / (gn - gv), 0.0)
    s = np.clip(s, 0.0, 1.0)
    inter = poly + s[..., None] * (nxt - poly)
    cand = np.stack([poly, inter], axis=2).reshape(T, 2 * K, 3)
    valid = np.stack([inside, cross], axis=2).reshape(T, 2 * K)
    order = np.argsort(~valid, axis=1, kind="stable")
    cand = np.take_along_axis(cand, order[..., None], axis=1)
    count = valid.sum(axis=1)
    slot = np.arange(2 * K)[None, :]
    last = np.clip(count - 1, 0, None)
    pad = slot >= count[:, None]
    fill = cand[np.arange(T), last]
    cand = np.where(pad[..., None], fill[:, None, :], cand)
    cand[count == 0] = 0.0
    # a half-plane clip adds at most one vertex to a convex polygon
    return cand[:, : K + 1], count


def polygon_fraction(poly: np.ndarray) -> np.ndarray:
    """Area of barycentric polygons as a fraction of their triangle's area."""
    x, y = poly[..., 1], poly[..., 2]
    xs, ys = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
    return np.abs((x * ys - xs * y).sum(axis=1))


def sublevel_fraction(values: np.ndarray, t) -> np.ndarray:
    """Closed-form area fraction of {linear interpolant <= t} per triangle.

    values: (T, 3) vertex values.  Uses the sorted-value formula with the
    closed convention; equal values are covered by the case boundaries.
    """
    v = np.sort(values, axis=1)
    u1, u2, u3 = v[:, 0], v[:, 1], v[:, 2]
    t = np.broadcast_to(np.asarray(t, dtype=float), u1.shape)
    f = np.zeros_like(u1)
    low = (t >= u1) & (t < u2)
    high = (t >= u2) & (t < u3)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(low, (t - u1) ** 2 / ((u2 - u1) * (u3 - u1)), f)
        f = np.where(high, 1.0 - (u3 - t) ** 2 / ((u3 - u1) * (u3 - u2)), f)
    return np.where(t >= u3, 1.0, f)


def clip_triangle_sublevel(v1: float, v2: float, v3: float, t: float,
                           tri: np.ndarray, triangle_id: int = 0) -> ClipRegion:
    """Exact clip of one triangle (3x2 vertex array) to {interpolant <= t}."""
    vals = np.array([v1, v2, v3], dtype=float)
    if np.isnan(vals).any() or np.isnan(t):
        raise ValueError("NaN in clip input")
    tri = np.asarray(tri, dtype=float)
    poly, count = clip_polygons(_CORNERS[None].copy(), vals[None], np.array([t], float))
    k = int(count[0])
    pts = poly[0, :k] @ tri
    if k:
        keep = np.ones(k, dtype=bool)
        keep[1:] = np.any(np.abs(np.diff(pts, axis=0)) > 0, axis=1)
        if k > 1 and np.all(pts[-1] == pts[0]):
            keep[-1] = False
        pts = pts[keep]
    d1, d2 = tri[1] - tri[0], tri[2] - tri[0]
    tri_area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    area = float(polygon_fraction(poly[:, :4])[0]) * tri_area if k else 0.0
    return ClipRegion(triangle_id, pts, area)


@dataclass(frozen=True, eq=False)
class Configuration:
    """A set D given by exact per-triangle clips."""

    values: np.ndarray      # (T, 3) per-triangle linear function at the corners
    thresholds: np.ndarray  # (T,)
    poly: np.ndarray        # (T, 4, 3) barycentric clip polygons (padded)
    fractions: np.ndarray   # (T,) clip area / triangle area
    areas: np.ndarray       # (T,) clip areas
    threshold: float
    source: str = SUBLEVEL
    plateau: bool = False

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def clip(self, mesh: Mesh, i: int) -> ClipRegion:
        return clip_triangle_sublevel(*self.values[i], self.thresholds[i],
                                      mesh.nodes[mesh.triangles[i]], triangle_id=i)

    def clips(self, mesh: Mesh):
        return [self.clip(mesh, i) for i in range(mesh.n_triangles)]


def make_configuration(mesh: Mesh, values: np.ndarray, thresholds, threshold: float,
                       source: str = SUBLEVEL, plateau: bool = False) -> Configuration:
    T = mesh.n_triangles
    values = np.asarray(values, dtype=float).reshape(T, 3)
    thr = np.broadcast_to(np.asarray(thresholds, dtype=float), (T,)).copy()
    start = np.broadcast_to(_CORNERS, (T, 3, 3)).copy()
    poly, _ = clip_polygons(start, values, thr)
    frac = np.clip(polygon_fraction(poly), 0.0, 1.0)
    return Configuration(values, thr, poly, frac, frac * mesh.areas, float(threshold),
                         source, plateau)


def sublevel_configuration(mesh: Mesh, field: np.ndarray, t: float) -> Configuration:
    """Exact configuration {field <= t}."""
    field = np.asarray(field, dtype=float)
    return make_configuration(mesh, field[mesh.triangles], t, t)


def full_configuration(mesh: Mesh) -> Configuration:
    return make_configuration(mesh, np.zeros((mesh.n_triangles, 3)), 0.0, 0.0, EXPLICIT)


def empty_configuration(mesh: Mesh) -> Configuration:
    return make_configuration(mesh, np.ones((mesh.n_triangles, 3)), 0.0, 0.0, EXPLICIT)


def element_configuration(mesh: Mesh, fractions: np.ndarray) -> Configuration:
    """Configuration filling each triangle to the given area fraction.

    Whole elements for fractions 0/1; a partial element is clipped by an
    auxiliary linear function with corner values (0, 1, 2).
    """
    fr = np.clip(np.asarray(fractions, dtype=float), 0.0, 1.0)
    values = np.tile([0.0, 1.0, 2.0], (mesh.n_triangles, 1))
    thr = np.where(fr <= 0.5, np.sqrt(2 * fr), 2.0 - np.sqrt(2 * (1 - fr)))
    thr = np.where(fr <= 0.0, -1.0, np.where(fr >= 1.0, 2.0, thr))
    return make_configuration(mesh, values, thr, 0.0, EXPLICIT)


class SublevelArea:
    """L(t) = |{field <= t}| with per-triangle values sorted once."""

    def __init__(self, mesh: Mesh, field: np.ndarray):
        field = np.asarray(field, dtype=float)
        if field.shape != (mesh.n_nodes,):
            raise ValueError("field must have one value per node")
        self.values = np.sort(field[mesh.triangles], axis=1)
        self.tri_areas = mesh.areas
        self.total = float(self.tri_areas.sum())

    def __call__(self, t: float) -> float:
        return float(np.dot(sublevel_fraction(self.values, t), self.tri_areas))


def sublevel_area(mesh: Mesh, field: np.ndarray, t: float) -> float:
    return SublevelArea(mesh, field)(t)


def intersection_area(mesh: Mesh, c1: Configuration, c2: Configuration) -> float:
    poly, _ = clip_polygons(c1.poly, c2.values, c2.thresholds)
    return float(np.dot(np.clip(polygon_fraction(poly), 0, 1), mesh.areas))


def symmetric_difference_area(mesh: Mesh, c1: Configuration, c2: Configuration) -> float:
    """|D1 symmetric-difference D2|, exact for half-plane clips of each triangle."""
    inter = intersection_area(mesh, c1, c2)
    return max(c1.total_area + c2.total_area - 2 * inter, 0.0)


def free_boundary_points(mesh: Mesh, config: Configuration) -> np.ndarray:
    """Cartesian points where the clip line crosses triangle edges (interior of D's boundary)."""
    v = config.values
    t = config.thresholds[:, None]
    pts = []
    for a, b in ((0, 1), (1, 2), (2, 0)):
        va, vb = v[:, a], v[:, b]
        cross = ((va <= t[:, 0]) != (vb <= t[:, 0])) & (va != vb)
        s = (t[cross, 0] - va[cross]) / (vb[cross] - va[cross])
        pa = mesh.nodes[mesh.triangles[cross, a]]
        pb = mesh.nodes[mesh.triangles[cross, b]]
        pts.append(pa + s[:, None] * (pb - pa))
    return np.vstack(pts) if pts else np.zeros((0, 2))
