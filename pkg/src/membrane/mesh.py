"""Triangular meshes for the canonical domains and exact P1 sublevel geometry.

Meshes are plain value objects: a node array, a counterclockwise triangle
array and a boundary-node mask.  Builders return validated meshes; nothing
mutates a mesh after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path
from scipy.spatial import Delaunay


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class DomainTag:
    """Which analytic domain a mesh approximates (used for boundary snapping)."""

    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def describe(self) -> str:
        if not self.params:
            return self.kind
        args = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({args})"


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    tag: DomainTag = field(default_factory=DomainTag)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        bnd = np.ascontiguousarray(self.boundary, dtype=bool)
        for arr in (nodes, tris, bnd):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary", bnd)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def edges(self):
        """Unique edges, per-triangle edge ids and per-edge triangle counts.

        Local edge k of a triangle joins local vertices k and k+1 (mod 3).
        """
        t = self.triangles
        e = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        e = np.sort(e, axis=1)
        uniq, inv, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
        return uniq, inv.reshape(-1, 3), counts

    def boundary_edges(self) -> np.ndarray:
        uniq, _, counts = self.edges()
        return uniq[counts == 1]

    def mesh_width(self) -> float:
        uniq, _, _ = self.edges()
        d = self.nodes[uniq[:, 0]] - self.nodes[uniq[:, 1]]
        return float(np.sqrt((d ** 2).sum(axis=1)).max())

    def boundary_loops(self) -> list[list[int]]:
        """Closed boundary loops as node-index cycles."""
        bedges = self.boundary_edges()
        nbrs: dict[int, list[int]] = {}
        for i, j in bedges:
            nbrs.setdefault(int(i), []).append(int(j))
            nbrs.setdefault(int(j), []).append(int(i))
        if any(len(v) != 2 for v in nbrs.values()):
            raise MeshError("boundary is not a union of simple closed loops")
        seen: set[int] = set()
        loops = []
        for start in sorted(nbrs):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            prev, cur = start, nbrs[start][0]
            while cur != start:
                loop.append(cur)
                seen.add(cur)
                a, b = nbrs[cur]
                prev, cur = cur, (b if a == prev else a)
            loops.append(loop)
        return loops

    def validate(self) -> None:
        """Raise MeshError unless areas, conformity and boundary markers are sound."""
        if self.triangles.min() < 0 or self.triangles.max() >= self.n_nodes:
            raise MeshError("triangle references a missing node")
        sa = self.signed_areas
        if np.any(sa <= 0):
            raise MeshError(f"{int((sa <= 0).sum())} triangles with nonpositive signed area")
        _, _, counts = self.edges()
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        self.boundary_loops()
        bset = np.zeros(self.n_nodes, dtype=bool)
        bset[self.boundary_edges().ravel()] = True
        if not np.array_equal(bset, self.boundary):
            raise MeshError("boundary markers disagree with boundary edges")


# ---------------------------------------------------------------------------
# builders


def _finish(nodes, tris, tag, boundary=None) -> Mesh:
    nodes = np.asarray(nodes, dtype=float)
    tris = np.asarray(tris, dtype=np.int64)
    p = nodes[tris]
    sa = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    flip = sa < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    if boundary is None:
        tmp = Mesh(nodes, tris, np.zeros(len(nodes), dtype=bool), tag)
        boundary = np.zeros(len(nodes), dtype=bool)
        boundary[tmp.boundary_edges().ravel()] = True
    mesh = Mesh(nodes, tris, boundary, tag)
    mesh.validate()
    return mesh


def _structured_quads(ni: int, nj: int, index) -> np.ndarray:
    """Split an ni x nj grid of cells into triangles with alternating diagonals."""
    tris = []
    for i in range(ni):
        for j in range(nj):
            a, b = index(i, j), index(i + 1, j)
            c, d = index(i + 1, j + 1), index(i, j + 1)
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return np.array(tris, dtype=np.int64)


def build_rectangle_mesh(width: float, height: float, n: int) -> Mesh:
    """Structured mesh of [0, width] x [0, height] with n cells per side."""
    if width <= 0 or height <= 0:
        raise MeshError("rectangle dimensions must be positive")
    if n < 1:
        raise MeshError("need at least one subdivision")
    xs = np.linspace(0.0, width, n + 1)
    ys = np.linspace(0.0, height, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    tris = _structured_quads(n, n, lambda i, j: i * (n + 1) + j)
    tag = DomainTag("rectangle", {"width": width, "height": height})
    return _finish(nodes, tris, tag)


def _polar_nodes(r_in, r_out, thetas, layers):
    rs = np.linspace(r_in, r_out, layers + 1)
    R, T = np.meshgrid(rs, thetas, indexing="ij")
    return np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])


def build_annulus_mesh(a: float, res: int, layers: int, width: float = 1.0) -> Mesh:
    """Structured polar mesh of {a < |x| < a + width}."""
    if a <= 0 or width <= 0:
        raise MeshError("annulus radii must be positive")
    if res < 16 or layers < 2:
        raise MeshError("annulus needs res >= 16 and layers >= 2")
    thetas = 2 * np.pi * np.arange(res) / res
    nodes = _polar_nodes(a, a + width, thetas, layers)
    tris = _structured_quads(layers, res, lambda i, j: i * res + (j % res))
    tag = DomainTag("annulus", {"a": a, "width": width})
    return _finish(nodes, tris, tag)


def build_sector_mesh(a: float, theta_span: float, n_theta: int, layers: int,
                      width: float = 1.0) -> Mesh:
    """Structured mesh of {a < r < a + width, 0 < theta < theta_span}."""
    if a <= 0 or not (0 < theta_span < 2 * np.pi):
        raise MeshError("invalid sector parameters")
    if n_theta < 1 or layers < 1:
        raise MeshError("sector needs at least one cell in each direction")
    thetas = np.linspace(0.0, theta_span, n_theta + 1)
    nodes = _polar_nodes(a, a + width, thetas, layers)
    tris = _structured_quads(layers, n_theta, lambda i, j: i * (n_theta + 1) + j)
    tag = DomainTag("sector", {"a": a, "width": width, "span": theta_span})
    return _finish(nodes, tris, tag)


def _segment_distance(pts: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest of the given segments."""
    out = np.full(len(pts), np.inf)
    d = seg_b - seg_a
    dd = np.maximum((d ** 2).sum(axis=1), 1e-300)
    for start in range(0, len(pts), 2048):
        p = pts[start:start + 2048, None, :]
        s = np.clip(((p - seg_a) * d).sum(axis=2) / dd, 0.0, 1.0)
        proj = seg_a + s[..., None] * d
        out[start:start + 2048] = np.sqrt(((p - proj) ** 2).sum(axis=2)).min(axis=1)
    return out


def _hex_lattice(xmin, xmax, ymin, ymax, spacing, origin=(0.0, 0.0)):
    dy = spacing * math.sqrt(3) / 2
    j0 = math.floor((ymin - origin[1]) / dy) - 1
    j1 = math.ceil((ymax - origin[1]) / dy) + 1
    i0 = math.floor((xmin - origin[0]) / spacing) - 1
    i1 = math.ceil((xmax - origin[0]) / spacing) + 1
    J, I = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1), indexing="ij")
    x = origin[0] + (I + 0.5 * (J % 2)) * spacing
    y = origin[1] + J * dy
    return np.column_stack([x.ravel(), y.ravel()])


def _fill_polygon(polygon: np.ndarray, spacing: float, origin=(0.0, 0.0),
                  smooth: int = 3):
    """Delaunay triangulation of a simple polygon plus interior lattice points.

    Every polygon edge must survive as a mesh edge; this is checked rather
    than assumed, so non-convex inputs fail loudly instead of silently
    producing a non-conforming mesh.
    """
    nb = len(polygon)
    seg_a, seg_b = polygon, np.roll(polygon, -1, axis=0)
    path = Path(np.vstack([polygon, polygon[:1]]), closed=True)
    lo, hi = polygon.min(axis=0), polygon.max(axis=0)
    lat = _hex_lattice(lo[0], hi[0], lo[1], hi[1], spacing, origin)
    lat = lat[path.contains_points(lat)]
    lat = lat[_segment_distance(lat, seg_a, seg_b) > 0.6 * spacing]
    pts = np.vstack([polygon, lat])

    def triangulate(points):
        tri = Delaunay(points).simplices
        cent = points[tri].mean(axis=1)
        return tri[path.contains_points(cent)]

    tris = triangulate(pts)
    for _ in range(smooth):
        if len(lat) == 0:
            break
        # Laplacian smoothing of lattice nodes, then retriangulate
        e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        e = np.vstack([e, e[:, ::-1]])
        acc = np.zeros_like(pts)
        cnt = np.zeros(len(pts))
        np.add.at(acc, e[:, 0], pts[e[:, 1]])
        np.add.at(cnt, e[:, 0], 1.0)
        new = pts.copy()
        new[nb:] = acc[nb:] / cnt[nb:, None]
        inside = path.contains_points(new[nb:])
        far = _segment_distance(new[nb:], seg_a, seg_b) > 0.3 * spacing
        keep = inside & far
        new[nb:][~keep] = pts[nb:][~keep]
        pts = new
        tris = triangulate(pts)

    edges = {tuple(sorted(e)) for t in tris for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
    missing = [k for k in range(nb) if tuple(sorted((k, (k + 1) % nb))) not in edges]
    if missing:
        raise MeshError(f"{len(missing)} boundary segments lost in triangulation; refine resolution")
    return pts, tris


def build_ellipse_mesh(a: float, b: float, res: int) -> Mesh:
    """Mesh of the polygon with `res` vertices inscribed in x^2/a^2 + y^2/b^2 = 1."""
    if a <= 0 or b <= 0:
        raise MeshError("semiaxes must be positive")
    if res < 8:
        raise MeshError("res must be at least 8")
    th = 2 * np.pi * np.arange(res) / res
    poly = np.column_stack([a * np.cos(th), b * np.sin(th)])
    spacing = float(np.sqrt(((poly - np.roll(poly, -1, axis=0)) ** 2).sum(axis=1)).mean())
    pts, tris = _fill_polygon(poly, spacing)
    bnd = np.zeros(len(pts), dtype=bool)
    bnd[:res] = True
    return _finish(pts, tris, DomainTag("ellipse", {"a": a, "b": b}), boundary=bnd)


def dumbbell_area(h: float) -> float:
    """Exact area of B1(-2,0) u (-2,2)x(-h,h) u B1(2,0)."""
    overlap = h * math.sqrt(1 - h * h) + math.asin(h)
    return 2 * math.pi + 8 * h - 2 * overlap


def build_dumbbell_mesh(h: float, res: int = 128) -> Mesh:
    """Mirror-symmetric mesh of the dumbbell with handle half-width h.

    `res` is the number of boundary segments a full lobe circle would get.
    The left half (x <= 0) is triangulated and reflected, so the node set is
    invariant under x -> -x.
    """
    if not (0 < h < 1):
        raise MeshError("handle half-width must lie in (0, 1)")
    if res < 16:
        raise MeshError("res must be at least 16")
    s = 2 * np.pi / res
    sh = min(s, h / 2)
    phi_h = math.asin(h)
    xj = -2 + math.cos(phi_h)

    n_arc = max(8, math.ceil((2 * np.pi - 2 * phi_h) / s))
    phi = phi_h + (2 * np.pi - 2 * phi_h) * np.arange(n_arc + 1) / n_arc
    arc = np.column_stack([-2 + np.cos(phi), np.sin(phi)])
    arc[0] = (xj, h)
    arc[-1] = (xj, -h)
    n_line = max(1, math.ceil(-xj / sh))
    xs = xj + (0.0 - xj) * np.arange(1, n_line + 1) / n_line
    bottom = np.column_stack([xs, np.full(n_line, -h)])
    bottom[-1, 0] = 0.0
    n_cut = max(2, math.ceil(2 * h / sh))
    ys = -h + 2 * h * np.arange(1, n_cut + 1) / n_cut
    cut = np.column_stack([np.zeros(n_cut), ys])
    cut[-1, 1] = h
    top = np.column_stack([xs[::-1][1:], np.full(n_line - 1, h)])
    poly = np.vstack([arc, bottom, cut, top])
    n_poly = len(poly)

    pts, tris = _fill_polygon(poly, s, origin=(-2.0, 0.0))
    # boundary of the full domain: the left polygon minus the interior of the cut
    on_cut = np.isclose(pts[:, 0], 0.0, atol=0.0) & (np.abs(pts[:, 1]) < h)
    bnd_left = np.zeros(len(pts), dtype=bool)
    bnd_left[:n_poly] = True
    bnd_left &= ~on_cut
    pts[np.abs(pts[:, 0]) < 1e-14, 0] = 0.0

    mirror = pts[:, 0] < 0.0
    n_left = len(pts)
    ref_index = np.arange(n_left)
    ref_index[mirror] = n_left + np.arange(mirror.sum())
    ref_pts = pts[mirror] * np.array([-1.0, 1.0])
    nodes = np.vstack([pts, ref_pts])
    bnd = np.concatenate([bnd_left, bnd_left[mirror]])
    tris_r = ref_index[tris][:, [0, 2, 1]]
    all_tris = np.vstack([tris, tris_r])
    return _finish(nodes, all_tris, DomainTag("dumbbell", {"h": h}), boundary=bnd)


# ---------------------------------------------------------------------------
# refinement


def _snap(points: np.ndarray, tag: DomainTag) -> np.ndarray:
    p = points.copy()
    if tag.kind == "ellipse":
        a, b = tag.params["a"], tag.params["b"]
        scale = np.sqrt((p[:, 0] / a) ** 2 + (p[:, 1] / b) ** 2)
        p /= scale[:, None]
    elif tag.kind == "annulus":
        a, w = tag.params["a"], tag.params.get("width", 1.0)
        r = np.hypot(p[:, 0], p[:, 1])
        target = np.where(np.abs(r - a) < np.abs(r - a - w), a, a + w)
        p *= (target / r)[:, None]
    elif tag.kind == "dumbbell":
        h = tag.params["h"]
        xj = 2 - math.sqrt(1 - h * h)
        handle = (np.abs(np.abs(p[:, 1]) - h) < 1e-12) & (np.abs(p[:, 0]) <= xj + 1e-12)
        cx = np.where(p[:, 0] < 0, -2.0, 2.0)
        q = p[:, 0] - cx
        r = np.hypot(q, p[:, 1])
        lobe = ~handle
        p[lobe, 0] = cx[lobe] + q[lobe] / r[lobe]
        p[lobe, 1] = p[lobe, 1] / r[lobe]
    return p


def refine(mesh: Mesh, snap: bool = True) -> Mesh:
    """Split every triangle into four by its edge midpoints.

    With snap=True, new boundary nodes of tagged curved domains are moved
    onto the exact boundary curve.
    """
    uniq, tri_edges, counts = mesh.edges()
    n = mesh.n_nodes
    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    on_bnd = counts == 1
    if snap and mesh.tag.kind in ("ellipse", "annulus", "dumbbell"):
        mids[on_bnd] = _snap(mids[on_bnd], mesh.tag)
    nodes = np.vstack([mesh.nodes, mids])
    bnd = np.concatenate([mesh.boundary, on_bnd])
    t = mesh.triangles
    m01, m12, m20 = (tri_edges[:, k] + n for k in range(3))
    tris = np.vstack([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([t[:, 1], m12, m01]),
        np.column_stack([t[:, 2], m20, m12]),
        np.column_stack([m01, m12, m20]),
    ])
    return _finish(nodes, tris, mesh.tag, boundary=bnd)


def refine_times(mesh: Mesh, times: int, snap: bool = True) -> Mesh:
    for _ in range(times):
        mesh = refine(mesh, snap=snap)
    return mesh


def build_domain(kind: str, **params) -> Mesh:
    """Dispatch to a builder by domain name (used by configs and the CLI)."""
    refinements = int(params.pop("refinements", 0))
    if kind == "rectangle":
        mesh = build_rectangle_mesh(params["width"], params["height"], int(params["n"]))
    elif kind == "ellipse":
        mesh = build_ellipse_mesh(params["a"], params["b"], int(params["res"]))
    elif kind == "annulus":
        mesh = build_annulus_mesh(params["a"], int(params["res"]), int(params["layers"]))
    elif kind == "dumbbell":
        mesh = build_dumbbell_mesh(params["h"], int(params.get("res", 128)))
    else:
        raise MeshError(f"unknown domain kind {kind!r}")
    return refine_times(mesh, refinements)
