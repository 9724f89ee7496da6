import math

import numpy as np
import pytest

from membrane.mesh import (MeshError, build_annulus_mesh, build_domain, build_dumbbell_mesh,
                           build_ellipse_mesh, build_rectangle_mesh, build_sector_mesh,
                           dumbbell_area, refine, refine_times)


def test_two_triangle_square():
    m = build_rectangle_mesh(1, 1, 1)
    assert (m.n_nodes, m.n_triangles) == (4, 2)
    assert m.area == pytest.approx(1.0, abs=1e-15)


def test_rectangle_counts_and_area():
    m = build_rectangle_mesh(1, 1, 4)
    assert (m.n_nodes, m.n_triangles) == (25, 32)
    assert build_rectangle_mesh(2, 1, 2).area == 2.0


@pytest.mark.parametrize("w,h", [(0, 1), (1, -1)])
def test_rectangle_rejects_bad_dims(w, h):
    with pytest.raises(MeshError):
        build_rectangle_mesh(w, h, 2)


def inscribed(res):
    return res / 2 * math.sin(2 * math.pi / res)


def test_ellipse_areas():
    # polygon area oracle: (res/2) sin(2 pi/res) for the unit circle, scaled by ab
    assert build_ellipse_mesh(1, 1, 8).area == pytest.approx(2 * math.sqrt(2), rel=1e-12)
    m = build_ellipse_mesh(1, 1, 64)
    assert m.area == pytest.approx(inscribed(64), rel=1e-12)
    assert abs(m.area - math.pi) / math.pi < 5e-3
    assert abs(build_ellipse_mesh(2, 1, 64).area - 2 * math.pi) / (2 * math.pi) < 5e-3


def test_ellipse_rejects_coarse():
    with pytest.raises(MeshError):
        build_ellipse_mesh(1, 1, 4)


def test_annulus():
    m = build_annulus_mesh(1, 64, 4)
    assert abs(m.area - 3 * math.pi) / (3 * math.pi) < 5e-3
    assert build_annulus_mesh(1, 16, 2).n_triangles == 64
    assert len(build_annulus_mesh(8, 256, 8).boundary_loops()) == 2
    with pytest.raises(MeshError):
        build_annulus_mesh(1, 8, 2)


def test_dumbbell_symmetric_and_area():
    m = build_dumbbell_mesh(0.1)
    mirrored = m.nodes * [-1, 1]
    key = lambda p: np.lexsort(np.round(p, 9).T)  # noqa: E731
    assert np.allclose(m.nodes[key(m.nodes)], mirrored[key(mirrored)], atol=1e-12)
    # 2 pi + 4h minus twice the thin circular segment cut off by the chord at half-width h
    h = 0.1
    c = math.sqrt(1 - h * h)
    segment = math.asin(h) - h * c
    approx = 2 * math.pi + 4 * h - 2 * segment
    assert abs(dumbbell_area(h) - approx) / approx < 1e-2
    assert abs(m.area - dumbbell_area(h)) / dumbbell_area(h) < 1e-2
    assert len(build_dumbbell_mesh(0.5).boundary_loops()) == 1
    with pytest.raises(MeshError):
        build_dumbbell_mesh(1.2)


def test_dumbbell_area_by_sampling(rng):
    # Monte-Carlo membership oracle for the exact curved domain
    h = 0.3
    pts = rng.uniform([-3, -1], [3, 1], size=(400_000, 2))
    inside = ((np.hypot(pts[:, 0] + 2, pts[:, 1]) < 1) | (np.hypot(pts[:, 0] - 2, pts[:, 1]) < 1)
              | ((np.abs(pts[:, 0]) < 2) & (np.abs(pts[:, 1]) < h)))
    est = inside.mean() * 12
    se = math.sqrt(inside.mean() * (1 - inside.mean()) / len(pts)) * 12
    assert abs(dumbbell_area(h) - est) < 4 * se


@pytest.mark.parametrize("mesh", [
    build_rectangle_mesh(1, 2, 5), build_ellipse_mesh(2, 1, 40), build_annulus_mesh(2, 32, 3),
    build_dumbbell_mesh(0.2, 64), build_sector_mesh(3, math.pi / 2, 12, 4)])
def test_builders_validate(mesh):
    mesh.validate()
    assert np.all(mesh.signed_areas > 0)
    uniq, _, counts = mesh.edges()
    assert set(np.unique(counts)) <= {1, 2}
    be = mesh.boundary_edges()
    assert set(np.unique(be)) == set(np.flatnonzero(mesh.boundary))


def test_refine_counts_and_area():
    m = build_rectangle_mesh(1, 1, 1)
    assert refine(m).n_triangles == 8
    assert refine(refine(m)).n_triangles == 32
    e = build_ellipse_mesh(1, 1, 32)
    assert refine(e, snap=False).area == pytest.approx(e.area, rel=1e-13)
    assert abs(refine(e).area - math.pi) < abs(e.area - math.pi)


def test_refine_snaps_to_circle():
    e = refine_times(build_ellipse_mesh(1, 1, 32), 2)
    r = np.hypot(*e.nodes[e.boundary].T)
    assert np.allclose(r, 1.0, atol=1e-13)
    assert e.area == pytest.approx(inscribed(128), rel=1e-12)


def test_build_domain_dispatch():
    m = build_domain("ellipse", a=1, b=1, res=16, refinements=1)
    assert m.n_triangles == 4 * build_ellipse_mesh(1, 1, 16).n_triangles
    with pytest.raises(MeshError):
        build_domain("torus")
