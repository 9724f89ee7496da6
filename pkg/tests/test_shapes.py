import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membrane.fem import FEMSystem
from membrane.mesh import (build_annulus_mesh, build_dumbbell_mesh, build_ellipse_mesh,
                           build_rectangle_mesh)
from membrane.optimizer import bathtub_config, optimize
from membrane.shapes import (Isometry2D, Raster, ShapeError, asymmetry, column_monotonicity_violations,
                             connected_components, convexity_defect, lobe_report,
                             pendulum_positions, rasterize_config, rasterize_field, row_energy,
                             rotational_asymmetry, steiner_rearrange, symmetric_decreasing,
                             symmetric_increasing, tubular_check)
from membrane.sublevel import (element_configuration, full_configuration, empty_configuration,
                               sublevel_configuration)


@pytest.fixture(scope="module")
def disk():
    return build_ellipse_mesh(1, 1, 96)


def radial_band(mesh, r0):
    return sublevel_configuration(mesh, -np.hypot(*mesh.nodes.T), -r0)


def test_isometries(rng):
    p = rng.normal(size=(10, 2))
    for g in (Isometry2D.rotation(0.7, (1, 2)), Isometry2D.reflection(0.3, (0.5, -1)),
              Isometry2D.flip_x1()):
        Q = g.matrix
        assert np.allclose(Q @ Q.T, np.eye(2))
        assert np.allclose(g.inverse().apply(g.apply(p)), p)
    assert np.allclose(Isometry2D.flip_x1().apply([[1.0, 2.0]]), [[-1.0, 2.0]])


def test_raster_coverage_matches_area(disk):
    cfg = radial_band(disk, 0.6)
    r = rasterize_config(disk, cfg, cells=256)
    assert r.values.min() >= 0 and r.values.max() <= 1
    perimeter = 2 * math.pi * 1.6
    assert abs(r.total - cfg.total_area) <= perimeter * r.dx


def test_asymmetry_examples(disk):
    shell = rasterize_config(disk, radial_band(disk, 0.7))
    assert asymmetry(shell, Isometry2D.rotation(1.0)) < 0.01
    half = rasterize_config(disk, sublevel_configuration(disk, -disk.nodes[:, 0], 0.0))
    assert asymmetry(half, Isometry2D.rotation(math.pi)) == pytest.approx(2.0, abs=0.01)
    assert asymmetry(half, Isometry2D.reflection(0.0)) < 1e-12
    empty = rasterize_config(disk, empty_configuration(disk), cells=32)
    with pytest.raises(ShapeError):
        asymmetry(empty, Isometry2D.rotation(1.0))


def test_asymmetry_is_symmetric_in_the_pair(disk):
    half = sublevel_configuration(disk, disk.nodes[:, 0] + 0.3 * disk.nodes[:, 1], 0.2)
    r = rasterize_config(disk, half)
    g = Isometry2D.rotation(0.9)
    assert asymmetry(r, g) == pytest.approx(asymmetry(r, g.inverse()), abs=0.01)


def test_rotational_asymmetry():
    m = build_annulus_mesh(2.0, 128, 6)
    rad = rasterize_config(m, radial_band(m, 2.5))
    assert rotational_asymmetry(rad, 8) < 0.02
    th = np.arctan2(m.nodes[:, 1], m.nodes[:, 0])
    sector = rasterize_config(m, sublevel_configuration(m, np.abs(th), math.pi / 3))
    assert rotational_asymmetry(sector, 8) > 0.5
    assert rotational_asymmetry(sector, 1) == 0.0
    sq = build_rectangle_mesh(1, 1, 4)
    with pytest.raises(ShapeError):
        rotational_asymmetry(rasterize_config(sq, full_configuration(sq), cells=16), 4)


def test_tubular(disk):
    run = optimize(disk, 5.0, 0.5 * disk.area)
    rep = tubular_check(disk, run.final_config, 5.0, 20.0)
    assert rep.ok and rep.margin == pytest.approx(1.0) and rep.expected
    inner = sublevel_configuration(disk, np.hypot(*disk.nodes.T), 0.5)
    bad = tubular_check(disk, inner, 5.0, 20.0)
    assert not bad.ok and bad.margin == 0.0
    with pytest.raises(ShapeError):
        tubular_check(disk, empty_configuration(disk), 5.0, 20.0)


def test_components(disk):
    d, dc = connected_components(disk, radial_band(disk, 0.7))
    assert (len(d), len(dc)) == (1, 1)
    d, dc = connected_components(disk, full_configuration(disk))
    assert len(d) == 1 and dc == []
    x = disk.nodes[:, 0]
    two = sublevel_configuration(disk, -np.abs(x), -0.5)
    d, dc = connected_components(disk, two)
    assert (len(d), len(dc)) == (2, 1)
    with pytest.raises(ShapeError):
        connected_components(disk, two, 1.0)


def test_convexity_defect():
    m = build_ellipse_mesh(3, 1, 192)
    x, y = m.nodes.T
    disk = sublevel_configuration(m, np.hypot(x, y), 1.0)
    assert convexity_defect(rasterize_config(m, disk)) <= 0.01
    # two unit disks with a gap of 2: hull/area - 1 = (2*4 + pi - 2 pi) / (2 pi)
    two = sublevel_configuration(m, np.minimum(np.hypot(x - 2, y), np.hypot(x + 2, y)), 1.0)
    d = convexity_defect(rasterize_config(m, two))
    assert d >= 0.5
    assert d == pytest.approx((8 - math.pi) / (2 * math.pi), abs=0.05)
    with pytest.raises(ShapeError):
        convexity_defect(rasterize_config(m, empty_configuration(m), cells=32))


def test_pendulum_order():
    assert list(pendulum_positions(3)) == [1, 2, 0]
    assert list(pendulum_positions(4)) == [1, 2, 0, 3]
    assert list(symmetric_decreasing([3, 1, 2])) == [1, 3, 2]
    assert list(symmetric_increasing([3, 1, 2])) == [3, 1, 2]


def test_steiner_constant_and_errors():
    c = np.full((4, 5), 2.5)
    assert np.array_equal(steiner_rearrange(c), c)
    with pytest.raises(ShapeError):
        steiner_rearrange(np.ones(5))
    with pytest.raises(ShapeError):
        steiner_rearrange(c, axis=1)


def brute_min_energy(row):
    return min(row_energy(np.array(p)) for p in set(itertools.permutations(row)))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=6, max_size=6))
def test_steiner_energy_matches_permutation_minimum(row):
    row = np.array(row, float)
    assert row_energy(symmetric_decreasing(row)) == pytest.approx(brute_min_energy(row), abs=1e-12)


def test_steiner_random_raster(rng):
    f = rng.random((16, 16))
    g = steiner_rearrange(f)
    for a, b in zip(f, g):
        assert np.array_equal(np.sort(a), np.sort(b))
        assert np.sum(a ** 2) == pytest.approx(np.sum(b ** 2), rel=1e-14)
        assert row_energy(b) <= row_energy(a) + 1e-12
        w = rng.random(16)
        assert np.sum(symmetric_increasing(w) * b ** 2) <= np.sum(w * a ** 2) + 1e-12


def test_raster_text_round_trip(rng):
    r = Raster(0.5, -1.0, 0.25, 0.25, rng.random((3, 4)))
    back = Raster.from_text(r.to_text())
    assert np.array_equal(back.values, r.values) and (back.nx, back.ny) == (4, 3)
    assert r.to_text().splitlines()[0].split()[:2] == ["4", "3"]


def test_field_raster_and_monotonicity_proxy():
    m = build_rectangle_mesh(2, 1, 24)
    m_shift = m.nodes - [1.0, 0.5]
    from membrane.mesh import Mesh
    centred = Mesh(m_shift, m.triangles, m.boundary, m.tag)
    psi = FEMSystem(centred).ground_state().full
    r = rasterize_field(centred, psi, cells=64)
    assert np.nanmax(r.values) == pytest.approx(psi.max(), rel=0.05)
    # decreasing in |x1| away from the symmetry axis, up to interpolation noise
    assert column_monotonicity_violations(r, tol=1e-9) <= r.ny


def test_lobe_report():
    m = build_dumbbell_mesh(0.2, 64)
    x = m.nodes[:, 0]
    # D^c is a ball of area 2 < pi around the right lobe centre
    cfg = bathtub_config(m, -np.hypot(x - 2, m.nodes[:, 1]), m.area - 2.0)
    rep = lobe_report(m, cfg, np.exp(-np.hypot(x - 2, m.nodes[:, 1])))
    assert rep.lobe == 1 and rep.contained and rep.fractions["right"] == pytest.approx(1.0)
    assert 0 < rep.sup_ratio < 1
    with pytest.raises(ShapeError):
        lobe_report(build_ellipse_mesh(1, 1, 16), full_configuration(build_ellipse_mesh(1, 1, 16)),
                    np.zeros(1))
