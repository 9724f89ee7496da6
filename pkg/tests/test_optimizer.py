import math

import numpy as np
import pytest

from membrane.fem import FEMSystem
from membrane.mesh import build_dumbbell_mesh, build_rectangle_mesh
from membrane.optimizer import (DESCENT_SLACK, InitShape, ThresholdError, bathtub_config,
                                default_inits, find_threshold, multi_start, optimize)
from membrane.radial import RadialGrid, radial_optimize
from membrane.shapes import connected_components
from membrane.sublevel import (SUBLEVEL, element_configuration, free_boundary_points,
                               symmetric_difference_area)


def energy(system, config, u):
    x = system.to_interior(u)
    return float(x @ system.potential(config) @ x)


def test_threshold_linear_field():
    m = build_rectangle_mesh(1, 1, 8)
    t, (down, up) = find_threshold(m, m.nodes[:, 0], 0.25)
    assert t == pytest.approx(0.25, abs=1e-10)
    assert down <= t <= up


def test_threshold_extremes(disk64):
    psi = FEMSystem(disk64).ground_state().full
    t, _ = find_threshold(disk64, psi, disk64.area)
    assert t == psi.max()
    t0, _ = find_threshold(disk64, psi, 0.0)
    assert abs(t0) < 1e-10 * psi.max()
    cfg = bathtub_config(disk64, psi, 0.0)
    assert cfg.total_area <= 1e-10 * disk64.area


def test_threshold_errors(disk64):
    f = disk64.nodes[:, 0]
    with pytest.raises(ThresholdError):
        find_threshold(disk64, f, 2 * disk64.area)
    with pytest.raises(ThresholdError):
        find_threshold(disk64, f, -1.0)
    bad = f.copy()
    bad[3] = np.nan
    with pytest.raises(ThresholdError):
        find_threshold(disk64, bad, 1.0)


def test_constant_field_fills_by_index():
    m = build_rectangle_mesh(1, 1, 4)
    c1 = bathtub_config(m, np.ones(m.n_nodes), 0.3)
    c2 = bathtub_config(m, np.ones(m.n_nodes), 0.3)
    assert c1.total_area == pytest.approx(0.3, abs=1e-12)
    assert c1.plateau and np.array_equal(c1.fractions, c2.fractions)
    full = np.flatnonzero(c1.fractions > 0)
    assert np.array_equal(full, np.arange(len(full)))


def test_bathtub_of_disk_ground_state_is_a_band(disk64):
    psi = FEMSystem(disk64).ground_state().full
    cfg = bathtub_config(disk64, psi, math.pi / 2)
    assert cfg.source == SUBLEVEL
    assert abs(cfg.total_area - math.pi / 2) <= 1e-10 * disk64.area
    d, dc = connected_components(disk64, cfg)
    assert len(d) == 1 and len(dc) == 1
    r = np.hypot(*free_boundary_points(disk64, cfg).T)
    assert r.std() < disk64.mesh_width()


def test_bathtub_beats_random_unions(disk64, rng):
    s = FEMSystem(disk64)
    psi = s.ground_state().full
    A = 0.4 * disk64.area
    best = energy(s, bathtub_config(disk64, psi, A), psi)
    areas = disk64.areas
    for _ in range(50):
        order = rng.permutation(disk64.n_triangles)
        fr = np.zeros(disk64.n_triangles)
        cum = np.cumsum(areas[order])
        k = np.searchsorted(cum, A)
        fr[order[:k]] = 1.0
        fr[order[k]] = (A - (cum[k - 1] if k else 0.0)) / areas[order[k]]
        other = element_configuration(disk64, fr)
        assert other.total_area == pytest.approx(A, rel=1e-12)
        assert best <= energy(s, other, psi) + 1e-14


def test_trivial_measures(disk64):
    mu = FEMSystem(disk64).ground_state().lam
    r0 = optimize(disk64, 10.0, 0.0)
    assert r0.n_outer == 1 and r0.converged
    assert r0.lam == pytest.approx(mu, rel=1e-12)
    r1 = optimize(disk64, 10.0, disk64.area)
    assert r1.lam == pytest.approx(mu + 10.0, rel=1e-12)


def test_argument_checks(disk64):
    with pytest.raises(ValueError):
        optimize(disk64, -1.0, 1.0)
    with pytest.raises(ValueError):
        optimize(disk64, 1.0, 1.0, eps=0)
    with pytest.raises(ThresholdError):
        optimize(disk64, 1.0, 10.0)


@pytest.mark.parametrize("init", ["boundary_ring", "half_plane:0", "sector:1.5707963", "random:5"])
def test_trace_invariants(disk64, init):
    run = optimize(disk64, 8.0, 0.35 * disk64.area, InitShape.parse(init), eps=1e-10)
    lam = np.array([r.lam for r in run.trace])
    assert np.all(lam[1:] <= lam[:-1] + DESCENT_SLACK * np.abs(lam[1:]))
    assert all(r.area_err <= run.area_tol for r in run.trace[1:])
    for prev, row in zip(run.trace, run.trace[1:]):
        # R(u_{n-1}, D_n) sits between lambda_n and lambda_{n-1}
        assert row.coupling <= prev.lam * (1 + 1e-11)
        assert row.lam <= row.coupling * (1 + 1e-11)
    assert run.converged and run.final_config.source == SUBLEVEL
    again = bathtub_config(disk64, run.final_field, run.A)
    assert symmetric_difference_area(disk64, again, run.final_config) <= 10 * run.area_tol


def test_disk_shell(disk_fine, disk_shell):
    best = disk_shell.best
    h = disk_fine.mesh_width()
    r = np.hypot(*free_boundary_points(disk_fine, best.final_config).T)
    assert np.all(np.abs(r - math.sqrt(0.5)) <= 2 * h)
    sigma = radial_optimize(RadialGrid(0, 1, 2000), 10.0, math.pi / 2).sigma
    assert abs(best.lam - sigma) / sigma < 1e-2
    for run in disk_shell.runs:
        assert symmetric_difference_area(disk_fine, run.final_config, best.final_config) < 1e-3
    assert len(disk_shell.ties) == len(disk_shell.runs)


def test_multi_start_single_init(disk64):
    ms = multi_start(disk64, 5.0, 1.0, [InitShape("half_plane", angle=1.0)])
    assert ms.best is ms.runs[0] and ms.ties == [0]
    with pytest.raises(ValueError):
        multi_start(disk64, 5.0, 1.0, [])


def test_mirrored_lobe_inits_tie():
    m = build_dumbbell_mesh(0.1, 96)
    ms = multi_start(m, 5.0, 1.5 * math.pi, [InitShape("lobe", side=-1), InitShape("lobe", side=1)],
                     eps=1e-10)
    a, b = ms.runs
    assert abs(a.lam - b.lam) <= 1e-6 * a.lam
    xa = np.average(m.centroids[:, 0], weights=(1 - a.final_config.fractions) * m.areas)
    xb = np.average(m.centroids[:, 0], weights=(1 - b.final_config.fractions) * m.areas)
    assert xa < -1 and xb > 1


def test_deterministic_runs(disk64):
    a = optimize(disk64, 6.0, 1.2, InitShape("random", seed=11), eps=1e-9)
    b = optimize(disk64, 6.0, 1.2, InitShape("random", seed=11), eps=1e-9)
    assert [r.lam for r in a.trace] == [r.lam for r in b.trace]


def test_init_shapes_parse_and_defaults():
    for text in ["boundary_ring", "half_plane:3.5", "sector:1.5:out", "random:42", "lobe:+1"]:
        s = InitShape.parse(text)
        assert InitShape.parse(s.label()) == s
    with pytest.raises(ValueError):
        InitShape.parse("blob")
    d = default_inits(7)
    assert [s.kind for s in d].count("random") == 3 and len(d) == 9
    assert [s.seed for s in d] == [s.seed for s in default_inits(7)]
