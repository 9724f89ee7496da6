import math

import numpy as np
import pytest

from membrane import io
from membrane.config import ConfigError, ExperimentConfig, split_seed
from membrane.mesh import build_ellipse_mesh
from membrane.optimizer import optimize
from membrane.sublevel import sublevel_configuration


@pytest.fixture(scope="module")
def run():
    mesh = build_ellipse_mesh(1, 1, 24)
    return mesh, optimize(mesh, 4.0, 1.0)


def test_mesh_round_trip(tmp_path, run):
    mesh, _ = run
    io.save_mesh(mesh, tmp_path / "m.txt")
    back = io.load_mesh(tmp_path / "m.txt")
    assert np.array_equal(back.nodes, mesh.nodes)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary, mesh.boundary)
    with pytest.raises(io.FormatError):
        io.mesh_from_text("nodes 3 triangles 1\n0 0 1\n")


def test_field_and_clips_round_trip(tmp_path, run):
    mesh, r = run
    io.save_field(r.final_field, tmp_path / "u.csv")
    assert np.array_equal(io.load_field(tmp_path / "u.csv"), r.final_field)
    io.save_config(r.final_config, tmp_path / "c.txt")
    back = io.load_config(tmp_path / "c.txt", mesh)
    assert np.allclose(back.areas, r.final_config.areas, rtol=0, atol=1e-15)
    assert back.total_area == pytest.approx(r.final_config.total_area, rel=1e-14)
    with pytest.raises(io.FormatError):
        io.load_config(tmp_path / "c.txt", build_ellipse_mesh(1, 1, 16))


def test_trace_profile_atlas_round_trip(tmp_path, run):
    _, r = run
    (tmp_path / "t.csv").write_text(io.trace_to_csv(r.trace))
    rows = io.load_trace(tmp_path / "t.csv")
    assert [x["lambda"] for x in rows] == [t.lam for t in r.trace]
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == io.TRACE_HEADER
    rr, hh = np.linspace(0, 1, 5), np.linspace(1, 0, 5)
    (tmp_path / "p.csv").write_text(io.profile_to_csv(rr, hh))
    r2, h2 = io.load_profile(tmp_path / "p.csv")
    assert np.array_equal(r2, rr) and np.array_equal(h2, hh)
    table = [(0.0, 1.0, 5.78, 1, True), (2.0, 1.0, math.nan, 0, False)]
    (tmp_path / "a.csv").write_text(io.atlas_to_csv(table) + "\n# audit\nkind,x1,x2,value,margin\n")
    back = io.load_atlas(tmp_path / "a.csv")
    assert back[0] == table[0] and math.isnan(back[1][2]) and len(back) == 2


def test_vtk(tmp_path, run):
    mesh, r = run
    io.write_vtk(tmp_path / "s.vtk", mesh, r.final_field, r.final_config.fractions)
    text = (tmp_path / "s.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"POINTS {mesh.n_nodes} double" in text and f"CELLS {mesh.n_triangles}" in text
    back = io.read_vtk(tmp_path / "s.vtk")
    assert back["points"].shape == (mesh.n_nodes, 3) and np.all(back["points"][:, 2] == 0)
    assert np.array_equal(back["cells"], mesh.triangles)
    assert np.array_equal(back["u"], r.final_field)
    assert back["chiD"].min() >= 0 and back["chiD"].max() <= 1
    with pytest.raises(io.FormatError):
        io.vtk_text(mesh, r.final_field[:-1], r.final_config.fractions)


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(domain="ellipse", a=2.0, b=1.0, res=48, alpha=3.5, delta=0.25,
                           inits="boundary_ring,random,half_plane:0.5", seed=2 ** 63 + 5)
    cfg.validate().save(tmp_path / "c.txt")
    back = ExperimentConfig.load(tmp_path / "c.txt")
    assert back == cfg
    assert (tmp_path / "c.txt").read_text().startswith("schema_version = 1")


@pytest.mark.parametrize("text,line", [
    ("schema_version = 1\ndomain = disk\nalpha = -1\n", 3),
    ("schema_version = 1\n\nbogus = 3\n", 3),
    ("schema_version = 1\nalpha 3\n", 2),
    ("schema_version = 1\nres = many\n", 2),
    ("schema_version = 1\nA = 1\ndelta = 0.5\n", 2),
    ("schema_version = 1\ninits = sphere\n", 2),
    ("schema_version = 1\nalpha = 1\nalpha = 2\n", 3),
    ("domain = disk\n", 1),
])
def test_config_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as ei:
        ExperimentConfig.from_text(text)
    assert ei.value.line == line and str(ei.value).startswith(f"line {line}:")


def test_seed_splitting():
    assert split_seed(7, 3) == split_seed(7, 3)
    assert split_seed(7, 3) != split_seed(8, 3)
    assert split_seed(7, 2) == split_seed(7, 3)[:2] or len(set(split_seed(7, 3))) == 3
    cfg = ExperimentConfig(inits="random,random", seed=11)
    seeds = [s.seed for s in cfg.init_shapes()]
    assert seeds == split_seed(11, 2) and seeds[0] != seeds[1]
    assert [s.seed for s in cfg.init_shapes()] == seeds


def test_measure_and_domains():
    cfg = ExperimentConfig(domain="square", n=8, delta=0.25)
    mesh = cfg.build_mesh()
    assert cfg.measure(mesh) == pytest.approx(0.25)
    assert ExperimentConfig(domain="annulus", a=2.0).nominal_area() == pytest.approx(5 * math.pi)
    assert ExperimentConfig(domain="disk", res=32).build_mesh().tag.kind == "ellipse"
