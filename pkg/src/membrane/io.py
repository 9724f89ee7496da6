"""Plain-text persistence: meshes, fields, configurations, traces, profiles, VTK."""
from __future__ import annotations

import csv
import io as _io
from pathlib import Path

import numpy as np

from .mesh import DomainTag, Mesh
from .sublevel import Configuration, make_configuration

FMT = "%.17g"


class FormatError(ValueError):
    pass


def _g(x) -> str:
    return FMT % x


# -- mesh -----------------------------------------------------------------------


def mesh_to_text(mesh: Mesh) -> str:
    out = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}"]
    out += [f"{_g(x)} {_g(y)} {int(b)}" for (x, y), b in zip(mesh.nodes, mesh.boundary)]
    out += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    return "\n".join(out) + "\n"


def mesh_from_text(text: str, tag: DomainTag | None = None) -> Mesh:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        head = lines[0].split()
        if head[0] != "nodes" or head[2] != "triangles":
            raise FormatError("mesh header must read 'nodes N triangles T'")
        n, t = int(head[1]), int(head[3])
        node_rows = np.array([ln.split() for ln in lines[1:1 + n]], dtype=float).reshape(n, 3)
        tris = np.array([ln.split() for ln in lines[1 + n:1 + n + t]], dtype=np.int64).reshape(t, 3)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed mesh file: {exc}") from exc
    if len(lines) != 1 + n + t:
        raise FormatError("mesh file length does not match its header")
    return Mesh(node_rows[:, :2].copy(), tris, node_rows[:, 2] != 0, tag or DomainTag("custom", {}))


def save_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(mesh_to_text(mesh))


def load_mesh(path, tag: DomainTag | None = None) -> Mesh:
    return mesh_from_text(Path(path).read_text(), tag)


# -- nodal field ------------------------------------------------------------------


def save_field(values: np.ndarray, path, name: str = "u") -> None:
    lines = [f"node,{name}"] + [f"{i},{_g(v)}" for i, v in enumerate(values)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 1 or rows[0][0] != "node":
        raise FormatError("field CSV must start with a 'node,<name>' header")
    idx = np.array([int(r[0]) for r in rows[1:]])
    if not np.array_equal(idx, np.arange(len(idx))):
        raise FormatError("field CSV node ids must be 0..N-1 in order")
    return np.array([float(r[1]) for r in rows[1:]])


# -- configuration clips ------------------------------------------------------------


def config_to_text(config: Configuration) -> str:
    """One line per triangle: the clipping linear function, its threshold and the clip area."""
    out = [f"threshold {_g(config.threshold)} source {config.source} plateau {int(config.plateau)}",
           "tri v0 v1 v2 cut fraction area"]
    for i, (v, c, f, a) in enumerate(zip(config.values, config.thresholds, config.fractions,
                                         config.areas)):
        out.append(f"{i} {_g(v[0])} {_g(v[1])} {_g(v[2])} {_g(c)} {_g(f)} {_g(a)}")
    return "\n".join(out) + "\n"


def config_from_text(text: str, mesh: Mesh) -> Configuration:
    lines = text.splitlines()
    try:
        h = lines[0].split()
        threshold, source, plateau = float(h[1]), h[3], bool(int(h[5]))
        rows = np.array([ln.split() for ln in lines[2:] if ln.strip()], dtype=float)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed clips file: {exc}") from exc
    if rows.shape != (mesh.n_triangles, 7):
        raise FormatError("clips file does not match the mesh")
    return make_configuration(mesh, rows[:, 1:4], rows[:, 4], threshold, source, plateau)


def save_config(config: Configuration, path) -> None:
    Path(path).write_text(config_to_text(config))


def load_config(path, mesh: Mesh) -> Configuration:
    return config_from_text(Path(path).read_text(), mesh)


# -- trace ----------------------------------------------------------------------------

TRACE_HEADER = "n,lambda,t,area_err,inner_iters"


def trace_to_csv(trace) -> str:
    rows = [TRACE_HEADER] + [f"{r.n},{_g(r.lam)},{_g(r.t)},{_g(r.area_err)},{r.inner_iters}"
                             for r in trace]
    return "\n".join(rows) + "\n"


def load_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if ",".join(reader.fieldnames or []) != TRACE_HEADER:
            raise FormatError(f"trace header must be {TRACE_HEADER}")
        return [{"n": int(r["n"]), "lambda": float(r["lambda"]), "t": float(r["t"]),
                 "area_err": float(r["area_err"]), "inner_iters": int(r["inner_iters"])}
                for r in reader]


# -- radial -----------------------------------------------------------------------------


def profile_to_csv(r: np.ndarray, h: np.ndarray) -> str:
    return "r,h\n" + "".join(f"{_g(a)},{_g(b)}\n" for a, b in zip(r, h))


def load_profile(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


# -- atlas ------------------------------------------------------------------------------

ATLAS_HEADER = "alpha,A,lambda,runs,converged"


def atlas_to_csv(rows) -> str:
    """rows: iterables (alpha, A, lambda, runs, converged); lambda may be NaN for failures."""
    buf = _io.StringIO()
    buf.write(ATLAS_HEADER + "\n")
    for a, A, lam, runs, conv in rows:
        buf.write(f"{_g(a)},{_g(A)},{_g(lam)},{int(runs)},{int(bool(conv))}\n")
    return buf.getvalue()


def load_atlas(path) -> list[tuple]:
    with open(path, newline="") as fh:
        text = fh.read().split("\n# audit", 1)[0]  # audit section follows the table
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ATLAS_HEADER:
        raise FormatError(f"atlas header must be {ATLAS_HEADER}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 5:
            raise FormatError(f"atlas row needs 5 fields: {ln!r}")
        out.append((float(parts[0]), float(parts[1]), float(parts[2]), int(parts[3]),
                    bool(int(parts[4]))))
    return out


# -- VTK --------------------------------------------------------------------------------


def vtk_text(mesh: Mesh, u: np.ndarray, chi: np.ndarray, title: str = "membrane") -> str:
    u = np.asarray(u, float)
    chi = np.asarray(chi, float)
    if u.shape != (mesh.n_nodes,) or chi.shape != (mesh.n_triangles,):
        raise FormatError("point/cell data do not match the mesh")
    n, t = mesh.n_nodes, mesh.n_triangles
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    out += [f"{_g(x)} {_g(y)} 0" for x, y in mesh.nodes]
    out.append(f"CELLS {t} {4 * t}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    out.append(f"CELL_TYPES {t}")
    out += ["5"] * t
    out += [f"POINT_DATA {n}", "SCALARS u double 1", "LOOKUP_TABLE default"]
    out += [_g(v) for v in u]
    out += [f"CELL_DATA {t}", "SCALARS chiD double 1", "LOOKUP_TABLE default"]
    out += [_g(v) for v in chi]
    return "\n".join(out) + "\n"


def write_vtk(path, mesh: Mesh, u, chi, title: str = "membrane") -> None:
    Path(path).write_text(vtk_text(mesh, u, chi, title))


def read_vtk(path) -> dict:
    """Minimal reader for the files written above (used for round-trip checks)."""
    tok = Path(path).read_text().split("\n")
    if tok[0].strip() != "# vtk DataFile Version 3.0":
        raise FormatError("not a legacy VTK file")
    out, i = {}, 4
    while i < len(tok):
        parts = tok[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            out["points"] = np.array([tok[i + 1 + k].split() for k in range(n)], dtype=float)
            i += n + 1
        elif parts[0] == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([tok[i + 1 + k].split()[1:] for k in range(n)], dtype=np.int64)
            i += n + 1
        elif parts[0] == "CELL_TYPES":
            i += int(parts[1]) + 1
        elif parts[0] in ("POINT_DATA", "CELL_DATA"):
            n = int(parts[1])
            name = tok[i + 1].split()[1]
            out[name] = np.array(tok[i + 3:i + 3 + n], dtype=float)
            i += n + 3
        else:
            i += 1
    return out
