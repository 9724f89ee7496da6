"""P1 assembly of stiffness, mass and the indicator potential of a configuration.

Matrices live on interior nodes only (Dirichlet rows and columns removed).
The potential is integrated exactly over clip polygons: each polygon is
fanned into two sub-triangles and integrated with the edge-midpoint rule,
which is exact for products of linear functions.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .sublevel import Configuration


class AssemblyError(ValueError):
    pass


def local_stiffness(tri: np.ndarray) -> np.ndarray:
    """3x3 P1 stiffness matrix of one triangle given as a 3x2 vertex array."""
    return _stiffness_blocks(np.asarray(tri, float)[None])[0]


def local_mass(area: float) -> np.ndarray:
    return area / 12.0 * (np.ones((3, 3)) + np.eye(3))


def _stiffness_blocks(p: np.ndarray) -> np.ndarray:
    # edge opposite vertex k; K_ij = (e_i . e_j) / (4 |T|)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = 0.5 * np.abs(e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
    if np.any(area <= 0):
        raise AssemblyError("degenerate triangle")
    return np.einsum("tid,tjd->tij", e, e) / (4.0 * area[:, None, None])


def _potential_blocks(poly: np.ndarray, tri_areas: np.ndarray) -> np.ndarray:
    """Per-triangle matrices of int_{clip} phi_i phi_j from barycentric polygons."""
    blocks = np.zeros((len(poly), 3, 3))
    for a, b, c in ((0, 1, 2), (0, 2, 3)):
        pa, pb, pc = poly[:, a], poly[:, b], poly[:, c]
        d1, d2 = pb - pa, pc - pa
        frac = np.abs(d1[:, 1] * d2[:, 2] - d1[:, 2] * d2[:, 1])
        w = frac * tri_areas / 3.0
        for m in (0.5 * (pa + pb), 0.5 * (pb + pc), 0.5 * (pc + pa)):
            blocks += w[:, None, None] * m[:, :, None] * m[:, None, :]
    return blocks


class FEMSystem:
    """Stiffness and mass on interior nodes of a mesh, plus potential assembly."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.interior = mesh.interior_nodes
        n = mesh.n_nodes
        dof = -np.ones(n, dtype=np.int64)
        dof[self.interior] = np.arange(len(self.interior))
        self.dof = dof
        tris = mesh.triangles
        self._rows = np.repeat(tris, 3, axis=1).ravel()
        self._cols = np.tile(tris, (1, 3)).ravel()
        self.tri_areas = mesh.areas
        self.K_full = self._assemble_full(_stiffness_blocks(mesh.nodes[tris]))
        mass = self.tri_areas[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
        self.M_full = self._assemble_full(mass)
        self.K = self._restrict(self.K_full)
        self.M = self._restrict(self.M_full)
        self._ground = None

    @property
    def size(self) -> int:
        return len(self.interior)

    def _assemble_full(self, blocks: np.ndarray) -> sp.csr_matrix:
        n = self.mesh.n_nodes
        mat = sp.coo_matrix((blocks.ravel(), (self._rows, self._cols)), shape=(n, n))
        return mat.tocsr()

    def _restrict(self, mat: sp.csr_matrix) -> sp.csr_matrix:
        return mat[self.interior][:, self.interior].tocsr()

    def potential(self, config: Configuration) -> sp.csr_matrix:
        if config.poly.shape[0] != self.mesh.n_triangles:
            raise AssemblyError("configuration does not match mesh")
        if np.any(config.poly < -1e-12) or np.any(config.poly > 1 + 1e-12):
            raise AssemblyError("clip polygon outside its triangle")
        blocks = _potential_blocks(config.poly, self.tri_areas)
        return self._restrict(self._assemble_full(blocks))

    def to_interior(self, field: np.ndarray) -> np.ndarray:
        return np.asarray(field, float)[self.interior]

    def to_full(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.mesh.n_nodes)
        out[self.interior] = x
        return out

    def ground_state(self):
        """Cached Dirichlet ground state (alpha = 0)."""
        if self._ground is None:
            from .eigen import smallest_eigpair

            self._ground = smallest_eigpair(self.K, None, self.M, 0.0, system=self)
        return self._ground


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    return FEMSystem(mesh).K


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    return FEMSystem(mesh).M


def assemble_potential(mesh: Mesh, config: Configuration) -> sp.csr_matrix:
    return FEMSystem(mesh).potential(config)


def rayleigh_quotient(K, P, M, alpha: float, x: np.ndarray) -> float:
    """(x'Kx + alpha x'Px) / x'Mx on interior vectors."""
    x = np.asarray(x, dtype=float)
    den = float(x @ (M @ x))
    if den <= 0 or not np.any(x):
        raise ValueError("Rayleigh quotient of a zero vector")
    num = float(x @ (K @ x))
    if P is not None and alpha != 0:
        num += alpha * float(x @ (P @ x))
    return num / den
