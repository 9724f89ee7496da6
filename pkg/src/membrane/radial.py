"""One-dimensional reductions on disks and annuli.

For a radial set D = {r in D1}, modes h(r) sin(N theta) satisfy
    -h'' - h'/r + (N^2/r^2 + alpha chi_D1) h = lambda h
with Dirichlet ends (natural condition at r = 0 for the disk).  These are
discretised with 1D P1 elements in the weighted form (weight r dr) and
solved with ARPACK shift-invert, which keeps this module independent of
the 2D solver it is used to validate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .optimizer import DESCENT_SLACK, DescentError


@dataclass(frozen=True)
class RadialGrid:
    r_min: float
    r_max: float
    n: int = 2000

    def __post_init__(self):
        if not (0 <= self.r_min < self.r_max) or self.n < 2:
            raise ValueError("invalid radial grid")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.n + 1)

    @property
    def measure(self) -> float:
        return math.pi * (self.r_max ** 2 - self.r_min ** 2)


@dataclass(frozen=True)
class RadialConfig:
    """Union of disjoint sorted intervals inside the grid's radial range."""

    intervals: tuple = ()

    def __post_init__(self):
        iv = tuple((float(a), float(b)) for a, b in self.intervals if b > a)
        for (a0, b0), (a1, _) in zip(iv, iv[1:]):
            if a1 < b0:
                raise ValueError("intervals overlap or are unsorted")
        object.__setattr__(self, "intervals", iv)

    @property
    def measure(self) -> float:
        return math.pi * sum(b * b - a * a for a, b in self.intervals)

    def to_text(self) -> str:
        return "".join(f"{a:.17g} {b:.17g}\n" for a, b in self.intervals)

    @classmethod
    def from_text(cls, text: str) -> "RadialConfig":
        rows = [line.split() for line in text.splitlines() if line.strip()]
        return cls(tuple((float(a), float(b)) for a, b in rows))


@dataclass
class RadialEig:
    lam: float
    r: np.ndarray
    h: np.ndarray   # nonnegative, int h^2 r dr = 1


_G2 = np.array([-1.0, 1.0]) / math.sqrt(3.0)
_G4x, _G4w = np.polynomial.legendre.leggauss(4)


def _assemble(grid: RadialGrid, N: int, alpha: float, config: RadialConfig):
    r = grid.nodes
    r0, r1 = r[:-1], r[1:]
    dr = r1 - r0
    rm = 0.5 * (r0 + r1)
    kloc = rm / dr
    m00 = dr * (r0 / 4 + r1 / 12)
    m01 = dr * (r0 + r1) / 12
    m11 = dr * (r0 / 12 + r1 / 4)
    a00, a01, a11 = kloc.copy(), -kloc, kloc.copy()
    if N:
        # int (N^2/r) phi_a phi_b dr by 4-point Gauss (r > 0 on annuli)
        s = 0.5 * (_G4x + 1)
        rq = r0[:, None] + dr[:, None] * s
        w = dr[:, None] * 0.5 * _G4w * N * N / rq
        a00 += (w * (1 - s) ** 2).sum(axis=1)
        a01 += (w * (1 - s) * s).sum(axis=1)
        a11 += (w * s * s).sum(axis=1)
    if alpha and config.intervals:
        for lo, hi in config.intervals:
            c = np.maximum(r0, lo)
            d = np.minimum(r1, hi)
            on = d > c
            if not on.any():
                continue
            # cubic integrand phi_a phi_b r: two-point Gauss on [c, d] is exact
            for g in _G2:
                x = 0.5 * (c + d) + 0.5 * (d - c) * g
                s = (x - r0) / dr
                w = np.where(on, 0.5 * (d - c) * x * alpha, 0.0)
                a00 += w * (1 - s) ** 2
                a01 += w * (1 - s) * s
                a11 += w * s * s
    n = len(r)
    idx = np.arange(n - 1)
    rows = np.concatenate([idx, idx, idx + 1, idx + 1])
    cols = np.concatenate([idx, idx + 1, idx, idx + 1])
    A = sp.coo_matrix((np.concatenate([a00, a01, a01, a11]), (rows, cols)), shape=(n, n)).tocsc()
    M = sp.coo_matrix((np.concatenate([m00, m01, m01, m11]), (rows, cols)), shape=(n, n)).tocsc()
    free = np.arange(n)
    free = free[free != n - 1]
    if grid.r_min > 0:
        free = free[free != 0]
    return A[free][:, free], M[free][:, free], free


def radial_eig(grid: RadialGrid, N: int = 0, alpha: float = 0.0,
               config: RadialConfig = RadialConfig()) -> RadialEig:
    """Lowest eigenpair of the mode-N radial problem."""
    if N < 0 or int(N) != N:
        raise ValueError("N must be a nonnegative integer")
    if grid.r_min == 0 and N > 0:
        raise ValueError("modes N > 0 need r_min > 0")
    A, M, free = _assemble(grid, int(N), alpha, config)
    vals, vecs = eigsh(A, k=1, M=M, sigma=0.0, which="LM", v0=np.ones(A.shape[0]))
    x = vecs[:, 0]
    if x.sum() < 0:
        x = -x
    x /= math.sqrt(x @ (M @ x))
    lam = float(x @ (A @ x))
    h = np.zeros(grid.n + 1)
    h[free] = x
    return RadialEig(lam, grid.nodes, h)


# ---------------------------------------------------------------------------
# 1D rearrangement


def _sublevel_pieces(r, h, t):
    """Per-element [c, d] with {h <= t} on that element (empty gives c == d)."""
    r0, r1, h0, h1 = r[:-1], r[1:], h[:-1], h[1:]
    in0, in1 = h0 <= t, h1 <= t
    with np.errstate(divide="ignore", invalid="ignore"):
        x = r0 + (t - h0) / (h1 - h0) * (r1 - r0)
    c = np.where(in0, r0, np.where(in1, x, r0))
    d = np.where(in0, np.where(in1, r1, x), np.where(in1, r1, r0))
    return c, d


def sublevel_measure(r, h, t) -> float:
    c, d = _sublevel_pieces(r, h, t)
    return float(math.pi * np.sum(d * d - c * c))


def radial_sublevel(r, h, A, area_tol=None, max_steps=200) -> RadialConfig:
    """{h <= t} with weighted measure A, t by bisection."""
    total = math.pi * (r[-1] ** 2 - r[0] ** 2)
    area_tol = 1e-12 * total if area_tol is None else area_tol
    if A >= total - area_tol:
        return RadialConfig(((r[0], r[-1]),))
    down, up = min(0.0, float(h.min())), float(h.max())
    t = down
    for _ in range(max_steps):
        t = 0.5 * (up + down)
        m = sublevel_measure(r, h, t)
        if m < A:
            down = t
        elif m > A:
            up = t
        if (abs(m - A) <= area_tol and up - down <= 1e-13 * max(abs(up), 1e-300)) or m == A:
            break
        if up - down <= 4 * np.spacing(max(abs(up), 1e-300)):
            break
    c, d = _sublevel_pieces(r, h, t)
    pieces = []
    for a, b in zip(c, d):
        if b <= a:
            continue
        if pieces and abs(pieces[-1][1] - a) <= 1e-15 * max(1.0, abs(a)):
            pieces[-1][1] = b
        else:
            pieces.append([a, b])
    return RadialConfig(tuple(map(tuple, pieces)))


@dataclass
class RadialOpt:
    sigma: float
    config: RadialConfig
    profile: RadialEig
    trace: list = field(default_factory=list)
    converged: bool = False


def _boundary_distance(grid: RadialGrid, r):
    if grid.r_min == 0:
        return grid.r_max - r
    return np.minimum(r - grid.r_min, grid.r_max - r)


def radial_optimize(grid: RadialGrid, alpha: float, A: float, eps: float = 1e-10,
                    max_outer: int = 500, init: RadialConfig | None = None) -> RadialOpt:
    """Rearrangement iteration restricted to radial sets."""
    if A < 0 or A > grid.measure * (1 + 1e-12):
        raise ValueError("A outside [0, |Omega|]")
    r = grid.nodes
    config = init if init is not None else radial_sublevel(r, _boundary_distance(grid, r), A)
    eig = radial_eig(grid, 0, alpha, config)
    trace = [eig.lam]
    converged = False
    for _ in range(max_outer):
        config = radial_sublevel(r, eig.h, A)
        new = radial_eig(grid, 0, alpha, config)
        trace.append(new.lam)
        if new.lam > eig.lam + DESCENT_SLACK * abs(new.lam):
            raise DescentError(f"radial lambda rose from {eig.lam!r} to {new.lam!r}")
        step = abs(new.lam - eig.lam)
        eig = new
        if step < eps:
            converged = True
            break
    return RadialOpt(eig.lam, config, eig, trace, converged)


def mode_number(delta: float) -> int:
    """Smallest N with delta < 1 - 1/(2N)."""
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    N = 1
    while not delta < 1 - 1 / (2 * N):
        N += 1
    return N


@dataclass
class ModeGapReport:
    a: float
    delta: float
    alpha: float
    N: int
    sigma: float
    tau: float
    bound: float
    slack: float
    satisfied: bool
    config: RadialConfig
    d_mass: float  # int_D v^2 / int v^2 for the mode-N eigenfunction


def mode_gap_check(a: float, delta: float, alpha: float, n: int = 2000,
                   slack: float = 1e-2) -> ModeGapReport:
    """Compare the radial optimum sigma with the lowest sin(N theta) mode tau."""
    if a <= 0:
        raise ValueError("a must be positive")
    N = mode_number(delta)
    grid = RadialGrid(a, a + 1.0, n)
    opt = radial_optimize(grid, alpha, delta * grid.measure)
    tau = radial_eig(grid, N, alpha, opt.config)
    bound = N * N / (a * a)
    r, h = tau.r, tau.h
    num = _weighted_l2_on(r, h, opt.config)
    return ModeGapReport(a, delta, alpha, N, opt.sigma, tau.lam, bound, slack,
                         tau.lam - opt.sigma <= bound + slack, opt.config, num)


def _weighted_l2_on(r, h, config: RadialConfig) -> float:
    """int_{D1} h^2 r dr for a P1 profile h (exact: the integrand is cubic)."""
    r0, r1, h0, h1 = r[:-1], r[1:], h[:-1], h[1:]
    total = 0.0
    for lo, hi in config.intervals:
        c, d = np.maximum(r0, lo), np.minimum(r1, hi)
        on = d > c
        for g in _G2:
            x = 0.5 * (c + d) + 0.5 * (d - c) * g
            hv = h0 + (h1 - h0) * (x - r0) / (r1 - r0)
            total += float(np.sum(np.where(on, 0.5 * (d - c) * hv * hv * x, 0.0)))
    return total


def sector_eigenvalue(a: float, N: int, res: int = 64, layers: int = 8,
                      refinements: int = 0) -> float:
    """First Dirichlet eigenvalue of {a < r < a+1, 0 < theta < pi/N} (2D FEM)."""
    from .fem import FEMSystem
    from .mesh import build_sector_mesh, refine_times

    if a <= 0 or N < 1:
        raise ValueError("need a > 0 and N >= 1")
    mesh = refine_times(build_sector_mesh(a, math.pi / N, res, layers), refinements)
    return FEMSystem(mesh).ground_state().lam


def bessel_j(nu: int, x: float, terms: int = 80) -> float:
    """J_nu(x) from its power series (adequate for x below about 20)."""
    s, term = 0.0, (x / 2) ** nu / math.factorial(nu)
    for k in range(terms):
        s += term
        term *= -(x / 2) ** 2 / ((k + 1) * (k + 1 + nu))
    return s


def bessel_zero(nu: int = 0, k: int = 1) -> float:
    """k-th positive zero of J_nu by scanning for sign changes and bisecting."""
    found, x, step = 0, 1e-3, 0.05
    f0 = bessel_j(nu, x)
    while True:
        x1 = x + step
        f1 = bessel_j(nu, x1)
        if f0 * f1 < 0:
            found += 1
            if found == k:
                lo, hi = x, x1
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if bessel_j(nu, lo) * bessel_j(nu, mid) <= 0:
                        hi = mid
                    else:
                        lo = mid
                return 0.5 * (lo + hi)
        x, f0 = x1, f1
