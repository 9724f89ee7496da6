"""The map (alpha, A) -> Lambda, its fixed point abar(A), and the material problem.

A two-density membrane (densities h < H, total mass M) has the same optimal
sets as the indicator-potential problem with
    A = (H|Omega| - M) / (H - h),   alpha = (H - h) Theta,   Lambda(alpha, A) = H Theta,
where Theta is the minimal material eigenvalue.  Solving for alpha is a
fixed-point problem alpha = ((H - h)/H) Lambda(alpha, A); the Lipschitz bound
|dLambda/dalpha| <= A/|Omega| makes it a contraction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import FEMSystem
from .mesh import Mesh
from .optimizer import InitShape, MultiStart, default_inits, multi_start


class AtlasError(ValueError):
    pass


@dataclass
class Protocol:
    inits: list = field(default_factory=lambda: [InitShape("boundary_ring")])
    eps: float = 1e-10
    max_outer: int = 500

    @classmethod
    def thorough(cls, seed: int = 0, eps: float = 1e-10) -> "Protocol":
        return cls(default_inits(seed), eps)


@dataclass
class LambdaEstimate:
    alpha: float
    A: float
    lam: float
    runs: int
    converged: bool
    mesh: str
    result: MultiStart | None = None


class Atlas:
    """Lambda evaluations on one mesh, sharing the assembled system and a cache."""

    def __init__(self, mesh: Mesh, protocol: Protocol | None = None):
        self.mesh = mesh
        self.system = FEMSystem(mesh)
        self.protocol = protocol or Protocol()
        self._cache: dict = {}

    @property
    def omega(self) -> float:
        return self.mesh.area

    @property
    def mu(self) -> float:
        return self.system.ground_state().lam

    def lambda_of(self, alpha: float, A: float) -> LambdaEstimate:
        if alpha < 0 or A < 0 or A > self.omega * (1 + 1e-12):
            raise AtlasError("need alpha >= 0 and A in [0, |Omega|]")
        key = (float(alpha), float(A))
        if key not in self._cache:
            p = self.protocol
            res = multi_start(self.mesh, alpha, A, p.inits, eps=p.eps,
                              max_outer=p.max_outer, system=self.system)
            ok = [r for r in res.runs if r is not None]
            self._cache[key] = LambdaEstimate(alpha, A, res.best.lam, len(ok),
                                              all(r.converged for r in ok),
                                              self.mesh.tag.describe(), res)
        return self._cache[key]

    def lam(self, alpha: float, A: float) -> float:
        return self.lambda_of(alpha, A).lam

    # -- abar -------------------------------------------------------------

    def abar(self, A: float, tol: float = 1e-6, max_steps: int = 200) -> float:
        """Root of g(alpha) = Lambda(alpha, A) - alpha by bracketing and bisection."""
        if A >= self.omega * (1 - 1e-12):
            raise AtlasError("no root: Lambda(alpha, |Omega|) - alpha equals mu for all alpha")
        g = lambda a: self.lam(a, A) - a  # noqa: E731
        lo, hi = 0.0, 2.0 * self.mu
        g_hi = g(hi)
        while g_hi > 0:
            lo, hi = hi, 2.0 * hi
            g_hi = g(hi)
            if hi > 1e12:
                raise AtlasError("failed to bracket abar")
        for _ in range(max_steps):
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if abs(gm) <= tol:
                return mid
            if gm > 0:
                lo = mid
            else:
                hi = mid
        raise AtlasError("abar bisection budget exhausted")

    # -- material problem ---------------------------------------------------

    def pm_from_materials(self, h: float, H: float, M: float, tol: float = 1e-10,
                          max_iter: int = 100) -> "PMResult":
        if not (0 <= h < H):
            raise AtlasError("need 0 <= h < H")
        om = self.omega
        if not (M > 0 and h * om < M <= H * om * (1 + 1e-15)):
            raise AtlasError("mass must lie in (h|Omega|, H|Omega|]")
        A = min(max((H * om - M) / (H - h), 0.0), om)
        q = (H - h) / H
        alphas = [0.0]
        lam = self.lam(0.0, A)
        for _ in range(max_iter):
            nxt = q * lam
            alphas.append(nxt)
            lam = self.lam(nxt, A)
            if abs(alphas[-1] - alphas[-2]) <= tol * max(abs(nxt), 1.0):
                break
        else:
            raise AtlasError("material fixed point did not converge")
        alpha = alphas[-1]
        theta = lam / H
        return PMResult(h, H, M, alpha, A, theta, lam, len(alphas) - 1, alphas,
                        h * theta, q * A / om)

    def pm_to_materials(self, alpha: float, A: float, H: float, tol: float = 1e-9) -> "MaterialSpec":
        if H <= 0:
            raise AtlasError("H must be positive")
        lam = self.lam(alpha, A)
        if lam < alpha - tol * max(alpha, 1.0):
            raise AtlasError("alpha exceeds abar(A): no nonnegative lower density exists")
        theta = lam / H
        h = max(H * (lam - alpha) / lam, 0.0)
        M = A * h + (self.omega - A) * H
        return MaterialSpec(h, H, M, theta, lam, boundary_case=(alpha == 0 or h == 0.0))

    # -- audit --------------------------------------------------------------

    def table(self, alpha_grid, A_grid) -> np.ndarray:
        return np.array([[self.lam(a, A) for A in A_grid] for a in alpha_grid])

    def audit(self, alpha_grid, A_grid, slack: float = 1e-3) -> "AuditReport":
        alphas, As = list(alpha_grid), list(A_grid)
        return audit_table(alphas, As, self.table(alphas, As), self.mu, self.omega, slack)


def audit_table(alphas, As, lam, mu: float, omega: float, slack: float = 1e-3,
                rel_tol: float = 1e-9) -> "AuditReport":
    """Check a Lambda table (rows alpha, columns A) against the structural properties.

    Per alpha step: 0 <= dLambda/dalpha <= A/|Omega| + slack and Lambda - alpha
    strictly decreasing (for A < |Omega|).  Per A step at alpha > 0: Lambda
    strictly increasing.  Per point: mu <= Lambda <= mu + alpha A/|Omega|.
    rel_tol absorbs eigensolver round-off in the sign conditions.
    """
    alphas, As = list(map(float, alphas)), list(map(float, As))
    if not alphas or not As:
        raise AtlasError("audit grids must be nonempty")
    if alphas != sorted(alphas) or As != sorted(As):
        raise AtlasError("audit grids must be sorted")
    lam = np.asarray(lam, float)
    rows, violations = [], []
    for i, a in enumerate(alphas):
        for j, A in enumerate(As):
            ub = mu + a * A / omega
            tol = rel_tol * max(abs(lam[i, j]), 1.0)
            rows.append(("point", a, A, lam[i, j], ub - lam[i, j]))
            if not np.isfinite(lam[i, j]):
                violations.append(f"missing value at alpha={a:g}, A={A:g}")
            elif lam[i, j] < mu - tol or lam[i, j] > ub + tol:
                violations.append(f"bounds at alpha={a:g}, A={A:g}")
    for j, A in enumerate(As):
        for i in range(len(alphas) - 1):
            a1, a2 = alphas[i], alphas[i + 1]
            d = lam[i + 1, j] - lam[i, j]
            slope = d / (a2 - a1)
            tol = rel_tol * max(abs(lam[i + 1, j]), 1.0) / (a2 - a1)
            rows.append(("alpha-step", a1, a2, slope, A / omega + slack - slope))
            if slope < -tol or slope > A / omega + slack:
                violations.append(f"slope {slope:.6g} at A={A:g}, alpha {a1:g}->{a2:g}")
            if A < omega * (1 - 1e-12) and not (lam[i + 1, j] - a2 < lam[i, j] - a1):
                violations.append(f"Lambda-alpha not decreasing at A={A:g}, alpha {a1:g}->{a2:g}")
    for i, a in enumerate(alphas):
        if a <= 0:
            continue
        for j in range(len(As) - 1):
            d = lam[i, j + 1] - lam[i, j]
            rows.append(("A-step", As[j], As[j + 1], d, d))
            if not d > 0:
                violations.append(f"Lambda not increasing at alpha={a:g}, A {As[j]:g}->{As[j + 1]:g}")
    return AuditReport(rows, violations)


@dataclass
class PMResult:
    h: float
    H: float
    M: float
    alpha: float
    A: float
    theta: float
    lam: float
    iterations: int
    alphas: list
    h_theta: float
    contraction_bound: float


@dataclass
class MaterialSpec:
    h: float
    H: float
    M: float
    theta: float
    lam: float
    boundary_case: bool = False


@dataclass
class AuditReport:
    rows: list
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_text(self) -> str:
        lines = ["kind,x1,x2,value,margin"]
        lines += [r[0] + "," + ",".join(f"{v:.12g}" for v in r[1:]) for r in self.rows]
        lines.append(f"violations: {len(self.violations)}")
        lines += [f"  {v}" for v in self.violations]
        return "\n".join(lines) + "\n"


# functional wrappers


def lambda_of(mesh: Mesh, alpha: float, A: float, protocol: Protocol | None = None) -> LambdaEstimate:
    return Atlas(mesh, protocol).lambda_of(alpha, A)


def abar(mesh: Mesh, A: float, tol: float = 1e-6, protocol: Protocol | None = None) -> float:
    return Atlas(mesh, protocol).abar(A, tol)


def pm_from_materials(mesh: Mesh, h: float, H: float, M: float,
                      protocol: Protocol | None = None) -> PMResult:
    return Atlas(mesh, protocol).pm_from_materials(h, H, M)


def pm_to_materials(mesh: Mesh, alpha: float, A: float, H: float,
                    protocol: Protocol | None = None) -> MaterialSpec:
    return Atlas(mesh, protocol).pm_to_materials(alpha, A, H)


def monotonicity_lipschitz_audit(mesh: Mesh, A: float, alpha_grid, A_grid=None,
                                 alpha_for_A: float | None = None,
                                 protocol: Protocol | None = None,
                                 slack: float = 1e-3) -> AuditReport:
    """Alpha-direction checks at fixed A, plus A-direction checks at one alpha if A_grid is given."""
    at = Atlas(mesh, protocol)
    rep = at.audit(alpha_grid, [A], slack=slack)
    if A_grid is not None:
        a0 = max(alpha_grid) if alpha_for_A is None else alpha_for_A
        extra = at.audit([a0], A_grid, slack=slack)
        rep = AuditReport(rep.rows + extra.rows, rep.violations + extra.violations)
    return rep


def radial_abar(grid, A: float, tol: float = 1e-6) -> float:
    """abar on a disk or annulus computed entirely with the 1D oracle."""
    from .radial import radial_eig, radial_optimize

    mu = radial_eig(grid).lam
    g = lambda a: radial_optimize(grid, a, A).sigma - a  # noqa: E731
    lo, hi = 0.0, 2.0 * mu
    while g(hi) > 0:
        lo, hi = hi, 2 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= tol:
            return mid
        lo, hi = (mid, hi) if gm > 0 else (lo, mid)
    raise AtlasError("radial abar did not converge")
