"""Negative-part penalty operator, a semismooth Newton solver for penalized
systems, and an exact active-set oracle for small convex QPs with linear
inequality constraints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

__all__ = [
    "ConvergenceError",
    "InfeasibleError",
    "ObstacleSpec",
    "OracleResult",
    "PenaltyConfig",
    "PenaltyTerm",
    "SingularLinearizationError",
    "SolveReport",
    "negative_part",
    "penalty_residual",
    "solve_penalized",
    "vi_oracle",
]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


class SingularLinearizationError(RuntimeError):
    pass


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class ObstacleSpec:
    """Half-space {x : x . q >= 0}."""

    q: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(3)
        if not np.all(np.isfinite(q)) or np.linalg.norm(q) == 0.0:
            raise ValueError(f"obstacle direction must be a nonzero finite 3-vector, got {self.q}")
        object.__setattr__(self, "q", tuple(float(c) for c in q))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.q)

    def slack(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.vector

    def check_feasible(self, points, what="undeformed configuration"):
        s = self.slack(points)
        if np.any(s < 0):
            raise InfeasibleError(f"{what} violates the obstacle: min slack {float(np.min(s)):.3e}")
        return float(np.min(s))


@dataclass(frozen=True)
class PenaltyConfig:
    kappa: float = 1e-3
    newton_tol: float = 1e-10
    max_iters: int = 100
    damping: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)
    violation_norm: float = 0.0
    active_count: int = 0


def negative_part(values):
    """f^- = (|f| - f) / 2, elementwise."""
    f = np.asarray(values, dtype=float)
    return np.maximum(-f, 0.0)


def penalty_residual(position, projection, weights, factor):
    """Load-like contribution -factor * sum_q w_q {p_q}^- P_q of the penalty term.

    ``position`` holds p_q at each quadrature point, ``projection`` is the
    (n_points x n_dofs) matrix of test-function projections onto q.
    """
    r = np.asarray(weights, dtype=float) * negative_part(position)
    return -factor * (projection.T @ r)


class PenaltyTerm:
    """Penalty acting on the affine map p(u) = offset + P u at weighted points."""

    def __init__(self, offset, projection, weights, factor):
        self.offset = np.asarray(offset, dtype=float)
        self.projection = sp.csr_matrix(projection)
        self.weights = np.asarray(weights, dtype=float)
        self.factor = float(factor)
        if self.projection.shape[0] != self.offset.size or self.weights.size != self.offset.size:
            raise ValueError("offset, projection rows and weights must agree in length")

    def position(self, u):
        return self.offset + self.projection @ u

    def residual(self, u):
        return penalty_residual(self.position(u), self.projection, self.weights, self.factor)

    def active(self, u):
        return self.position(u) < 0.0

    def jacobian(self, u):
        act = self.weights * self.active(u)
        P = self.projection
        return self.factor * (P.T @ sp.diags(act) @ P)

    def energy(self, u):
        return 0.5 * self.factor * float(np.sum(self.weights * negative_part(self.position(u)) ** 2))

    def violation_norm(self, u):
        return float(np.sqrt(np.sum(self.weights * negative_part(self.position(u)) ** 2)))


def _factorize(A):
    if sp.issparse(A):
        A = sp.csc_matrix(A)
        try:
            solve = spla.factorized(A)
        except RuntimeError as exc:
            raise SingularLinearizationError(f"singular linearization ({exc}); try a smaller damping") from exc
        return solve
    try:
        cf = sla.cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise SingularLinearizationError("singular linearization; try a smaller damping") from exc
    return lambda b: sla.cho_solve(cf, b)


def solve_penalized(stiffness, load, penalty: PenaltyTerm | None, config: PenaltyConfig, x0=None) -> SolveReport:
    """Solve K u + penalty.residual(u) = F by semismooth Newton with an energy line search.

    The system is the optimality condition of the convex, C^1 energy
    0.5 u.K.u - F.u + penalty.energy(u), which drives the step control.
    Converges when the residual is below ``newton_tol`` or when a full
    Newton step reproduces the active set (the iterate is then exact up to
    round-off of the linear solve).
    """
    K = stiffness
    F = np.asarray(load, dtype=float)
    n = F.size
    u = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    def resid(v):
        r = K @ v - F
        if penalty is not None:
            r = r + penalty.residual(v)
        return r

    def energy(v):
        e = 0.5 * float(v @ (K @ v)) - float(F @ v)
        if penalty is not None:
            e += penalty.energy(v)
        return e

    r = resid(u)
    history = [float(np.linalg.norm(r))]
    if penalty is None:
        u = _factorize(K)(F)
        r = resid(u)
        history.append(float(np.linalg.norm(r)))
        return SolveReport(u, 1, history, 0.0, 0)

    active = penalty.active(u)
    for it in range(1, config.max_iters + 1):
        J = K + penalty.jacobian(u) if sp.issparse(K) else K + penalty.jacobian(u).toarray()
        du = -_factorize(J)(r)
        step = config.damping
        e0 = energy(u)
        slope = float(r @ du)
        while True:
            trial = u + step * du
            if energy(trial) <= e0 + 1e-4 * step * slope + 1e-14 * abs(e0) or step < 1e-12:
                break
            step *= 0.5
        u = trial
        r = resid(u)
        history.append(float(np.linalg.norm(r)))
        new_active = penalty.active(u)
        settled = step == 1.0 and np.array_equal(new_active, active)
        active = new_active
        if history[-1] <= config.newton_tol or settled:
            return SolveReport(u, it, history, penalty.violation_norm(u), int(active.sum()))
    raise ConvergenceError(f"no convergence in {config.max_iters} iterations (residual {history[-1]:.3e})", history)


@dataclass
class OracleResult:
    solution: np.ndarray
    multipliers: np.ndarray
    active: np.ndarray
    kkt_residual: float
    complementarity: float
    iterations: int


def _feasible_start(c, B, n):
    if np.all(c >= 0):
        return np.zeros(n)
    res = linprog(np.zeros(n), A_ub=-B, b_ub=c, bounds=[(None, None)] * n, method="highs")
    if res.status != 0:
        raise InfeasibleError("constraint set c + B u >= 0 is empty")
    return res.x


def vi_oracle(stiffness, load, c, B, max_iters=10_000, tol=1e-12) -> OracleResult:
    """Minimise 0.5 u.K.u - F.u subject to c + B u >= 0 with a primal active-set method.

    Intended for small dense instances. Anti-cycling uses Bland's rule
    (smallest index) for both the blocking constraint and the one released.
    """
    K = stiffness.toarray() if sp.issparse(stiffness) else np.asarray(stiffness, dtype=float)
    F = np.asarray(load, dtype=float)
    B = B.toarray() if sp.issparse(B) else np.atleast_2d(np.asarray(B, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    n, m = F.size, c.size
    u = _feasible_start(c, B, n)
    scale = max(1.0, float(np.max(np.abs(F))), float(np.max(np.abs(K))))
    cscale = max(1.0, float(np.max(np.abs(c)))) if m else 1.0
    working = [i for i in range(m) if abs(c[i] + B[i] @ u) <= tol * cscale]
    # keep the working set linearly independent
    indep = []
    for i in working:
        trial = B[indep + [i]]
        if np.linalg.matrix_rank(trial) == len(indep) + 1:
            indep.append(i)
    working = indep
    lam = np.zeros(0)
    for it in range(1, max_iters + 1):
        W = sorted(working)
        k = len(W)
        g = K @ u - F
        Bw = B[W]
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = K
        kkt[:n, n:] = -Bw.T
        kkt[n:, :n] = -Bw
        rhs = np.concatenate([-g, np.zeros(k)])
        sol = np.linalg.solve(kkt, rhs)
        # lam are the multipliers at u + p, the minimiser over the current working set
        p, lam = sol[:n], sol[n:]
        alpha, block = 1.0, None
        for i in range(m):
            if i in W:
                continue
            bp = B[i] @ p
            if bp < 0:
                a = -(c[i] + B[i] @ u) / bp
                if a < alpha - 1e-15 or (abs(a - alpha) <= 1e-15 and block is not None and i < block):
                    alpha, block = max(a, 0.0), i
        u = u + alpha * p
        if block is not None:
            working.append(block)
            continue
        if k == 0 or np.min(lam) >= -1e-13 * scale:
            break
        neg = [W[j] for j in range(k) if lam[j] < -1e-13 * scale]
        working.remove(min(neg))
    else:
        raise ConvergenceError("active-set oracle did not terminate", [])

    mult = np.zeros(m)
    W = sorted(working)
    mult[W] = lam
    slack = c + B @ u
    stat = K @ u - F - B.T @ mult
    kkt_res = float(np.linalg.norm(stat) / max(1.0, np.linalg.norm(F)))
    comp = float(np.max(np.abs(mult * slack))) if m else 0.0
    return OracleResult(u, mult, np.array(W, dtype=int), kkt_res, comp, it)
