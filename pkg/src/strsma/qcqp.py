"""Log-barrier interior-point solver for convex QCQPs.

Problem class::

    maximize    c^T x
    subject to  x^T Q_i x - a_i^T x + b_i <= 0,   i = 1..m
                x >= lower                         (optional)

with every ``Q_i`` symmetric positive semidefinite.  The solver follows the
central path of ``-t c^T x - sum_i log(-g_i(x))`` with damped Newton steps
and a backtracking line search, increasing ``t`` geometrically until the
duality-gap bound ``m / t`` is small.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

logger = logging.getLogger(__name__)

PSD_TOL = 1e-9


class QcqpError(RuntimeError):
    pass


@dataclass
class QcqpProblem:
    """Stacked constraint data.

    ``Q`` has shape (m, n, n), ``a`` shape (m, n) and ``b`` shape (m,).
    ``lower`` (n,) may contain ``-inf`` for free variables.
    """

    objective: np.ndarray
    Q: np.ndarray
    a: np.ndarray
    b: np.ndarray
    lower: np.ndarray | None = None
    names: list[str] | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.objective.shape[0]
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        m = self.b.shape[0]
        self.Q = np.asarray(self.Q, dtype=float)
        if self.Q.shape != (m, n, n) or self.a.shape != (m, n):
            raise ValueError(
                f"inconsistent shapes: objective {n}, Q {self.Q.shape}, "
                f"a {self.a.shape}, b {self.b.shape}")
        if m < 1:
            raise ValueError("at least one constraint is required")
        if not np.allclose(self.Q, np.swapaxes(self.Q, 1, 2), atol=1e-12, rtol=1e-10):
            raise ValueError("constraint matrices must be symmetric")
        self.Q = 0.5 * (self.Q + np.swapaxes(self.Q, 1, 2))
        quad = self.quadratic_rows
        if quad.size:
            w, v = np.linalg.eigh(self.Q[quad])
            scale = np.maximum(1.0, np.abs(w).max(axis=1))
            if np.any(w.min(axis=1) < -PSD_TOL * scale):
                raise ValueError("constraint matrices must be positive semidefinite")
            neg = w.min(axis=1) < 0
            if np.any(neg):
                w = np.clip(w, 0.0, None)
                fixed = np.einsum("mij,mj,mkj->mik", v, w, v)
                self.Q[quad[neg]] = fixed[neg]
        if self.lower is not None:
            self.lower = np.asarray(self.lower, dtype=float)
            if self.lower.shape != (n,):
                raise ValueError("lower must have one entry per variable")

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.b.shape[0]

    @property
    def quadratic_rows(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.Q != 0, axis=(1, 2)))

    def constraint_values(self, x) -> np.ndarray:
        """All constraint functions, bounds appended as ``lower - x``."""
        return _Compiled(self).values(np.asarray(x, dtype=float))


@dataclass
class QcqpSolution:
    x: np.ndarray
    objective_value: float
    kkt_residual: float
    barrier_iterations: int
    status: str
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    newton_steps: int = 0
    outer_objectives: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class BarrierParams:
    mu_factor: float = 10.0
    newton_tol: float = 1e-9
    max_outer: int = 60
    max_newton: int = 50
    alpha: float = 0.3
    beta: float = 0.8
    t0: float = 1.0


class _Compiled:
    """Constraint data split into quadratic and linear parts, bounds folded in."""

    def __init__(self, prob: QcqpProblem):
        n = prob.n_vars
        a, b = prob.a, prob.b
        if prob.lower is not None:
            fin = np.flatnonzero(np.isfinite(prob.lower))
            a = np.vstack([a, np.eye(n)[fin]])
            b = np.concatenate([b, prob.lower[fin]])
        self.c = prob.objective
        self.a = a
        self.b = b
        self.quad = prob.quadratic_rows
        self.Qq = prob.Q[self.quad]
        self.m = b.shape[0]

    def values(self, x: np.ndarray) -> np.ndarray:
        g = self.b - self.a @ x
        if self.quad.size:
            g[self.quad] += np.einsum("i,mij,j->m", x, self.Qq, x)
        return g

    def gradients(self, x: np.ndarray) -> np.ndarray:
        G = -self.a.copy()
        if self.quad.size:
            G[self.quad] += 2.0 * (self.Qq @ x)
        return G

    def barrier_derivs(self, x: np.ndarray, t: float, g: np.ndarray):
        G = self.gradients(x)
        inv = -1.0 / g
        grad = -t * self.c + G.T @ inv
        H = (G * inv[:, None] ** 2).T @ G
        if self.quad.size:
            H += 2.0 * np.einsum("m,mij->ij", inv[self.quad], self.Qq)
        return grad, H


def _newton_direction(H: np.ndarray, grad: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(H)
        y = np.linalg.solve(L, -grad)
        return np.linalg.solve(L.T, y)
    except np.linalg.LinAlgError:
        ridge = 1e-12 * max(1.0, np.abs(np.diag(H)).max())
        return np.linalg.lstsq(H + ridge * np.eye(H.shape[0]), -grad, rcond=None)[0]


def _center(comp: _Compiled, x, g, t, params: BarrierParams, tol, max_steps):
    steps = 0
    for _ in range(max_steps):
        grad, H = comp.barrier_derivs(x, t, g)
        dx = _newton_direction(H, grad)
        slope = float(grad @ dx)
        if -slope / 2.0 <= tol:
            break
        s = 1.0
        while True:
            g_new = comp.values(x + s * dx)
            if np.all(g_new < 0):
                # barrier change as a difference to avoid cancellation at large t
                df = -t * s * float(comp.c @ dx) - np.sum(np.log(g_new / g))
                if df <= params.alpha * s * slope:
                    break
            s *= params.beta
            if s < 1e-14:
                return x, g, steps
        x = x + s * dx
        g = g_new
        steps += 1
    return x, g, steps


def _refine_duals(comp: _Compiled, x, g) -> np.ndarray:
    # near the boundary 1/(t |g|) inherits the rounding error of g; fitting the
    # stationarity and complementarity equations (both linear in lambda) is sharper
    A = np.vstack([comp.gradients(x).T, np.diag(g)])
    rhs = np.concatenate([comp.c, np.zeros(comp.m)])
    return optimize.nnls(A, rhs)[0]


def check_kkt(problem: QcqpProblem, x, duals) -> float:
    """Largest of stationarity, complementarity and primal violation.

    ``duals`` has one entry per constraint, followed by one per finite lower
    bound (same order as :meth:`QcqpProblem.constraint_values`).
    """
    comp = _Compiled(problem)
    x = np.asarray(x, dtype=float)
    lam = np.asarray(duals, dtype=float)
    if lam.shape != (comp.m,):
        raise ValueError(f"expected {comp.m} multipliers, got {lam.shape}")
    if np.any(lam < 0):
        raise ValueError("multipliers must be nonnegative")
    g = comp.values(x)
    stat = -comp.c + comp.gradients(x).T @ lam
    return float(max(np.abs(stat).max(), np.abs(lam * g).max(), max(g.max(), 0.0)))


def solve(problem: QcqpProblem, x0=None, params: BarrierParams | None = None,
          gap_tol: float | None = None) -> QcqpSolution:
    """Maximise ``c^T x`` over the constraint set by the barrier method.

    ``x0`` must be strictly feasible; if omitted, a phase-I search supplies
    one.  Outer iterations stop once ``m / t <= gap_tol * |c^T x| + 1e-9``
    where ``gap_tol`` defaults to ``params.newton_tol``.
    """
    params = params or BarrierParams()
    gap_tol = params.newton_tol if gap_tol is None else gap_tol
    comp = _Compiled(problem)
    if x0 is None:
        x0 = find_strictly_feasible(problem)
    x = np.array(x0, dtype=float)
    g = comp.values(x)
    if np.any(g >= 0):
        return QcqpSolution(x, float(comp.c @ x), math.inf, 0, "infeasible_start")

    t = params.t0
    status = "max_iter"
    outer_objs: list[float] = []
    newton_total = 0
    for outer in range(1, params.max_outer + 1):
        x, g, steps = _center(comp, x, g, t, params, params.newton_tol, params.max_newton)
        newton_total += steps
        outer_objs.append(float(comp.c @ x))
        if comp.m / t <= gap_tol * abs(outer_objs[-1]) + 1e-9:
            status = "optimal"
            break
        t *= params.mu_factor
    # polish the last centring step so the barrier multipliers certify KKT
    x, g, steps = _center(comp, x, g, t, params, 1e-24, 10)
    newton_total += steps

    duals = 1.0 / (t * -g)
    res = check_kkt(problem, x, duals)
    refined = _refine_duals(comp, x, g)
    res_refined = check_kkt(problem, x, refined)
    if res_refined < res:
        duals, res = refined, res_refined
    logger.debug("barrier: %d outer, %d newton, kkt %.2e", outer, newton_total, res)
    return QcqpSolution(x=x, objective_value=float(comp.c @ x), kkt_residual=res,
                        barrier_iterations=outer, status=status, duals=duals,
                        newton_steps=newton_total, outer_objectives=outer_objs)


def find_strictly_feasible(problem: QcqpProblem, guess=None,
                           margin: float = 1e-8) -> np.ndarray:
    """Return a point with every constraint value below ``-margin``.

    Tries ``guess`` (default: origin) first, then solves the phase-I problem
    ``min s  s.t.  g_i(x) <= s,  s >= -1`` inside a large ball around the
    guess.
    """
    comp = _Compiled(problem)
    n = problem.n_vars
    x_g = np.zeros(n) if guess is None else np.asarray(guess, dtype=float)
    g0 = comp.values(x_g)
    if g0.max() < -margin:
        return x_g

    m = comp.m
    radius2 = (1e4 * (1.0 + np.linalg.norm(x_g))) ** 2
    Q = np.zeros((m + 2, n + 1, n + 1))
    a = np.zeros((m + 2, n + 1))
    b = np.zeros(m + 2)
    Q[comp.quad, :n, :n] = comp.Qq
    a[:m, :n] = comp.a
    a[:m, n] = 1.0
    b[:m] = comp.b
    a[m, n] = 1.0
    b[m] = -1.0
    Q[m + 1, :n, :n] = np.eye(n)
    a[m + 1, :n] = 2.0 * x_g
    b[m + 1] = x_g @ x_g - radius2
    obj = np.zeros(n + 1)
    obj[n] = -1.0
    phase1 = QcqpProblem(obj, Q, a, b)
    start = np.concatenate([x_g, [max(g0.max(), -1.0) + 1.0]])
    sol = solve(phase1, start, BarrierParams(newton_tol=1e-10), gap_tol=1e-8)
    x = sol.x[:n]
    if comp.values(x).max() >= -margin:
        raise QcqpError(f"problem appears infeasible (phase-I optimum {sol.x[n]:.3e})")
    return x


def dump_problem(problem: QcqpProblem, path) -> None:
    """Plain-text dump: ``n m``, objective, then per constraint Q (row-major), a, b."""
    n, m = problem.n_vars, problem.n_constraints
    fmt = lambda v: " ".join(f"{float(z):.17g}" for z in np.ravel(v))  # noqa: E731
    lines = [f"{n} {m}", fmt(problem.objective)]
    for i in range(m):
        lines += [fmt(problem.Q[i]), fmt(problem.a[i]), fmt([problem.b[i]])]
    if problem.lower is not None:
        lines.append(fmt(problem.lower))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path) -> QcqpProblem:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    n, m = map(int, rows[0])
    obj = np.array(rows[1], dtype=float)
    Q = np.empty((m, n, n))
    a = np.empty((m, n))
    b = np.empty(m)
    for i in range(m):
        base = 2 + 3 * i
        Q[i] = np.array(rows[base], dtype=float).reshape(n, n)
        a[i] = np.array(rows[base + 1], dtype=float)
        b[i] = float(rows[base + 2][0])
    lower = np.array(rows[2 + 3 * m], dtype=float) if len(rows) > 2 + 3 * m else None
    return QcqpProblem(obj, Q, a, b, lower)
