"""
QP Solver Module

Euclidean projection of a desired stacked command onto
{u : A u <= b, ||u||_inf <= box}, i.e. the identity-Hessian QP

    minimize    ||u - u_hat||^2
    subject to  A u <= b,  -box <= u_k <= box

solved by Hildreth's dual coordinate ascent followed by an active-set
polish that returns the exact KKT point once the active set is known.
When the polish cannot certify the dual guess, an exact dual active-set
solve (Goldfarb-Idnani with an identity Hessian) finishes the job; it is
the only place infeasibility is declared.
A brute-force active-set enumeration oracle is provided for testing.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError, QpSizeError

logger = logging.getLogger(__name__)

EPS_FEAS = 1e-8
EPS_DUAL = 1e-10
STALL_SWEEPS = 50
POLISH_EVERY = 5

ORACLE_MAX_DIM = 8
ORACLE_MAX_ROWS = 20


class QpStatus(Enum):
    """Outcome of a solve."""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration-limit"


@dataclass
class QpProblem:
    """
    Projection problem data.

    Attributes:
        desired: Desired vector u_hat, length dim
        A: (m, dim) constraint matrix, rows meaning a^T u <= b
        b: (m,) right-hand sides
        box: Per-component bound (||u||_inf <= box)
    """
    desired: np.ndarray
    A: np.ndarray
    b: np.ndarray
    box: float

    def __post_init__(self):
        self.desired = np.asarray(self.desired, dtype=float).ravel()
        dim = self.desired.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, dim)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[0] != self.b.shape[0]:
            raise InvalidInputError(f"{self.A.shape[0]} rows but {self.b.shape[0]} right-hand sides")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.desired))):
            raise InvalidInputError("Problem data must be finite")
        if not self.box > 0:
            raise InvalidInputError(f"box must be positive, got {self.box}")

    @classmethod
    def from_rows(
        cls,
        desired: Sequence[float],
        rows: Sequence[Tuple[Sequence[float], float]],
        box: float
    ) -> 'QpProblem':
        """Build from a list of (a, b) pairs."""
        dim = len(desired)
        if rows:
            A = np.array([np.asarray(a, dtype=float) for a, _ in rows])
            if A.shape[1] != dim:
                raise InvalidInputError(f"Row length {A.shape[1]} does not match dim {dim}")
            b = np.array([float(bb) for _, bb in rows])
        else:
            A = np.zeros((0, dim))
            b = np.zeros(0)
        return cls(np.asarray(desired, dtype=float), A, b, box)

    @property
    def dim(self) -> int:
        return self.desired.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def stacked(self) -> Tuple[np.ndarray, np.ndarray]:
        """Rows with the 2*dim box faces appended (+e_k, then -e_k, per k)."""
        eye = np.eye(self.dim)
        faces = np.empty((2 * self.dim, self.dim))
        faces[0::2] = eye
        faces[1::2] = -eye
        G = np.vstack((self.A, faces))
        h = np.concatenate((self.b, np.full(2 * self.dim, self.box)))
        return G, h


@dataclass
class QpSolution:
    """
    Solver result.

    Attributes:
        u_star: Projected command
        status: Solve outcome
        active_rows: Indices of problem rows (not box faces) active at u_star
        iterations: Dual sweeps performed
    """
    u_star: np.ndarray
    status: QpStatus
    active_rows: List[int] = field(default_factory=list)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def max_violation(G: np.ndarray, h: np.ndarray, u: np.ndarray) -> float:
    """Largest constraint residual max(G u - h), or 0 with no rows."""
    if G.shape[0] == 0:
        return 0.0
    return float(np.max(G @ u - h))


def _equality_projection(
    desired: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    rows: Sequence[int]
) -> Tuple[np.ndarray, np.ndarray]:
    """Project onto {u : G_W u = h_W}; returns (u, multipliers)."""
    if not rows:
        return desired.copy(), np.zeros(0)
    GW = G[list(rows)]
    rhs = GW @ desired - h[list(rows)]
    mu = np.linalg.solve(GW @ GW.T, rhs)
    return desired - GW.T @ mu, mu


def _independent(G: np.ndarray, rows: Sequence[int], candidate: int) -> bool:
    trial = list(rows) + [candidate]
    return np.linalg.matrix_rank(G[trial]) == len(trial)


def _independent_subset(G: np.ndarray, rows: Sequence[int]) -> List[int]:
    rows = list(rows)
    if not rows or np.linalg.matrix_rank(G[rows]) == len(rows):
        return rows
    working: List[int] = []
    for r in rows:
        if _independent(G, working, r):
            working.append(r)
    return working


def _polish(
    desired: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    start: Sequence[int]
) -> Optional[Tuple[np.ndarray, List[int]]]:
    """
    Active-set refinement from a guessed working set.

    Drops rows with negative multipliers and adds the most violated row until
    the KKT conditions hold. Returns None when it cannot certify a solution.
    """
    working = _independent_subset(G, start)

    for _ in range(2 * G.shape[0] + 10):
        try:
            u, mu = _equality_projection(desired, G, h, working)
        except np.linalg.LinAlgError:
            return None
        if mu.size and mu.min() < -1e-12:
            working.pop(int(np.argmin(mu)))
            continue
        residual = G @ u - h
        j = int(np.argmax(residual))
        if residual[j] <= EPS_FEAS:
            return u, working
        if j in working or not _independent(G, working, j):
            return None
        working.append(j)
    return None


def _dual_active_set(
    desired: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    max_steps: int
) -> Tuple[QpStatus, np.ndarray, int]:
    """
    Goldfarb-Idnani dual active-set method for the identity Hessian.

    Starts from the unconstrained minimizer and adds the most violated row
    each outer step. Working rows stay linearly independent: a row that
    depends on them is admitted by dual steps that swap a blocking row out.
    INFEASIBLE is returned only when a violated row can be reached by
    neither a primal nor a dual step, which is a Farkas certificate.

    Returns:
        (status, u, steps)
    """
    u = desired.copy()
    working: List[int] = []
    lam = np.zeros(0)
    steps = 0

    while True:
        residual = G @ u - h
        p = int(np.argmax(residual))
        if residual[p] <= EPS_FEAS:
            if working:
                # Re-solve on the final working set to shed accumulated drift
                exact, mu = _equality_projection(desired, G, h, working)
                if mu.min() >= -1e-12 and max_violation(G, h, exact) <= EPS_FEAS:
                    u = exact
            return QpStatus.OPTIMAL, u, steps

        g = G[p]
        gg = float(g @ g)
        lam_p = 0.0
        while True:
            steps += 1
            if steps > max_steps:
                return QpStatus.ITERATION_LIMIT, u, steps
            if working:
                GW = G[working]
                r = np.linalg.lstsq(GW.T, g, rcond=None)[0]
                z = g - GW.T @ r
            else:
                r = np.zeros(0)
                z = g

            t_dual = np.inf
            k = -1
            for idx in np.nonzero(r > 1e-12)[0]:
                t = lam[idx] / r[idx]
                if t < t_dual:
                    t_dual, k = float(t), int(idx)

            zz = float(z @ z)
            t_primal = float(g @ u - h[p]) / zz if zz > 1e-14 * gg else np.inf

            if np.isinf(t_dual) and np.isinf(t_primal):
                return QpStatus.INFEASIBLE, u, steps

            t = min(t_dual, t_primal)
            if not np.isinf(t_primal):
                u = u - t * z
            lam = lam - t * r
            lam_p += t
            if t_primal <= t_dual:
                working.append(p)
                lam = np.append(lam, lam_p)
                break
            working.pop(k)
            lam = np.delete(lam, k)


def _sparse_rows(G: np.ndarray) -> Tuple[List[List[int]], List[List[float]], List[float]]:
    rows_idx, cols_idx = np.nonzero(G)
    splits = np.searchsorted(rows_idx, np.arange(G.shape[0] + 1))
    cols: List[List[int]] = []
    vals: List[List[float]] = []
    norms: List[float] = []
    for r in range(G.shape[0]):
        c = cols_idx[splits[r]:splits[r + 1]]
        v = G[r, c]
        cols.append(c.tolist())
        vals.append(v.tolist())
        norms.append(float(v @ v))
    return cols, vals, norms


def _active_problem_rows(G: np.ndarray, h: np.ndarray, u: np.ndarray, m: int) -> List[int]:
    if m == 0:
        return []
    residual = G[:m] @ u - h[:m]
    return [int(i) for i in np.nonzero(residual >= -1e-9)[0]]


def solve(problem: QpProblem, max_sweeps: Optional[int] = None) -> QpSolution:
    """
    Project problem.desired onto the feasible polytope.

    Args:
        problem: Projection problem
        max_sweeps: Dual sweep budget, also the step cap of the exact
            fallback (default 10 * (rows + dim))

    Returns:
        QpSolution; status OPTIMAL guarantees every row holds to 1e-8,
        INFEASIBLE is only reported with a certificate of an empty polytope
    """
    G, h = problem.stacked()
    m = problem.n_rows
    desired = problem.desired

    # Minimal invasiveness: a feasible request is returned untouched
    if max_violation(G, h, desired) <= 0.0:
        return QpSolution(desired.copy(), QpStatus.OPTIMAL, _active_problem_rows(G, h, desired, m), 0)

    if max_sweeps is None:
        max_sweeps = max(10 * (G.shape[0] + problem.dim), 2 * STALL_SWEEPS)
    budget = max_sweeps
    cols, vals, norms = _sparse_rows(G)
    hs = h.tolist()
    lam = [0.0] * G.shape[0]
    u = desired.tolist()
    order = [r for r in range(G.shape[0]) if norms[r] > 0.0]

    best = np.inf
    stalled = 0
    sweeps = 0
    while sweeps < budget:
        sweeps += 1
        biggest = 0.0
        for r in order:
            c, v = cols[r], vals[r]
            s = 0.0
            for k, a in zip(c, v):
                s += a * u[k]
            old = lam[r]
            new = old + (s - hs[r]) / norms[r]
            if new < 0.0:
                new = 0.0
            d = new - old
            if d != 0.0:
                lam[r] = new
                for k, a in zip(c, v):
                    u[k] -= d * a
                if abs(d) > biggest:
                    biggest = abs(d)

        if biggest < EPS_DUAL:
            break

        if sweeps % POLISH_EVERY == 0:
            polished = _polish(desired, G, h, [r for r in range(len(lam)) if lam[r] > 0.0])
            if polished is not None:
                u_star, _ = polished
                return QpSolution(u_star, QpStatus.OPTIMAL, _active_problem_rows(G, h, u_star, m), sweeps)

        # Slow progress hands over to the exact solve; it never decides feasibility
        violation = max_violation(G, h, np.asarray(u))
        if violation > EPS_FEAS and violation > best * 0.99:
            stalled += 1
            if stalled >= STALL_SWEEPS:
                break
        else:
            stalled = 0
        best = min(best, violation)

    polished = _polish(desired, G, h, [r for r in range(len(lam)) if lam[r] > 0.0])
    if polished is not None:
        u_star, _ = polished
        return QpSolution(u_star, QpStatus.OPTIMAL, _active_problem_rows(G, h, u_star, m), sweeps)

    status, u_star, steps = _dual_active_set(desired, G, h, max_sweeps)
    sweeps += steps
    if status is QpStatus.OPTIMAL:
        return QpSolution(u_star, status, _active_problem_rows(G, h, u_star, m), sweeps)
    if status is QpStatus.INFEASIBLE:
        logger.debug("QP infeasible after %d sweeps", sweeps)
    else:
        logger.warning("QP hit the iteration limit (%d sweeps, dim=%d, rows=%d)", sweeps, problem.dim, m)
    return QpSolution(u_star, status, [], sweeps)


def solve_oracle(problem: QpProblem) -> QpSolution:
    """
    Exact projection by enumerating candidate active sets.

    Each linearly independent subset of rows (box faces included, never both
    faces of one coordinate) is tried in order of increasing size; the first
    point satisfying primal feasibility and non-negative multipliers is the
    unique minimizer of the strictly convex objective.

    Raises:
        QpSizeError: If dim > 8 or total rows > 20
    """
    G, h = problem.stacked()
    if problem.dim > ORACLE_MAX_DIM or G.shape[0] > ORACLE_MAX_ROWS:
        raise QpSizeError(
            f"Oracle limited to dim <= {ORACLE_MAX_DIM} and {ORACLE_MAX_ROWS} rows; "
            f"got dim={problem.dim}, rows={G.shape[0]}"
        )
    m = problem.n_rows
    desired = problem.desired
    tried = 0
    for size in range(problem.dim + 1):
        for subset in itertools.combinations(range(G.shape[0]), size):
            faces = [r - m for r in subset if r >= m]
            if len({f // 2 for f in faces}) != len(faces):
                continue
            if size and np.linalg.matrix_rank(G[list(subset)]) < size:
                continue
            tried += 1
            u, mu = _equality_projection(desired, G, h, subset)
            if mu.size and mu.min() < -1e-12:
                continue
            if max_violation(G, h, u) <= 1e-10:
                return QpSolution(u, QpStatus.OPTIMAL, _active_problem_rows(G, h, u, m), tried)
    return QpSolution(desired.copy(), QpStatus.INFEASIBLE, [], tried)
