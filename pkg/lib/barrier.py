"""
Barrier Certificate Module

Builds the pairwise and workspace-boundary barrier constraints for
single-integrator robots and filters desired commands through the
minimally invasive QP, either for the whole swarm at once (centralized)
or as one two-variable QP per robot over its neighbors (decentralized).
Also provides the certificate-computation benchmark.
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, UnsafeStartError
from .qp_solver import QpProblem, QpStatus, solve

logger = logging.getLogger(__name__)

DEFAULT_DS = 0.08
DEFAULT_GAMMA = 1.0
DEFAULT_ALPHA_BOUND = 0.1
DEFAULT_NEIGHBOR_RADIUS = 0.20

# Geometric cap on robots inside one neighborhood (ds = 0.08, radius = 0.20)
MAX_NEIGHBORS = 26

# Tolerance on the strict safe-set check at construction time
UNSAFE_TOLERANCE = 1e-9

BOUNDARY_FACES = ('left', 'right', 'bottom', 'top')


class FilterMode(Enum):
    """Where barrier certificates are computed."""
    OFF = "off"
    CENTRALIZED = "centralized"
    DECENTRALIZED = "decentralized"


class FilterStatus(Enum):
    """Outcome of one filter call."""
    OK = "ok"
    EMERGENCY_STOP = "emergency-stop"
    PARTIAL_STOP = "partial-stop"


@dataclass(frozen=True)
class BarrierParams:
    """
    Barrier certificate parameters.

    Attributes:
        ds: Minimum safety distance D_s (m)
        gamma: Barrier gain (1/s)
        alpha_bound: Per-component command bound (m/s)
        neighbor_radius: Pairs farther apart get no row (m); math.inf keeps all pairs
        boundary_margin: Keep-out band inside each wall (m); None means ds / 2
    """
    ds: float = DEFAULT_DS
    gamma: float = DEFAULT_GAMMA
    alpha_bound: float = DEFAULT_ALPHA_BOUND
    neighbor_radius: float = DEFAULT_NEIGHBOR_RADIUS
    boundary_margin: Optional[float] = None

    def __post_init__(self):
        if self.ds <= 0:
            raise InvalidParameterError(f"ds must be positive, got {self.ds}")
        if self.gamma <= 0:
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma}")
        if self.alpha_bound <= 0:
            raise InvalidParameterError(f"alpha_bound must be positive, got {self.alpha_bound}")
        if self.neighbor_radius < self.ds:
            raise InvalidParameterError(
                f"neighbor_radius ({self.neighbor_radius}) must be at least ds ({self.ds})"
            )
        if self.boundary_margin is None:
            object.__setattr__(self, 'boundary_margin', self.ds / 2.0)
        elif self.boundary_margin < 0:
            raise InvalidParameterError(f"boundary_margin must be non-negative, got {self.boundary_margin}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'ds': self.ds,
            'gamma': self.gamma,
            'alpha_bound': self.alpha_bound,
            'neighbor_radius': None if math.isinf(self.neighbor_radius) else self.neighbor_radius,
            'boundary_margin': self.boundary_margin,
        }


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned rectangular arena (m); defaults to 1.30 x 0.90 m centered on the origin."""
    xmin: float = -0.65
    xmax: float = 0.65
    ymin: float = -0.45
    ymax: float = 0.45

    def validate(self, ds: float):
        """Raise InvalidParameterError unless both sides exceed 2 * ds."""
        if self.xmax - self.xmin <= 2 * ds or self.ymax - self.ymin <= 2 * ds:
            raise InvalidParameterError(
                f"Workspace {self.width:.3f} x {self.height:.3f} m is too small for ds={ds}"
            )

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, positions: np.ndarray) -> np.ndarray:
        """Boolean mask of positions inside the rectangle (closed)."""
        p = np.asarray(positions, dtype=float).reshape(-1, 2)
        return ((p[:, 0] >= self.xmin) & (p[:, 0] <= self.xmax)
                & (p[:, 1] >= self.ymin) & (p[:, 1] <= self.ymax))

    def to_dict(self) -> Dict[str, float]:
        return {'xmin': self.xmin, 'xmax': self.xmax, 'ymin': self.ymin, 'ymax': self.ymax}


@dataclass(frozen=True)
class ConstraintRow:
    """Provenance of one constraint row: ('pairwise', (i, j)) or ('boundary', (i, face))."""
    kind: str
    robots: Tuple[int, ...]
    face: Optional[str] = None


@dataclass
class ConstraintSet:
    """
    Linear inequality rows A u <= b over the stacked command u in R^{2N}.

    Attributes:
        A: (m, 2N) matrix
        b: (m,) right-hand sides
        rows: Provenance of each row, same order as A
    """
    A: np.ndarray
    b: np.ndarray
    rows: List[ConstraintRow] = field(default_factory=list)

    @property
    def n_pairwise(self) -> int:
        return sum(1 for r in self.rows if r.kind == 'pairwise')

    @property
    def n_boundary(self) -> int:
        return sum(1 for r in self.rows if r.kind == 'boundary')

    def slack(self, u: np.ndarray) -> np.ndarray:
        """b - A u for a stacked (2N,) or (N, 2) command."""
        return self.b - self.A @ np.asarray(u, dtype=float).ravel()

    def satisfied_by(self, u: np.ndarray, tol: float = 1e-8) -> bool:
        return bool(np.all(self.slack(u) >= -tol))


@dataclass
class FilterResult:
    """
    Filtered commands and diagnostics.

    Attributes:
        commands: (N, 2) safe single-integrator commands
        status: OK, EMERGENCY_STOP (all zero) or PARTIAL_STOP (some agents zeroed)
        stopped: Indices of robots commanded to zero by a failed solve
        n_rows: Pairwise rows enforced (all agents' rows in decentralized mode)
        message: Diagnostic text when status is not OK
    """
    commands: np.ndarray
    status: FilterStatus = FilterStatus.OK
    stopped: List[int] = field(default_factory=list)
    n_rows: int = 0
    message: str = ""


def h_pairwise(xi: Sequence[float], xj: Sequence[float], ds: float) -> float:
    """Pairwise barrier ||xi - xj||^2 - ds^2 (m^2)."""
    e = np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)
    return float(e @ e - ds * ds)


def _as_positions(state_or_positions: Any) -> np.ndarray:
    positions = getattr(state_or_positions, 'positions', state_or_positions)
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[1] != 2:
        raise InvalidInputError(f"positions must have shape (N, 2), got {positions.shape}")
    if not np.all(np.isfinite(positions)):
        raise InvalidInputError("positions must be finite")
    return positions


def _as_commands(desired: Any, n: int) -> np.ndarray:
    if isinstance(desired, np.ndarray):
        u = np.asarray(desired, dtype=float).reshape(-1, 2)
    else:
        u = np.array([[c.ux, c.uy] for c in desired], dtype=float).reshape(-1, 2)
    if u.shape[0] != n:
        raise InvalidInputError(f"Expected {n} commands, got {u.shape[0]}")
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("commands must be finite")
    return u


def neighbor_pairs(positions: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unordered pairs (i < j) within radius, with their squared distances."""
    diff = positions[:, None, :] - positions[None, :, :]
    dist2 = np.einsum('ijk,ijk->ij', diff, diff)
    i, j = np.triu_indices(positions.shape[0], k=1)
    if math.isinf(radius):
        return i, j, dist2[i, j]
    keep = dist2[i, j] <= radius * radius
    return i[keep], j[keep], dist2[i, j][keep]


def check_safe_start(positions: np.ndarray, params: BarrierParams, ws: Workspace, tolerance: float = UNSAFE_TOLERANCE):
    """
    Raise UnsafeStartError if a robot lies outside the workspace or a pair is closer than ds.
    """
    positions = _as_positions(positions)
    outside = [int(k) for k in np.nonzero(~ws.contains(positions))[0]]
    i, j, d2 = neighbor_pairs(positions, params.ds)
    close = d2 < (params.ds - tolerance) ** 2
    pairs = [(int(a), int(b)) for a, b in zip(i[close], j[close])]
    if outside or pairs:
        parts = []
        if outside:
            parts.append(f"robots outside workspace: {outside}")
        if pairs:
            parts.append(f"pairs closer than ds={params.ds}: {pairs}")
        logger.error("Unsafe start: %s", "; ".join(parts))
        raise UnsafeStartError("Unsafe start: " + "; ".join(parts), pairs=pairs, outside=outside)


def _boundary_block(x: float, y: float, ws: Workspace, params: BarrierParams) -> Tuple[np.ndarray, np.ndarray]:
    g, m = params.gamma, params.boundary_margin
    a = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
    b = g * np.array([
        x - ws.xmin - m,
        ws.xmax - m - x,
        y - ws.ymin - m,
        ws.ymax - m - y,
    ])
    return a, b


def build_constraints(
    state: Any,
    params: BarrierParams,
    ws: Workspace,
    strict: bool = True
) -> ConstraintSet:
    """
    Assemble the barrier certificate rows for the current positions.

    One row per unordered pair within neighbor_radius:
        a = [.., -2 (x_i - x_j)^T (block i), .., 2 (x_i - x_j)^T (block j), ..],
        b = gamma * h_ij(x)
    plus four boundary rows per robot (left, right, bottom, top).

    Args:
        state: SwarmState or (N, 2) positions
        params: Barrier parameters
        ws: Workspace
        strict: Raise UnsafeStartError on unsafe configurations; when False,
            slightly unsafe states simply yield restoring rows (b < 0)

    Raises:
        UnsafeStartError: Robot outside the workspace or pair closer than ds (strict only)
    """
    positions = _as_positions(state)
    if strict:
        check_safe_start(positions, params, ws)
    n = positions.shape[0]
    i, j, d2 = neighbor_pairs(positions, params.neighbor_radius)
    n_pairs = i.shape[0]

    A = np.zeros((n_pairs + 4 * n, 2 * n))
    b = np.empty(n_pairs + 4 * n)
    e = positions[i] - positions[j]
    rows_p = np.arange(n_pairs)
    A[rows_p, 2 * i] = -2.0 * e[:, 0]
    A[rows_p, 2 * i + 1] = -2.0 * e[:, 1]
    A[rows_p, 2 * j] = 2.0 * e[:, 0]
    A[rows_p, 2 * j + 1] = 2.0 * e[:, 1]
    b[:n_pairs] = params.gamma * (d2 - params.ds ** 2)
    rows = [ConstraintRow('pairwise', (int(a), int(c))) for a, c in zip(i, j)]

    for k in range(n):
        block_a, block_b = _boundary_block(positions[k, 0], positions[k, 1], ws, params)
        r0 = n_pairs + 4 * k
        A[r0:r0 + 4, 2 * k:2 * k + 2] = block_a
        b[r0:r0 + 4] = block_b
        rows.extend(ConstraintRow('boundary', (k,), face) for face in BOUNDARY_FACES)

    return ConstraintSet(A, b, rows)


def filter_centralized(
    state: Any,
    desired: Any,
    params: BarrierParams,
    ws: Workspace,
    strict: bool = True
) -> FilterResult:
    """
    Minimally invasive projection of the stacked command onto K(x).

    An infeasible or unfinished QP yields an emergency stop (all-zero commands).
    """
    positions = _as_positions(state)
    n = positions.shape[0]
    u_hat = _as_commands(desired, n)
    cs = build_constraints(positions, params, ws, strict=strict)
    solution = solve(QpProblem(u_hat.ravel(), cs.A, cs.b, params.alpha_bound))
    if solution.status is not QpStatus.OPTIMAL:
        message = f"centralized QP {solution.status.value} after {solution.iterations} sweeps"
        logger.warning("Emergency stop: %s", message)
        return FilterResult(np.zeros((n, 2)), FilterStatus.EMERGENCY_STOP, list(range(n)), cs.n_pairwise, message)
    return FilterResult(solution.u_star.reshape(n, 2), FilterStatus.OK, [], cs.n_pairwise)


def agent_problem(
    k: int,
    positions: np.ndarray,
    u_hat: np.ndarray,
    params: BarrierParams,
    ws: Workspace,
    neighbors: Sequence[int]
) -> QpProblem:
    """Two-variable QP of robot k with half of each pairwise responsibility."""
    xk = positions[k]
    nb = np.asarray(list(neighbors), dtype=int)
    e = xk - positions[nb] if nb.size else np.zeros((0, 2))
    a_pair = -2.0 * e
    b_pair = 0.5 * params.gamma * (np.einsum('ij,ij->i', e, e) - params.ds ** 2)
    a_bnd, b_bnd = _boundary_block(xk[0], xk[1], ws, params)
    A = np.vstack((a_pair, a_bnd))
    b = np.concatenate((b_pair, b_bnd))
    return QpProblem(u_hat[k], A, b, params.alpha_bound)


def neighbor_lists(positions: np.ndarray, radius: float) -> List[List[int]]:
    """Neighbors of each robot within radius (excluding itself), sorted by index."""
    i, j, _ = neighbor_pairs(positions, radius)
    lists: List[List[int]] = [[] for _ in range(positions.shape[0])]
    for a, c in zip(i.tolist(), j.tolist()):
        lists[a].append(c)
        lists[c].append(a)
    for nb in lists:
        nb.sort()
    return lists


def filter_decentralized(
    state: Any,
    desired: Any,
    params: BarrierParams,
    ws: Workspace,
    strict: bool = True
) -> FilterResult:
    """
    Per-robot filtering over neighbors with an equal responsibility split.

    Robot i enforces -2 (x_i - x_j)^T u_i <= (gamma / 2) h_ij for each neighbor j,
    so the two halves add up to the centralized row. A robot whose QP fails
    is commanded to zero; the others are unaffected.
    """
    positions = _as_positions(state)
    n = positions.shape[0]
    u_hat = _as_commands(desired, n)
    if strict:
        check_safe_start(positions, params, ws)
    neighbors = neighbor_lists(positions, params.neighbor_radius)

    commands = np.zeros((n, 2))
    stopped: List[int] = []
    n_rows = 0
    for k in range(n):
        n_rows += len(neighbors[k])
        solution = solve(agent_problem(k, positions, u_hat, params, ws, neighbors[k]))
        if solution.status is QpStatus.OPTIMAL:
            commands[k] = solution.u_star
        else:
            stopped.append(k)

    if stopped:
        message = f"agents {stopped} stopped after failed local QP"
        logger.warning("Partial stop: %s", message)
        return FilterResult(commands, FilterStatus.PARTIAL_STOP, stopped, n_rows, message)
    return FilterResult(commands, FilterStatus.OK, [], n_rows)


def apply_filter(mode: FilterMode, state: Any, desired: Any, params: BarrierParams, ws: Workspace,
                 strict: bool = True) -> FilterResult:
    """Dispatch on FilterMode; OFF passes the request through unchanged."""
    if mode is FilterMode.CENTRALIZED:
        return filter_centralized(state, desired, params, ws, strict)
    if mode is FilterMode.DECENTRALIZED:
        return filter_decentralized(state, desired, params, ws, strict)
    positions = _as_positions(state)
    return FilterResult(_as_commands(desired, positions.shape[0]).copy())


def control_point_params(params: BarrierParams, lookahead: float, clearance: float = 0.0) -> BarrierParams:
    """
    Certificate parameters for look-ahead points of unicycles.

    Inflating ds by 2 * (lookahead + clearance) and the margin by
    lookahead + clearance keeps the wheel-axis centers at least ds apart
    (ds + 2 * clearance when headings line up) and the bodies off the walls.
    """
    if lookahead <= 0 or clearance < 0:
        raise InvalidParameterError("lookahead must be positive and clearance non-negative")
    pad = lookahead + clearance
    return replace(
        params,
        ds=params.ds + 2.0 * pad,
        neighbor_radius=params.neighbor_radius + 2.0 * pad,
        boundary_margin=params.boundary_margin + pad,
    )


# ----------------------------------------------------------------------------
# Certificate computation benchmark
# ----------------------------------------------------------------------------

@dataclass
class BenchmarkRow:
    """Per-iteration timing for one (N, mode) cell; decentralized values are T_d / N."""
    n: int
    mode: str
    ms_mean: float
    ms_p95: float
    ms_min: float
    ms_max: float
    iters: int

    @property
    def hz(self) -> float:
        return 1000.0 / self.ms_mean if self.ms_mean > 0 else math.inf

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'mode': self.mode,
            'ms_mean': self.ms_mean,
            'ms_p95': self.ms_p95,
            'ms_min': self.ms_min,
            'ms_max': self.ms_max,
            'hz': self.hz,
            'iters': self.iters,
        }


def dense_positions(
    n: int,
    params: BarrierParams,
    rng: np.random.Generator,
    spacing: Optional[float] = None,
    jitter: float = 0.25
) -> np.ndarray:
    """
    Dense, safe configuration at constant density.

    Robots occupy a jittered hexagonal lattice with nearest-neighbor spacing
    `spacing` (default 1.5 * ds), filled in random order, and every pair is
    at least ds apart.
    """
    spacing = spacing if spacing is not None else 1.5 * params.ds
    jitter_amp = jitter * (spacing - params.ds) / 2.0
    cols = int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    lattice = []
    for r in range(rows + 1):
        for c in range(cols + 1):
            lattice.append(((c + 0.5 * (r % 2)) * spacing, r * spacing * math.sqrt(3) / 2))
    lattice = np.array(lattice)
    chosen = lattice[np.sort(rng.permutation(len(lattice))[:n])]
    chosen = chosen + rng.uniform(-jitter_amp, jitter_amp, size=chosen.shape)
    return chosen - chosen.mean(axis=0)


def _workspace_around(positions: np.ndarray, params: BarrierParams) -> Workspace:
    pad = params.boundary_margin + params.ds
    lo = positions.min(axis=0) - pad
    hi = positions.max(axis=0) + pad
    return Workspace(lo[0], hi[0], lo[1], hi[1])


def _percentile(values: List[float], p: float) -> float:
    ordered = sorted(values)
    rank = max(1, int(math.ceil(p / 100.0 * len(ordered))))
    return ordered[rank - 1]


def benchmark_certificates(
    n_list: Sequence[int],
    mode: FilterMode,
    iters: int = 20,
    seed: int = 0,
    params: Optional[BarrierParams] = None
) -> List[BenchmarkRow]:
    """
    Time one certificate computation per iteration on random dense states.

    Each iteration draws a fresh dense configuration and random in-box
    commands; only the filter call is timed. Decentralized times are the
    total over all agents divided by N.
    """
    if not n_list:
        raise InvalidParameterError("n_list must not be empty")
    if mode is FilterMode.OFF:
        raise InvalidParameterError("benchmark needs a centralized or decentralized mode")
    params = params or BarrierParams()
    rng = np.random.default_rng(seed)
    table: List[BenchmarkRow] = []
    for n in n_list:
        samples: List[float] = []
        for _ in range(iters):
            positions = dense_positions(n, params, rng)
            ws = _workspace_around(positions, params)
            desired = rng.uniform(-params.alpha_bound, params.alpha_bound, size=(n, 2))
            start = time.perf_counter()
            apply_filter(mode, positions, desired, params, ws, strict=False)
            elapsed_ms = (time.perf_counter() - start) * 1000.0
            if mode is FilterMode.DECENTRALIZED:
                elapsed_ms /= n
            samples.append(elapsed_ms)
        row = BenchmarkRow(
            n=int(n),
            mode=mode.value,
            ms_mean=float(np.mean(samples)),
            ms_p95=_percentile(samples, 95),
            ms_min=float(min(samples)),
            ms_max=float(max(samples)),
            iters=iters,
        )
        logger.info("benchmark N=%d %s: %.3f ms/iter", n, mode.value, row.ms_mean)
        table.append(row)
    return table


BENCHMARK_COLUMNS = ['n', 'mode', 'ms_mean', 'ms_p95', 'ms_min', 'ms_max', 'hz']


def format_benchmark_table(rows: Sequence[BenchmarkRow]) -> str:
    """Plain-text table of benchmark rows."""
    lines = [f"{'N':>5}  {'mode':<14} {'ms_mean':>9} {'ms_p95':>9} {'ms_min':>9} {'ms_max':>9} {'Hz':>9}"]
    lines.append("-" * len(lines[0]))
    for r in rows:
        lines.append(
            f"{r.n:>5}  {r.mode:<14} {r.ms_mean:>9.3f} {r.ms_p95:>9.3f} "
            f"{r.ms_min:>9.3f} {r.ms_max:>9.3f} {r.hz:>9.1f}"
        )
    return "\n".join(lines)


def write_benchmark_csv(rows: Sequence[BenchmarkRow], filepath: str, header: Optional[Dict[str, Any]] = None):
    """Write benchmark rows as CSV, preceded by '# key: value' provenance lines."""
    with open(filepath, 'w', newline='') as f:
        for key, value in (header or {}).items():
            f.write(f"# {key}: {value}\n")
        writer = csv.DictWriter(f, fieldnames=BENCHMARK_COLUMNS, extrasaction='ignore')
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.to_dict().items()})
