"""
Controllers Module

Scenario controllers used to exercise the safety pipeline: go-to-goal,
waypoint following, position swap, weighted consensus (rendezvous) and a
cyclic polygon formation. Single-integrator controllers act on the
look-ahead point of each robot; waypoint following acts on the unicycle
pose directly.

Controllers are pure functions of (observed state, parameters). The only
progress they keep (which waypoint each robot is heading for) lives in an
explicit ControllerState that is passed in and returned.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError, InvalidParameterError
from .model import (
    DEFAULT_LIMITS,
    ModelLimits,
    RobotPose,
    SiCommand,
    UnicycleCommand,
    saturate_unicycle,
    wrap_angle,
)

DEFAULT_KP = 1.0
DEFAULT_K1 = 1.0
DEFAULT_K2 = 3.0
REACH_TOLERANCE = 0.005


class ControllerKind(Enum):
    """Available scenario controllers."""
    IDLE = "idle"
    GO_TO_GOAL = "go_to_goal"
    WAYPOINT_FOLLOW = "waypoint_follow"
    POSITION_SWAP = "position_swap"
    CONSENSUS = "consensus"
    CYCLIC_FORMATION = "cyclic_formation"


# Kinds whose output is a unicycle command rather than a planar velocity
UNICYCLE_KINDS = {ControllerKind.WAYPOINT_FOLLOW}


@dataclass
class ControllerSpec:
    """
    Declarative controller description.

    Attributes:
        kind: Which controller to run
        params: Kind-specific parameters (goals, routes, gains, weights, radius)
    """
    kind: ControllerKind
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind.value, 'params': self.params}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ControllerSpec':
        return cls(kind=ControllerKind(data['kind']), params=dict(data.get('params') or {}))


@dataclass(frozen=True)
class WaypointGains:
    """Polar waypoint controller gains and reach tolerance."""
    k1: float = DEFAULT_K1
    k2: float = DEFAULT_K2
    tolerance: float = REACH_TOLERANCE

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0 or self.tolerance <= 0:
            raise InvalidParameterError("Waypoint gains and tolerance must be positive")


@dataclass(frozen=True)
class ControllerState:
    """Waypoint progress per robot (index into its route)."""
    waypoint_index: Tuple[int, ...] = ()


def saturate_array(u: np.ndarray, alpha_bound: float) -> np.ndarray:
    """Clip each component of (N, 2) velocities to [-alpha_bound, alpha_bound]."""
    return np.clip(u, -alpha_bound, alpha_bound)


def _rotate90(v: np.ndarray) -> np.ndarray:
    return np.column_stack((-v[:, 1], v[:, 0]))


def go_to_goal(
    x_i: Sequence[float],
    goal: Sequence[float],
    k_p: float = DEFAULT_KP,
    alpha_bound: float = 0.1
) -> SiCommand:
    """u_i = k_p (goal - x_i), saturated."""
    e = np.asarray(goal, dtype=float) - np.asarray(x_i, dtype=float)
    u = np.clip(k_p * e, -alpha_bound, alpha_bound)
    return SiCommand(float(u[0]), float(u[1]))


def go_to_goal_array(
    positions: np.ndarray,
    goals: np.ndarray,
    k_p: float = DEFAULT_KP,
    alpha_bound: float = 0.1,
    circulation: float = 0.0
) -> np.ndarray:
    """
    Vectorized go-to-goal with an optional circulation term.

    u_i = k_p e_i + circulation * J e_i with e_i = goal_i - x_i and J the
    counter-clockwise quarter turn; the closed loop is a stable spiral.
    """
    e = np.asarray(goals, dtype=float) - np.asarray(positions, dtype=float)
    u = k_p * e
    if circulation:
        u = u + circulation * _rotate90(e)
    return saturate_array(u, alpha_bound)


def waypoint_follow(
    pose: RobotPose,
    waypoint: Sequence[float],
    gains: WaypointGains = WaypointGains(),
    limits: ModelLimits = DEFAULT_LIMITS
) -> UnicycleCommand:
    """
    Polar-coordinate waypoint controller.

    With e the distance and a the bearing error to the waypoint:
        v = k1 e cos(a),  w = k2 a + k1 sin(a) cos(a)
    Inside the reach tolerance the command is zero.
    """
    dx = float(waypoint[0]) - pose.x1
    dy = float(waypoint[1]) - pose.x2
    e = math.hypot(dx, dy)
    if e < gains.tolerance:
        return UnicycleCommand(0.0, 0.0)
    a = wrap_angle(math.atan2(dy, dx) - pose.x3)
    v = gains.k1 * e * math.cos(a)
    w = gains.k2 * a + gains.k1 * math.sin(a) * math.cos(a)
    return saturate_unicycle(UnicycleCommand(v, w), limits)


def follow_routes(
    poses: np.ndarray,
    routes: Sequence[Sequence[Sequence[float]]],
    state: ControllerState,
    gains: WaypointGains = WaypointGains(),
    limits: ModelLimits = DEFAULT_LIMITS,
    loop: bool = False
) -> Tuple[np.ndarray, ControllerState]:
    """
    Waypoint following for every robot, advancing routes on arrival.

    Returns:
        ((N, 2) [v, w] commands, updated ControllerState)
    """
    n = poses.shape[0]
    index = list(state.waypoint_index) if state.waypoint_index else [0] * n
    cmds = np.zeros((n, 2))
    for i in range(n):
        route = routes[i]
        if not route:
            continue
        pose = RobotPose(*poses[i])
        for _ in range(len(route)):
            wp = route[index[i]]
            if math.hypot(wp[0] - pose.x1, wp[1] - pose.x2) >= gains.tolerance:
                break
            if index[i] < len(route) - 1:
                index[i] += 1
            elif loop:
                index[i] = 0
            else:
                break
        cmd = waypoint_follow(pose, route[index[i]], gains, limits)
        cmds[i] = (cmd.v, cmd.w)
    return cmds, ControllerState(tuple(index))


def _check_weights(weights: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n, n):
        raise InvalidInputError(f"Weight matrix must be {n}x{n}, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidInputError("Weights must be finite and non-negative")
    if not np.allclose(w, w.T):
        raise InvalidInputError("Weight graph must be symmetric")
    return w


def complete_graph(n: int, weight: float = 1.0) -> np.ndarray:
    """Uniform weights between every pair, zero diagonal."""
    return weight * (np.ones((n, n)) - np.eye(n))


def consensus(positions: np.ndarray, weights: np.ndarray, alpha_bound: float = 0.1) -> np.ndarray:
    """u_i = sum_j w_ij (x_j - x_i), saturated."""
    x = np.asarray(positions, dtype=float)
    w = _check_weights(weights, x.shape[0])
    u = w @ x - w.sum(axis=1)[:, None] * x
    return saturate_array(u, alpha_bound)


def cyclic_formation(
    positions: np.ndarray,
    radius: float,
    rotation_gain: float = 0.0,
    k_r: float = 1.0,
    k_t: float = 1.0,
    alpha_bound: float = 0.1
) -> np.ndarray:
    """
    Drive N >= 3 agents onto a regular N-gon of the given radius about their centroid.

    Each agent regulates its distance to the centroid (radial term) and moves
    toward the larger of its two angular gaps to the cyclic neighbors
    (tangential term); a common rotation_gain spins the whole polygon.
    """
    x = np.asarray(positions, dtype=float)
    n = x.shape[0]
    if n < 3:
        raise InvalidInputError(f"cyclic formation needs at least 3 agents, got {n}")
    if radius <= 0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")

    rel = x - x.mean(axis=0)
    rho = np.linalg.norm(rel, axis=1)
    fallback = 2.0 * np.pi * np.arange(n) / n
    safe = rho > 1e-9
    radial = np.where(
        safe[:, None],
        rel / np.where(safe, rho, 1.0)[:, None],
        np.column_stack((np.cos(fallback), np.sin(fallback)))
    )
    tangent = _rotate90(radial)
    phi = np.arctan2(radial[:, 1], radial[:, 0])

    order = np.argsort(phi, kind='stable')
    sorted_phi = phi[order]
    ahead = np.mod(np.roll(sorted_phi, -1) - sorted_phi, 2.0 * np.pi)
    behind = np.roll(ahead, 1)
    imbalance = np.empty(n)
    imbalance[order] = (ahead - behind) / 2.0

    u = (k_r * (radius - rho))[:, None] * radial
    u += (k_t * radius * imbalance + rotation_gain * radius)[:, None] * tangent
    return saturate_array(u, alpha_bound)


def check_assignment(assignment: Sequence[int], n: int) -> List[int]:
    """Return the assignment as a list, raising InvalidInputError unless it permutes 0..n-1."""
    perm = [int(a) for a in assignment]
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise InvalidInputError(f"Assignment {perm} is not a permutation of 0..{n - 1}")
    return perm


def antipodal_assignment(n: int) -> List[int]:
    """Robot i goes to the start of robot (i + n // 2) mod n."""
    return [(i + n // 2) % n for i in range(n)]


def position_swap(
    positions: np.ndarray,
    start_positions: np.ndarray,
    assignment: Sequence[int],
    k_p: float = DEFAULT_KP,
    alpha_bound: float = 0.1,
    circulation: float = 0.0
) -> np.ndarray:
    """Each robot runs go-to-goal toward the start position of its assigned robot."""
    x = np.asarray(positions, dtype=float)
    perm = check_assignment(assignment, x.shape[0])
    goals = np.asarray(start_positions, dtype=float)[perm]
    return go_to_goal_array(x, goals, k_p, alpha_bound, circulation)


class Controller:
    """
    Callable wrapper binding a ControllerSpec to a scenario.

    Args:
        spec: Controller description
        start_points: (N, 2) initial look-ahead points (swap targets)
        alpha_bound: Planar command bound
        limits: Unicycle limits for waypoint following
    """

    def __init__(
        self,
        spec: ControllerSpec,
        start_points: np.ndarray,
        alpha_bound: float = 0.1,
        limits: ModelLimits = DEFAULT_LIMITS
    ):
        self.spec = spec
        self.kind = spec.kind
        self.start_points = np.asarray(start_points, dtype=float).copy()
        self.n = self.start_points.shape[0]
        self.alpha_bound = alpha_bound
        self.limits = limits
        p = spec.params

        self.k_p = float(p.get('k_p', DEFAULT_KP))
        self.circulation = float(p.get('circulation', 0.0))
        if self.kind is ControllerKind.GO_TO_GOAL:
            goals = np.asarray(p['goals'], dtype=float).reshape(-1, 2)
            if goals.shape[0] != self.n:
                raise InvalidInputError(f"{goals.shape[0]} goals for {self.n} robots")
            self.goals = goals
        elif self.kind is ControllerKind.POSITION_SWAP:
            assignment = p.get('assignment', 'antipodal')
            if assignment == 'antipodal':
                assignment = antipodal_assignment(self.n)
            self.assignment = check_assignment(assignment, self.n)
        elif self.kind is ControllerKind.CONSENSUS:
            weights = p.get('weights', 'complete')
            self.weights = complete_graph(self.n) if weights == 'complete' else _check_weights(weights, self.n)
        elif self.kind is ControllerKind.CYCLIC_FORMATION:
            self.radius = float(p['radius'])
            self.rotation_gain = float(p.get('rotation_gain', 0.0))
        elif self.kind is ControllerKind.WAYPOINT_FOLLOW:
            self.routes = self._routes(p)
            self.gains = WaypointGains(
                k1=float(p.get('k1', DEFAULT_K1)),
                k2=float(p.get('k2', DEFAULT_K2)),
                tolerance=float(p.get('tolerance', REACH_TOLERANCE)),
            )
            self.loop = bool(p.get('loop', False))

    def _routes(self, p: Dict[str, Any]) -> List[List[List[float]]]:
        if 'routes' in p:
            routes = [[list(map(float, wp)) for wp in route] for route in p['routes']]
        else:
            shared = [list(map(float, wp)) for wp in p['waypoints']]
            routes = [shared for _ in range(self.n)]
        if len(routes) != self.n:
            raise InvalidInputError(f"{len(routes)} routes for {self.n} robots")
        return routes

    @property
    def unicycle_output(self) -> bool:
        return self.kind in UNICYCLE_KINDS

    def initial_state(self) -> ControllerState:
        return ControllerState(tuple([0] * self.n)) if self.unicycle_output else ControllerState()

    def __call__(
        self,
        poses: np.ndarray,
        points: np.ndarray,
        state: ControllerState
    ) -> Tuple[np.ndarray, ControllerState]:
        """
        Compute commands from observed poses and look-ahead points.

        Returns:
            ((N, 2) commands: planar velocities, or [v, w] for unicycle kinds; new state)
        """
        kind = self.kind
        if kind is ControllerKind.IDLE:
            return np.zeros((self.n, 2)), state
        if kind is ControllerKind.GO_TO_GOAL:
            u = go_to_goal_array(points, self.goals, self.k_p, self.alpha_bound, self.circulation)
        elif kind is ControllerKind.POSITION_SWAP:
            u = position_swap(points, self.start_points, self.assignment, self.k_p,
                              self.alpha_bound, self.circulation)
        elif kind is ControllerKind.CONSENSUS:
            u = consensus(points, self.weights, self.alpha_bound)
        elif kind is ControllerKind.CYCLIC_FORMATION:
            u = cyclic_formation(points, self.radius, self.rotation_gain, alpha_bound=self.alpha_bound)
        else:
            return follow_routes(poses, self.routes, state, self.gains, self.limits, self.loop)
        return u, state

    def targets(self) -> Optional[np.ndarray]:
        """Goal points for go-to-goal and position swap, else None."""
        if self.kind is ControllerKind.GO_TO_GOAL:
            return self.goals.copy()
        if self.kind is ControllerKind.POSITION_SWAP:
            return self.start_points[self.assignment].copy()
        return None
