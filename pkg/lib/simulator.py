"""
Simulator Module

Deterministic closed-loop simulation of a unicycle swarm. Each tick:

    observe (noisy) -> controller -> optional barrier filter
        -> single-integrator to unicycle map -> Euler step -> contact resolution -> log

Planar controllers and the barrier filter act on look-ahead points; the
filter certificate is inflated so that robot bodies (discs on the wheel
axis) keep the configured safety distance.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, Iterator, List, Optional

import numpy as np

from . import __version__
from . import rng as rngmod
from .barrier import (
    FilterMode,
    FilterStatus,
    Workspace,
    apply_filter,
    check_safe_start,
    control_point_params,
    neighbor_pairs,
)
from .controllers import Controller
from .errors import ControllerError, InvalidParameterError, UnsafeStartError
from .model import (
    SwarmState,
    control_points,
    si_to_uni_array,
    si_to_uni_scaled,
    unicycle_rates,
    uni_to_si_array,
    wrap_angle,
)

if TYPE_CHECKING:
    from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)

ROBOT_MASS = 0.06
CONTACT_TOLERANCE = 1e-9
DEPENETRATION_PASSES = 4

# Extra gap the filter keeps between bodies beyond ds, absorbing noise
CONTROL_POINT_CLEARANCE = 0.01


@dataclass(frozen=True)
class NoiseModel:
    """
    Gaussian perturbations of one rollout.

    Attributes:
        sigma_dynamics: Std. dev. added to each pose-rate component (m/s, rad/s)
        sigma_init: Std. dev. of the initial position perturbation (m)
        sigma_obs: Std. dev. of position observations fed to controllers (m)
        seed: Seed determining every draw
    """
    sigma_dynamics: float = 0.0
    sigma_init: float = 0.0
    sigma_obs: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ('sigma_dynamics', 'sigma_init', 'sigma_obs'):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")

    @property
    def silent(self) -> bool:
        return self.sigma_dynamics == 0 and self.sigma_init == 0 and self.sigma_obs == 0

    def with_seed(self, seed: int) -> 'NoiseModel':
        return replace(self, seed=int(seed))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sigma_dynamics': self.sigma_dynamics,
            'sigma_init': self.sigma_init,
            'sigma_obs': self.sigma_obs,
            'seed': self.seed,
        }


NO_NOISE = NoiseModel()

# Used when a scenario has no noise section
DEFAULT_NOISE = NoiseModel(sigma_dynamics=0.005, sigma_init=0.01, sigma_obs=0.002)


@dataclass(frozen=True)
class CollisionModel:
    """
    Planar disc contact model (perfectly inelastic).

    Attributes:
        robot_radius: Disc radius (m); scenarios default it to ds / 2
        mass: Robot mass (kg)
    """
    robot_radius: float = 0.04
    mass: float = ROBOT_MASS

    def validate(self, ds: float):
        if self.robot_radius <= 0 or self.mass <= 0:
            raise InvalidParameterError("robot_radius and mass must be positive")
        if 2 * self.robot_radius > ds + 1e-12:
            raise InvalidParameterError(
                f"2 * robot_radius ({2 * self.robot_radius}) must not exceed ds ({ds})"
            )

    def to_dict(self) -> Dict[str, float]:
        return {'robot_radius': self.robot_radius, 'mass': self.mass}


@dataclass
class ContactResult:
    """
    Outcome of contact resolution for one tick.

    Attributes:
        positions: De-penetrated (N, 2) positions
        velocities: (N, 2) velocities with interpenetrating components removed
        indicators: (N,) 1 where a robot touched another robot or a wall
        energy_loss: (N,) kinetic energy lost in contact (J), (m/2)(|v_before|^2 - |v_after|^2)
        robot_contacts: (i, j) pairs in contact
    """
    positions: np.ndarray
    velocities: np.ndarray
    indicators: np.ndarray
    energy_loss: np.ndarray
    robot_contacts: List[tuple] = field(default_factory=list)


def resolve_contacts(
    positions: np.ndarray,
    velocities: np.ndarray,
    ws: Workspace,
    collision: CollisionModel = CollisionModel(),
    prior_speed: Optional[np.ndarray] = None
) -> ContactResult:
    """
    Resolve robot-robot and robot-wall contacts.

    Touching or overlapping discs lose the velocity component pointing into
    the other body (or the wall); positions are pushed apart along the
    contact normal. Both parties of a contact get indicator 1.

    Energy loss is charged to contact robots only, from prior_speed (the
    speed each robot moved at on the previous tick) down to the resolved
    speed. Without prior_speed the speed of `velocities` is used.
    """
    p = np.array(positions, dtype=float).reshape(-1, 2)
    v = np.array(velocities, dtype=float).reshape(-1, 2)
    n = p.shape[0]
    r = collision.robot_radius
    if prior_speed is None:
        speed2_before = np.einsum('ij,ij->i', v, v)
    else:
        speed2_before = np.asarray(prior_speed, dtype=float).reshape(-1) ** 2
    indicators = np.zeros(n, dtype=int)

    i_idx, j_idx, d2 = neighbor_pairs(p, 2 * r + CONTACT_TOLERANCE)
    pairs = [(int(a), int(b)) for a, b in zip(i_idx, j_idx)]
    normals = []
    for (a, b), dd in zip(pairs, d2):
        d = math.sqrt(dd)
        normals.append((p[b] - p[a]) / d if d > 0 else np.array([1.0, 0.0]))
        indicators[a] = indicators[b] = 1

    walls = []
    for k in range(n):
        if p[k, 0] - ws.xmin <= r + CONTACT_TOLERANCE:
            walls.append((k, np.array([-1.0, 0.0])))
        if ws.xmax - p[k, 0] <= r + CONTACT_TOLERANCE:
            walls.append((k, np.array([1.0, 0.0])))
        if p[k, 1] - ws.ymin <= r + CONTACT_TOLERANCE:
            walls.append((k, np.array([0.0, -1.0])))
        if ws.ymax - p[k, 1] <= r + CONTACT_TOLERANCE:
            walls.append((k, np.array([0.0, 1.0])))
    for k, _ in walls:
        indicators[k] = 1

    # Two passes so a later removal cannot leave an earlier contact approaching
    for _ in range(2):
        for (a, b), nrm in zip(pairs, normals):
            into_b = v[a] @ nrm
            if into_b > 0:
                v[a] -= into_b * nrm
            into_a = -(v[b] @ nrm)
            if into_a > 0:
                v[b] += into_a * nrm
        for k, nrm in walls:
            into_wall = v[k] @ nrm
            if into_wall > 0:
                v[k] -= into_wall * nrm

    for _ in range(DEPENETRATION_PASSES):
        moved = False
        for a, b in pairs:
            delta = p[b] - p[a]
            d = math.hypot(delta[0], delta[1])
            overlap = 2 * r - d
            if overlap > 0:
                nrm = delta / d if d > 0 else np.array([1.0, 0.0])
                p[a] -= 0.5 * overlap * nrm
                p[b] += 0.5 * overlap * nrm
                moved = True
        clipped_x = np.clip(p[:, 0], ws.xmin + r, ws.xmax - r)
        clipped_y = np.clip(p[:, 1], ws.ymin + r, ws.ymax - r)
        if np.any(clipped_x != p[:, 0]) or np.any(clipped_y != p[:, 1]):
            moved = True
        p[:, 0], p[:, 1] = clipped_x, clipped_y
        if not moved:
            break

    speed2_after = np.einsum('ij,ij->i', v, v)
    loss = np.where(indicators == 1, np.maximum(0.0, 0.5 * collision.mass * (speed2_before - speed2_after)), 0.0)
    return ContactResult(p, v, indicators, loss, pairs)


class RunStatus(Enum):
    """Outcome of one rollout."""
    OK = "ok"
    ERROR = "error"


@dataclass
class RobotTick:
    """One robot's record for one tick (one CSV row)."""
    t: float
    id: int
    x1: float
    x2: float
    x3: float
    ux_hat: float
    uy_hat: float
    ux_star: float
    uy_star: float
    collide: int
    e_loss: float
    v: float
    w: float
    speed_before: float
    speed_after: float
    virtual: int


@dataclass
class TrajectoryLog:
    """
    Per-tick records of a rollout, stored as arrays of shape (K, N, ...).

    Poses are recorded at the start of each tick together with the commands
    applied during it; final_state holds the pose after the last tick.
    """
    dt: float
    times: np.ndarray
    poses: np.ndarray
    u_hat: np.ndarray
    u_star: np.ndarray
    unicycle: np.ndarray
    collide: np.ndarray
    e_loss: np.ndarray
    speed_before: np.ndarray
    speed_after: np.ndarray
    virtual: np.ndarray
    final_state: Optional[SwarmState] = None
    status: RunStatus = RunStatus.OK
    error: str = ""
    filter_interventions: int = 0
    emergency_stops: int = 0
    header: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_ticks(self) -> int:
        return self.times.shape[0]

    @property
    def n_robots(self) -> int:
        return self.virtual.shape[0]

    def records(self) -> Iterator[RobotTick]:
        """Rows in (tick, robot) order."""
        for k in range(self.n_ticks):
            for i in range(self.n_robots):
                yield RobotTick(
                    t=float(self.times[k]), id=i,
                    x1=float(self.poses[k, i, 0]), x2=float(self.poses[k, i, 1]), x3=float(self.poses[k, i, 2]),
                    ux_hat=float(self.u_hat[k, i, 0]), uy_hat=float(self.u_hat[k, i, 1]),
                    ux_star=float(self.u_star[k, i, 0]), uy_star=float(self.u_star[k, i, 1]),
                    collide=int(self.collide[k, i]), e_loss=float(self.e_loss[k, i]),
                    v=float(self.unicycle[k, i, 0]), w=float(self.unicycle[k, i, 1]),
                    speed_before=float(self.speed_before[k, i]), speed_after=float(self.speed_after[k, i]),
                    virtual=int(self.virtual[i]),
                )

    def all_poses(self) -> np.ndarray:
        """(K + 1, N, 3) poses including the final state when present."""
        if self.final_state is None:
            return self.poses
        return np.concatenate((self.poses, self.final_state.poses[None]), axis=0)

    def min_pairwise_distance(self) -> float:
        """Smallest center distance over every recorded pose (inf for one robot)."""
        poses = self.all_poses()
        if poses.shape[1] < 2 or poses.shape[0] == 0:
            return math.inf
        diff = poses[:, :, None, :2] - poses[:, None, :, :2]
        dist = np.sqrt(np.einsum('kijd,kijd->kij', diff, diff))
        iu = np.triu_indices(poses.shape[1], k=1)
        return float(dist[:, iu[0], iu[1]].min())


@dataclass
class RunSummary:
    """Headline numbers of one rollout."""
    ticks: int
    robots: int
    min_distance: float
    contact_ticks: int
    total_damage: float
    filter_interventions: int
    emergency_stops: int
    status: str
    error: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'ticks': self.ticks,
            'robots': self.robots,
            'min_distance': None if math.isinf(self.min_distance) else self.min_distance,
            'contact_ticks': self.contact_ticks,
            'total_damage': self.total_damage,
            'filter_interventions': self.filter_interventions,
            'emergency_stops': self.emergency_stops,
            'status': self.status,
            'error': self.error,
        }


def summarize(log: TrajectoryLog) -> RunSummary:
    return RunSummary(
        ticks=log.n_ticks,
        robots=log.n_robots,
        min_distance=log.min_pairwise_distance(),
        contact_ticks=int(log.collide.sum()),
        total_damage=float(log.e_loss.sum()),
        filter_interventions=log.filter_interventions,
        emergency_stops=log.emergency_stops,
        status=log.status.value,
        error=log.error,
    )


def tick_count(duration: float, dt: float) -> int:
    """Number of ticks covering [0, duration): ceil(duration / dt)."""
    return int(math.ceil(duration / dt - 1e-9))


def run(
    scenario: 'ScenarioConfig',
    noise: Optional[NoiseModel] = None,
    filter_mode: Optional[FilterMode] = None,
    duration: Optional[float] = None
) -> TrajectoryLog:
    """
    Simulate a scenario.

    Args:
        scenario: Validated scenario
        noise: Overrides scenario.noise (seed included)
        filter_mode: Overrides scenario.barrier_mode
        duration: Overrides scenario.duration

    Returns:
        TrajectoryLog; status ERROR (with the partial log) on controller failure
        or an unsafe filtered start
    """
    noise = noise if noise is not None else scenario.noise
    mode = filter_mode if filter_mode is not None else scenario.barrier_mode
    duration = duration if duration is not None else scenario.duration
    dt = scenario.dt
    limits = scenario.limits
    lookahead = limits.lookahead
    ws = scenario.workspace
    coeffs = scenario.coefficients
    collision = scenario.collision

    poses = np.array(scenario.robots.poses, dtype=float)
    n = poses.shape[0]
    virtual = np.array(scenario.robots.virtual, dtype=bool)
    ticks = tick_count(duration, dt)

    if noise.sigma_init > 0:
        init_streams = rngmod.robot_streams(noise.seed, rngmod.STREAM_INIT, n)
        for i, g in enumerate(init_streams):
            poses[i, :2] += g.normal(0.0, noise.sigma_init, 2)
    dyn_streams = rngmod.robot_streams(noise.seed, rngmod.STREAM_DYNAMICS, n) if noise.sigma_dynamics > 0 else None
    obs_streams = rngmod.robot_streams(noise.seed, rngmod.STREAM_OBSERVATION, n) if noise.sigma_obs > 0 else None

    cp_params = control_point_params(scenario.barrier, lookahead, CONTROL_POINT_CLEARANCE)
    controller = Controller(scenario.controller, control_points(poses, lookahead),
                            scenario.barrier.alpha_bound, limits)
    cstate = controller.initial_state()

    log = TrajectoryLog(
        dt=dt,
        times=np.zeros(ticks),
        poses=np.zeros((ticks, n, 3)),
        u_hat=np.zeros((ticks, n, 2)),
        u_star=np.zeros((ticks, n, 2)),
        unicycle=np.zeros((ticks, n, 2)),
        collide=np.zeros((ticks, n), dtype=int),
        e_loss=np.zeros((ticks, n)),
        speed_before=np.zeros((ticks, n)),
        speed_after=np.zeros((ticks, n)),
        virtual=virtual,
        header={
            'config_hash': scenario.config_hash(),
            'seed': noise.seed,
            'version': __version__,
            'dt': dt,
            'filter_mode': mode.value,
        },
    )

    def abort(k: int, message: str) -> TrajectoryLog:
        logger.error("Run aborted at tick %d: %s", k, message)
        for name in ('times', 'poses', 'u_hat', 'u_star', 'unicycle', 'collide',
                     'e_loss', 'speed_before', 'speed_after'):
            setattr(log, name, getattr(log, name)[:k])
        log.final_state = SwarmState(poses, k * dt)
        log.status = RunStatus.ERROR
        log.error = message
        return log

    if mode is not FilterMode.OFF:
        try:
            check_safe_start(poses[:, :2], scenario.barrier, ws)
        except UnsafeStartError as exc:
            return abort(0, str(exc))

    # Contacts are charged from the speed executed on the previous tick; robots start at rest
    executed = np.zeros(n)
    for k in range(ticks):
        observed = poses
        if obs_streams is not None:
            observed = poses.copy()
            for i, g in enumerate(obs_streams):
                observed[i, :2] += g.normal(0.0, noise.sigma_obs, 2)
        points = control_points(observed, lookahead)

        try:
            cmd, cstate = controller(observed, points, cstate)
            cmd = np.asarray(cmd, dtype=float)
            if cmd.shape != (n, 2) or not np.all(np.isfinite(cmd)):
                raise ControllerError(f"invalid commands of shape {cmd.shape}")
        except Exception as exc:  # controller code is user-supplied
            return abort(k, f"controller failed: {exc}")

        if controller.unicycle_output:
            u_hat = uni_to_si_array(cmd, observed, lookahead)
        else:
            u_hat = cmd

        if mode is FilterMode.OFF:
            u_star = u_hat
            uni = (np.column_stack((np.clip(cmd[:, 0], -limits.v_max, limits.v_max),
                                    np.clip(cmd[:, 1], -limits.w_max, limits.w_max)))
                   if controller.unicycle_output else si_to_uni_array(u_hat, observed, limits=limits))
        else:
            result = apply_filter(mode, points, u_hat, cp_params, ws, strict=False)
            u_star = result.commands
            if result.status is not FilterStatus.OK:
                log.emergency_stops += 1
            if not np.allclose(u_star, u_hat, rtol=0.0, atol=1e-9):
                log.filter_interventions += 1
            uni = si_to_uni_scaled(u_star, observed, limits=limits)

        rates = unicycle_rates(poses, uni, coeffs)
        if dyn_streams is not None:
            for i, g in enumerate(dyn_streams):
                rates[i] += g.normal(0.0, noise.sigma_dynamics, 3)

        tentative = poses + dt * rates
        contact = resolve_contacts(tentative[:, :2], rates[:, :2], ws, collision, prior_speed=executed)

        log.times[k] = k * dt
        log.poses[k] = poses
        log.u_hat[k] = u_hat
        log.u_star[k] = u_star
        log.unicycle[k] = uni
        log.collide[k] = contact.indicators
        log.e_loss[k] = contact.energy_loss
        log.speed_before[k] = executed
        executed = np.linalg.norm(contact.velocities, axis=1)
        log.speed_after[k] = executed

        poses = tentative
        poses[:, :2] = contact.positions
        poses[:, 2] = wrap_angle(poses[:, 2])

    log.final_state = SwarmState(poses, ticks * dt)
    return log


def add_virtual_robots(
    scenario: 'ScenarioConfig',
    count: int,
    poses: Optional[List[List[float]]] = None,
    goals: Optional[List[List[float]]] = None,
    min_separation: Optional[float] = None
) -> 'ScenarioConfig':
    """
    Append simulated robots that controllers and the filter treat like any other.

    Args:
        scenario: Scenario to extend
        count: Number of robots to add (0 returns the scenario unchanged)
        poses: Explicit [x, y, theta] poses; otherwise free positions are drawn
            from the scenario seed
        goals: Go-to-goal targets of the new robots (default: hold position)
        min_separation: Spacing for drawn poses (default 2 * ds)

    Returns:
        New ScenarioConfig with N + count robots
    """
    if count < 0:
        raise InvalidParameterError(f"count must be non-negative, got {count}")
    if count == 0:
        return scenario

    existing = np.array(scenario.robots.poses, dtype=float)
    if poses is None:
        sep = min_separation if min_separation is not None else 2 * scenario.barrier.ds
        poses = _free_poses(existing, count, scenario.workspace, sep, scenario.noise.seed)
    if len(poses) != count:
        raise InvalidParameterError(f"{len(poses)} poses given for {count} virtual robots")
    new_poses = [list(map(float, p)) + [0.0] * (3 - len(p)) for p in poses]

    robots = replace(
        scenario.robots,
        poses=[list(p) for p in existing.tolist()] + new_poses,
        virtual=list(scenario.robots.virtual) + [True] * count,
    )
    controller = _extend_controller(scenario, count, new_poses, goals)
    return replace(scenario, robots=robots, controller=controller)


def _free_poses(existing: np.ndarray, count: int, ws: Workspace, sep: float, seed: int) -> List[List[float]]:
    g = rngmod.stream(seed, rngmod.STREAM_LAYOUT, existing.shape[0])
    placed = [p[:2] for p in existing]
    out: List[List[float]] = []
    for _ in range(10000 * count):
        if len(out) == count:
            break
        cand = np.array([g.uniform(ws.xmin + sep, ws.xmax - sep), g.uniform(ws.ymin + sep, ws.ymax - sep)])
        if all(np.hypot(*(cand - q)) >= sep for q in placed):
            placed.append(cand)
            out.append([float(cand[0]), float(cand[1]), 0.0])
    if len(out) < count:
        raise InvalidParameterError(f"Could not place {count} virtual robots with spacing {sep}")
    return out


def _extend_controller(scenario: 'ScenarioConfig', count: int, new_poses: List[List[float]],
                       goals: Optional[List[List[float]]]):
    spec = scenario.controller
    params = dict(spec.params)
    lookahead = scenario.limits.lookahead
    kind = spec.kind.value
    if kind == 'go_to_goal':
        hold = control_points(np.array(new_poses), lookahead).tolist()
        params['goals'] = list(params['goals']) + [list(g) for g in (goals or hold)]
    elif kind == 'position_swap' and params.get('assignment', 'antipodal') != 'antipodal':
        n = len(params['assignment'])
        params['assignment'] = list(params['assignment']) + list(range(n, n + count))
    elif kind == 'consensus' and params.get('weights', 'complete') != 'complete':
        w = np.asarray(params['weights'], dtype=float)
        grown = np.zeros((w.shape[0] + count, w.shape[0] + count))
        grown[:w.shape[0], :w.shape[0]] = w
        params['weights'] = grown.tolist()
    elif kind == 'waypoint_follow' and 'routes' in params:
        params['routes'] = list(params['routes']) + [[] for _ in range(count)]
    return replace(spec, params=params)
