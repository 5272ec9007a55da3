"""
Robot Model Module

Core domain types, unicycle kinematics (optionally with regression-fitted
per-axis coefficients), the single-integrator <-> unicycle mapping, and
fixed-step Euler integration.

Scalar helpers operate on the value types below; the ``*_array`` variants
are the vectorized forms used by the simulator and operate on (N, k) arrays.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidInputError, InvalidParameterError

# Tracking rate of the overhead camera
DEFAULT_DT = 1.0 / 30.0

V_MAX = 0.1
DEFAULT_LOOKAHEAD = 0.05
W_MAX = 2.0 * V_MAX / DEFAULT_LOOKAHEAD


def wrap_angle(theta):
    """Map an angle (scalar or array) into (-pi, pi]; angles already inside are returned unchanged."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.pi - np.mod(np.pi - theta, 2.0 * np.pi)
    wrapped = np.where((theta > -np.pi) & (theta <= np.pi), theta, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class RobotPose:
    """
    Planar pose of one robot.

    Attributes:
        x1: Position along x (m)
        x2: Position along y (m)
        x3: Heading (rad), kept in (-pi, pi]
    """
    x1: float
    x2: float
    x3: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.x1) and np.isfinite(self.x2) and np.isfinite(self.x3)):
            raise InvalidInputError(f"Pose must be finite, got ({self.x1}, {self.x2}, {self.x3})")
        object.__setattr__(self, 'x1', float(self.x1))
        object.__setattr__(self, 'x2', float(self.x2))
        object.__setattr__(self, 'x3', wrap_angle(self.x3))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x1, self.x2])

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3])

    def to_dict(self) -> Dict[str, float]:
        return {'x1': self.x1, 'x2': self.x2, 'x3': self.x3}


@dataclass(frozen=True)
class SiCommand:
    """Planar single-integrator velocity (m/s)."""
    ux: float
    uy: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ux, self.uy])


@dataclass(frozen=True)
class UnicycleCommand:
    """Linear (m/s) and angular (rad/s) velocity."""
    v: float
    w: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.w])


@dataclass(frozen=True)
class ModelCoefficients:
    """
    Per-axis scaling factors of the modified unicycle model.

    Attributes:
        a1: Scale on the x rate
        a2: Scale on the y rate
        a3: Scale on the heading rate
    """
    a1: float = 1.0
    a2: float = 1.0
    a3: float = 1.0

    def __post_init__(self):
        for name in ('a1', 'a2', 'a3'):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidParameterError(f"Coefficient {name} must be positive, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])

    def to_dict(self) -> Dict[str, float]:
        return {'a1': self.a1, 'a2': self.a2, 'a3': self.a3}

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> 'ModelCoefficients':
        return cls(
            a1=float(data.get('a1', 1.0)),
            a2=float(data.get('a2', 1.0)),
            a3=float(data.get('a3', 1.0))
        )


IDENTITY_COEFFICIENTS = ModelCoefficients(1.0, 1.0, 1.0)

# Values identified on the physical robots
CALIBRATED_COEFFICIENTS = ModelCoefficients(0.8645, 0.8119, 0.4640)


@dataclass(frozen=True)
class ModelLimits:
    """
    Actuation limits and the look-ahead distance of the inversion.

    Attributes:
        v_max: Linear speed bound (m/s)
        w_max: Angular speed bound (rad/s)
        lookahead: Distance of the controlled point ahead of the wheel axis (m)
    """
    v_max: float = V_MAX
    w_max: float = W_MAX
    lookahead: float = DEFAULT_LOOKAHEAD

    def __post_init__(self):
        if self.v_max <= 0 or self.w_max <= 0:
            raise InvalidParameterError("v_max and w_max must be positive")
        if self.lookahead <= 0:
            raise InvalidParameterError(f"lookahead must be positive, got {self.lookahead}")

    @classmethod
    def for_lookahead(cls, lookahead: float, v_max: float = V_MAX) -> 'ModelLimits':
        """Limits with the default angular bound 2 * v_max / lookahead."""
        if lookahead <= 0:
            raise InvalidParameterError(f"lookahead must be positive, got {lookahead}")
        return cls(v_max=v_max, w_max=2.0 * v_max / lookahead, lookahead=lookahead)

    def to_dict(self) -> Dict[str, float]:
        return {'v_max': self.v_max, 'w_max': self.w_max, 'lookahead': self.lookahead}


DEFAULT_LIMITS = ModelLimits()


@dataclass
class SwarmState:
    """
    Aggregate state of N robots.

    Attributes:
        poses: (N, 3) array of [x1, x2, x3] rows; row order is the robot index
        time: Simulation time (s)
    """
    poses: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        poses = np.array(self.poses, dtype=float)
        if poses.ndim != 2 or poses.shape[1] != 3 or poses.shape[0] < 1:
            raise InvalidInputError(f"poses must have shape (N, 3) with N >= 1, got {poses.shape}")
        if not np.all(np.isfinite(poses)):
            raise InvalidInputError("poses must be finite")
        poses[:, 2] = wrap_angle(poses[:, 2])
        self.poses = poses

    @classmethod
    def from_poses(cls, poses: Iterable[RobotPose], time: float = 0.0) -> 'SwarmState':
        return cls(np.array([p.as_array() for p in poses]), time)

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :2]

    def robot(self, i: int) -> RobotPose:
        return RobotPose(*self.poses[i])

    def robots(self) -> List[RobotPose]:
        return [self.robot(i) for i in range(self.n)]

    def copy(self) -> 'SwarmState':
        return SwarmState(self.poses.copy(), self.time)


def _check_finite(*values: float):
    if not all(np.isfinite(v) for v in values):
        raise InvalidInputError(f"Non-finite input: {values}")


def saturate_si(cmd: SiCommand, alpha_bound: float) -> SiCommand:
    """Clip each component so that ||u||_inf <= alpha_bound."""
    return SiCommand(
        float(np.clip(cmd.ux, -alpha_bound, alpha_bound)),
        float(np.clip(cmd.uy, -alpha_bound, alpha_bound))
    )


def saturate_unicycle(cmd: UnicycleCommand, limits: ModelLimits = DEFAULT_LIMITS) -> UnicycleCommand:
    """Clip linear and angular velocity to the actuation limits."""
    return UnicycleCommand(
        float(np.clip(cmd.v, -limits.v_max, limits.v_max)),
        float(np.clip(cmd.w, -limits.w_max, limits.w_max))
    )


def unicycle_derivative(
    pose: RobotPose,
    cmd: UnicycleCommand,
    coeffs: ModelCoefficients = IDENTITY_COEFFICIENTS
) -> Tuple[float, float, float]:
    """
    Pose rate of the (modified) unicycle model.

    Returns:
        (a1 * v * cos(theta), a2 * v * sin(theta), a3 * w)

    Raises:
        InvalidInputError: If pose or command is non-finite
    """
    _check_finite(pose.x1, pose.x2, pose.x3, cmd.v, cmd.w)
    return (
        coeffs.a1 * cmd.v * np.cos(pose.x3),
        coeffs.a2 * cmd.v * np.sin(pose.x3),
        coeffs.a3 * cmd.w
    )


def unicycle_rates(
    poses: np.ndarray,
    cmds: np.ndarray,
    coeffs: ModelCoefficients = IDENTITY_COEFFICIENTS
) -> np.ndarray:
    """Vectorized unicycle_derivative: (N, 3) poses and (N, 2) [v, w] -> (N, 3) rates."""
    cmds = np.asarray(cmds, dtype=float)
    if not (np.all(np.isfinite(poses)) and np.all(np.isfinite(cmds))):
        raise InvalidInputError("Non-finite pose or command")
    theta = poses[:, 2]
    rates = np.empty_like(poses, dtype=float)
    rates[:, 0] = coeffs.a1 * cmds[:, 0] * np.cos(theta)
    rates[:, 1] = coeffs.a2 * cmds[:, 0] * np.sin(theta)
    rates[:, 2] = coeffs.a3 * cmds[:, 1]
    return rates


def si_to_uni(
    cmd: SiCommand,
    pose: RobotPose,
    lookahead: Optional[float] = None,
    limits: ModelLimits = DEFAULT_LIMITS
) -> UnicycleCommand:
    """
    Invert the motion of the point `lookahead` ahead of the wheel axis.

    lookahead defaults to limits.lookahead.

    Raises:
        InvalidParameterError: If lookahead <= 0
    """
    lookahead = limits.lookahead if lookahead is None else lookahead
    if lookahead <= 0:
        raise InvalidParameterError(f"lookahead must be positive, got {lookahead}")
    c, s = np.cos(pose.x3), np.sin(pose.x3)
    v = c * cmd.ux + s * cmd.uy
    w = (-s * cmd.ux + c * cmd.uy) / lookahead
    return saturate_unicycle(UnicycleCommand(float(v), float(w)), limits)


def si_to_uni_array(
    u: np.ndarray,
    poses: np.ndarray,
    lookahead: Optional[float] = None,
    limits: ModelLimits = DEFAULT_LIMITS
) -> np.ndarray:
    """Vectorized si_to_uni: (N, 2) velocities -> (N, 2) [v, w]."""
    lookahead = limits.lookahead if lookahead is None else lookahead
    if lookahead <= 0:
        raise InvalidParameterError(f"lookahead must be positive, got {lookahead}")
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    out = np.empty((poses.shape[0], 2))
    out[:, 0] = np.clip(c * u[:, 0] + s * u[:, 1], -limits.v_max, limits.v_max)
    out[:, 1] = np.clip((-s * u[:, 0] + c * u[:, 1]) / lookahead, -limits.w_max, limits.w_max)
    return out


def si_to_uni_scaled(
    u: np.ndarray,
    poses: np.ndarray,
    lookahead: Optional[float] = None,
    limits: ModelLimits = DEFAULT_LIMITS
) -> np.ndarray:
    """
    Like si_to_uni_array, but a command beyond the limits is shrunk as a whole.

    The look-ahead point then moves along the requested direction at reduced
    speed, so any half-plane containing zero that held for u still holds.
    """
    lookahead = limits.lookahead if lookahead is None else lookahead
    if lookahead <= 0:
        raise InvalidParameterError(f"lookahead must be positive, got {lookahead}")
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    v = c * u[:, 0] + s * u[:, 1]
    w = (-s * u[:, 0] + c * u[:, 1]) / lookahead
    with np.errstate(divide='ignore'):
        k = np.minimum(1.0, np.minimum(limits.v_max / np.abs(v), limits.w_max / np.abs(w)))
    return np.column_stack((k * v, k * w))


def uni_to_si(cmd: UnicycleCommand, pose: RobotPose, lookahead: float = DEFAULT_LOOKAHEAD) -> SiCommand:
    """Velocity of the look-ahead point under a unicycle command."""
    if lookahead <= 0:
        raise InvalidParameterError(f"lookahead must be positive, got {lookahead}")
    c, s = np.cos(pose.x3), np.sin(pose.x3)
    return SiCommand(
        float(cmd.v * c - lookahead * cmd.w * s),
        float(cmd.v * s + lookahead * cmd.w * c)
    )


def uni_to_si_array(cmds: np.ndarray, poses: np.ndarray, lookahead: float = DEFAULT_LOOKAHEAD) -> np.ndarray:
    """Vectorized uni_to_si: (N, 2) [v, w] -> (N, 2) velocities."""
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    out = np.empty((poses.shape[0], 2))
    out[:, 0] = cmds[:, 0] * c - lookahead * cmds[:, 1] * s
    out[:, 1] = cmds[:, 0] * s + lookahead * cmds[:, 1] * c
    return out


def control_points(poses: np.ndarray, lookahead: float = DEFAULT_LOOKAHEAD) -> np.ndarray:
    """Positions of the look-ahead points of (N, 3) poses."""
    poses = np.asarray(poses, dtype=float)
    return poses[:, :2] + lookahead * np.column_stack((np.cos(poses[:, 2]), np.sin(poses[:, 2])))


CommandInput = Union[Sequence[UnicycleCommand], np.ndarray]


def _as_command_array(cmds: CommandInput) -> np.ndarray:
    if isinstance(cmds, np.ndarray):
        return np.asarray(cmds, dtype=float).reshape(-1, 2)
    return np.array([[c.v, c.w] for c in cmds], dtype=float).reshape(-1, 2)


def step(
    state: SwarmState,
    cmds: CommandInput,
    dt: float = DEFAULT_DT,
    coeffs: ModelCoefficients = IDENTITY_COEFFICIENTS
) -> SwarmState:
    """
    Advance every robot by one explicit Euler step.

    Args:
        state: Current swarm state
        cmds: N unicycle commands, or an (N, 2) array of [v, w]
        dt: Step length (s)
        coeffs: Model coefficients

    Returns:
        New state with wrapped headings and time advanced by dt

    Raises:
        InvalidInputError: On command count mismatch
        InvalidParameterError: If dt <= 0
    """
    if dt <= 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    arr = _as_command_array(cmds)
    if arr.shape[0] != state.n:
        raise InvalidInputError(f"Expected {state.n} commands, got {arr.shape[0]}")
    poses = state.poses + dt * unicycle_rates(state.poses, arr, coeffs)
    return SwarmState(poses, state.time + dt)
