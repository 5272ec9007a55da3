"""
Scenario Module

Loads and validates declarative scenario files (YAML, JSON or TOML).
Validation runs in two passes and reports every problem at once:

1. structure, with jsonschema against schemas/scenario.json
2. semantics (geometry, permutations, graphs, thresholds) in ScenarioChecker

A validated document becomes a ScenarioConfig, the input of the simulator
and the verification gate.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml
from jsonschema import Draft7Validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import rng as rngmod
from .barrier import BarrierParams, FilterMode, Workspace, neighbor_pairs
from .controllers import Controller, ControllerKind, ControllerSpec
from .errors import ScenarioValidationError, SwarmGuardError
from .model import (
    DEFAULT_DT,
    IDENTITY_COEFFICIENTS,
    CALIBRATED_COEFFICIENTS,
    ModelCoefficients,
    ModelLimits,
    control_points,
    wrap_angle,
)
from .simulator import DEFAULT_NOISE, CollisionModel, NoiseModel, add_virtual_robots
from .verification import SafetyThresholds

logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parent.parent / "schemas" / "scenario.json"

LAYOUTS = ('explicit', 'circle', 'grid', 'random')

# Named coefficient sets accepted in place of an {a1, a2, a3} mapping
NAMED_COEFFICIENTS = {
    'calibrated': CALIBRATED_COEFFICIENTS,
    'identity': IDENTITY_COEFFICIENTS,
}


class ScenarioIssue:
    """Represents a scenario validation issue."""

    def __init__(self, severity: str, field: str, message: str):
        """
        Initialize scenario issue.

        Args:
            severity: 'error' or 'warning'
            field: Dotted path of the offending field
            message: Description of the issue
        """
        self.severity = severity
        self.field = field
        self.message = message

    def __str__(self) -> str:
        return f"[{self.severity.upper()}] {self.field}: {self.message}"

    def to_dict(self) -> Dict[str, str]:
        """Convert to dictionary."""
        return {
            'severity': self.severity,
            'field': self.field,
            'message': self.message
        }


@dataclass
class RobotsConfig:
    """
    Initial poses of the swarm.

    Attributes:
        poses: [x, y, theta] per robot, generator output already resolved
        virtual: Per-robot virtual flag
        layout: The generator description the poses came from
    """
    poses: List[List[float]]
    virtual: List[bool]
    layout: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.poses)


@dataclass
class OutputPaths:
    """Where commands write artifacts unless overridden on the command line."""
    trajectory: Optional[str] = None
    report: Optional[str] = None
    plot: Optional[str] = None

    def to_dict(self) -> Dict[str, Optional[str]]:
        return {'trajectory': self.trajectory, 'report': self.report, 'plot': self.plot}


@dataclass
class ScenarioConfig:
    """A validated experiment description."""
    name: str
    robots: RobotsConfig
    workspace: Workspace
    barrier: BarrierParams
    barrier_mode: FilterMode
    controller: ControllerSpec
    duration: float
    dt: float
    noise: NoiseModel
    thresholds: SafetyThresholds
    coefficients: ModelCoefficients
    limits: ModelLimits
    collision: CollisionModel
    outputs: OutputPaths = field(default_factory=OutputPaths)
    description: str = ""

    @property
    def n(self) -> int:
        return self.robots.n

    def to_dict(self) -> Dict[str, Any]:
        """Canonical document: poses always explicit, every default spelled out."""
        barrier = self.barrier.to_dict()
        barrier['mode'] = self.barrier_mode.value
        return {
            'name': self.name,
            'description': self.description,
            'duration': self.duration,
            'dt': self.dt,
            'robots': {
                'layout': 'explicit',
                'poses': [list(p) for p in self.robots.poses],
                'virtual': list(self.robots.virtual),
            },
            'workspace': self.workspace.to_dict(),
            'barrier': barrier,
            'controller': self.controller.to_dict(),
            'noise': self.noise.to_dict(),
            'thresholds': self.thresholds.to_dict(),
            'coefficients': self.coefficients.to_dict(),
            'limits': self.limits.to_dict(),
            'collision': self.collision.to_dict(),
            'outputs': self.outputs.to_dict(),
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


# ----------------------------------------------------------------------------
# Initial-pose generators
# ----------------------------------------------------------------------------

def _heading(spec: Any, angle: float) -> float:
    if spec == 'inward':
        return wrap_angle(angle + math.pi)
    if spec == 'outward':
        return wrap_angle(angle)
    if spec == 'tangent':
        return wrap_angle(angle + math.pi / 2)
    return wrap_angle(float(spec))


def circle_poses(count: int, radius: float, center=(0.0, 0.0), phase: float = 0.0,
                 heading: Any = 'inward') -> List[List[float]]:
    """count robots evenly spaced on a circle, robot k at angle phase + 2 pi k / count."""
    poses = []
    for k in range(count):
        angle = phase + 2.0 * math.pi * k / count
        poses.append([
            center[0] + radius * math.cos(angle),
            center[1] + radius * math.sin(angle),
            _heading(heading, angle),
        ])
    return poses


def grid_poses(count: int, spacing: float, columns: Optional[int] = None, center=(0.0, 0.0),
               heading: float = 0.0) -> List[List[float]]:
    """Row-major grid centered on center; columns default to ceil(sqrt(count))."""
    columns = columns or int(math.ceil(math.sqrt(count)))
    rows = int(math.ceil(count / columns))
    x0 = center[0] - spacing * (columns - 1) / 2.0
    y0 = center[1] + spacing * (rows - 1) / 2.0
    return [
        [x0 + spacing * (k % columns), y0 - spacing * (k // columns), wrap_angle(float(heading))]
        for k in range(count)
    ]


def random_poses(count: int, ws: Workspace, min_separation: float, margin: float,
                 seed: int = 0, max_attempts: int = 10000) -> List[List[float]]:
    """
    Rejection-sampled poses at least min_separation apart and margin off the walls.

    Raises:
        SwarmGuardError: If the poses cannot be placed within count * max_attempts draws
    """
    g = rngmod.stream(seed, rngmod.STREAM_LAYOUT, 0)
    placed: List[List[float]] = []
    for _ in range(count * max_attempts):
        if len(placed) == count:
            break
        x = g.uniform(ws.xmin + margin, ws.xmax - margin)
        y = g.uniform(ws.ymin + margin, ws.ymax - margin)
        theta = g.uniform(-math.pi, math.pi)
        if all(math.hypot(x - p[0], y - p[1]) >= min_separation for p in placed):
            placed.append([float(x), float(y), wrap_angle(theta)])
    if len(placed) < count:
        raise SwarmGuardError(
            f"Placed only {len(placed)} of {count} robots with separation {min_separation} m"
        )
    return placed


def generate_poses(layout: Dict[str, Any], ws: Workspace, ds: float) -> List[List[float]]:
    """Resolve a robots section into explicit [x, y, theta] poses."""
    kind = layout.get('layout', 'explicit')
    if kind == 'explicit':
        return [[float(p[0]), float(p[1]), wrap_angle(float(p[2]) if len(p) > 2 else 0.0)]
                for p in layout['poses']]
    if kind == 'circle':
        return circle_poses(
            int(layout['count']), float(layout['radius']),
            center=tuple(layout.get('center', (0.0, 0.0))),
            phase=float(layout.get('phase', 0.0)),
            heading=layout.get('heading', 'inward'),
        )
    if kind == 'grid':
        return grid_poses(
            int(layout['count']), float(layout['spacing']),
            columns=layout.get('columns'),
            center=tuple(layout.get('center', (0.0, 0.0))),
            heading=float(layout.get('heading', 0.0)),
        )
    return random_poses(
        int(layout['count']), ws,
        min_separation=float(layout.get('min_separation', 2.5 * ds)),
        margin=float(layout.get('margin', ds)),
        seed=int(layout.get('seed', 0)),
    )


# ----------------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------------

def _load_schema() -> Dict[str, Any]:
    with open(SCHEMA_PATH) as f:
        return json.load(f)


def _json_path(error) -> str:
    parts = [str(p) for p in error.absolute_path]
    if error.validator == 'required':
        missing = error.message.split("'")[1]
        parts.append(missing)
    return ".".join(parts) or "(document)"


class ScenarioChecker:
    """
    Validates scenario documents for structure and physical consistency.

    Every problem is collected; nothing short-circuits except that semantic
    checks run only on structurally valid documents.
    """

    def __init__(self):
        """Initialize scenario checker."""
        self.issues: List[ScenarioIssue] = []
        self._validator = Draft7Validator(_load_schema())

    def _error(self, field_name: str, message: str):
        self.issues.append(ScenarioIssue('error', field_name, message))

    def _warning(self, field_name: str, message: str):
        self.issues.append(ScenarioIssue('warning', field_name, message))

    def check(self, doc: Any) -> List[ScenarioIssue]:
        """
        Check a scenario document.

        Args:
            doc: Parsed YAML/JSON document

        Returns:
            List of ScenarioIssue objects
        """
        self.issues = []
        for err in sorted(self._validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path]):
            self._error(_json_path(err), err.message)
        if self.issues:
            return self.issues

        ws = self._check_workspace(doc.get('workspace', {}))
        params = self._check_barrier(doc.get('barrier', {}), ws)
        self._check_timing(doc)
        self._check_thresholds(doc['thresholds'])
        limits = self._check_limits(doc.get('limits', {}))
        if ws is None or params is None:
            return self.issues
        self._check_collision(doc.get('collision', {}), params)
        poses = self._check_robots(doc['robots'], ws, params, limits)
        if poses is not None:
            self._check_controller(doc['controller'], poses, ws, params, limits)
        return self.issues

    def _check_workspace(self, section: Dict[str, Any]) -> Optional[Workspace]:
        ws = Workspace(**section) if section else Workspace()
        if ws.xmax <= ws.xmin or ws.ymax <= ws.ymin:
            self._error('workspace', "xmax/ymax must exceed xmin/ymin")
            return None
        return ws

    def _check_barrier(self, section: Dict[str, Any], ws: Optional[Workspace]) -> Optional[BarrierParams]:
        try:
            params = barrier_params_from_dict(section)
        except SwarmGuardError as exc:
            self._error('barrier', str(exc))
            return None
        if ws is not None:
            try:
                ws.validate(params.ds)
            except SwarmGuardError as exc:
                self._error('workspace', str(exc))
                return None
        return params

    def _check_timing(self, doc: Dict[str, Any]):
        dt = doc.get('dt', DEFAULT_DT)
        if doc['duration'] < dt:
            self._error('duration', f"duration {doc['duration']} s is shorter than one tick ({dt} s)")

    def _check_thresholds(self, section: Dict[str, Any]):
        try:
            SafetyThresholds.from_dict(section)
        except SwarmGuardError as exc:
            self._error('thresholds', str(exc))

    def _check_limits(self, section: Dict[str, Any]) -> ModelLimits:
        try:
            return limits_from_dict(section)
        except SwarmGuardError as exc:
            self._error('limits', str(exc))
            return ModelLimits()

    def _check_collision(self, section: Dict[str, Any], params: BarrierParams):
        try:
            collision_from_dict(section, params.ds).validate(params.ds)
        except SwarmGuardError as exc:
            self._error('collision', str(exc))

    def _check_robots(self, section: Dict[str, Any], ws: Workspace, params: BarrierParams,
                      limits: ModelLimits) -> Optional[np.ndarray]:
        layout = section.get('layout', 'explicit')
        try:
            poses = np.array(generate_poses(section, ws, params.ds), dtype=float).reshape(-1, 3)
        except SwarmGuardError as exc:
            self._error('robots', str(exc))
            return None
        if poses.shape[0] == 0:
            self._error('robots', "at least one robot is required")
            return None

        virtual = section.get('virtual')
        if virtual is not None and len(virtual) != poses.shape[0]:
            self._error('robots.virtual', f"{len(virtual)} flags for {poses.shape[0]} robots")

        ok = True
        for k in np.nonzero(~ws.contains(poses[:, :2]))[0]:
            self._error(f'robots.poses.{int(k)}', f"robot {int(k)} ({layout}) lies outside the workspace")
            ok = False
        i_idx, j_idx, d2 = neighbor_pairs(poses[:, :2], params.ds)
        for i, j, dd in zip(i_idx, j_idx, d2):
            if dd < params.ds ** 2:
                self._error(
                    'robots.poses',
                    f"robots ({int(i)}, {int(j)}) start {math.sqrt(dd):.4f} m apart, closer than ds = {params.ds} m"
                )
                ok = False
        if not ok:
            return None

        points = control_points(poses, limits.lookahead)
        reach = params.ds + 2.0 * limits.lookahead
        i_idx, j_idx, _ = neighbor_pairs(points, reach)
        if i_idx.size:
            self._warning(
                'robots.poses',
                f"{i_idx.size} pair(s) of look-ahead points start closer than {reach:.3f} m; "
                "the filter starts with restoring constraints"
            )
        return poses

    def _check_controller(self, section: Dict[str, Any], poses: np.ndarray, ws: Workspace,
                          params: BarrierParams, limits: ModelLimits):
        spec = ControllerSpec.from_dict(section)
        try:
            Controller(spec, control_points(poses, limits.lookahead), params.alpha_bound, limits)
        except (SwarmGuardError, KeyError, TypeError, ValueError) as exc:
            missing = f"missing parameter {exc}" if isinstance(exc, KeyError) else str(exc)
            self._error('controller.params', f"{spec.kind.value}: {missing}")
            return

        p = spec.params
        if spec.kind is ControllerKind.GO_TO_GOAL:
            goals = np.asarray(p['goals'], dtype=float).reshape(-1, 2)
            for k in np.nonzero(~ws.contains(goals))[0]:
                self._error(f'controller.params.goals.{int(k)}', "goal lies outside the workspace")
        elif spec.kind is ControllerKind.CYCLIC_FORMATION:
            if 2.0 * float(p['radius']) + params.ds > min(ws.width, ws.height):
                self._warning('controller.params.radius', "formation does not fit inside the workspace")
        elif spec.kind is ControllerKind.POSITION_SWAP and 'circulation' not in p:
            self._warning('controller.params.circulation',
                          "no circulation gain; symmetric swaps may deadlock behind the filter")

    def check_file(self, filepath: str) -> List[ScenarioIssue]:
        """
        Load and check a scenario file.

        Args:
            filepath: Path to YAML, JSON or TOML file

        Returns:
            List of ScenarioIssue objects
        """
        return self.check(read_document(filepath))

    def get_summary(self) -> Dict[str, Any]:
        """Get summary of check results."""
        errors = [i for i in self.issues if i.severity == 'error']
        warnings = [i for i in self.issues if i.severity == 'warning']
        return {
            'total_issues': len(self.issues),
            'errors': len(errors),
            'warnings': len(warnings),
            'passed': len(errors) == 0
        }

    def print_report(self):
        """Print human-readable check report."""
        if not self.issues:
            print("✅ Scenario check passed - no issues found")
            return

        print("\n📋 Scenario Check Report")
        print("=" * 60)
        errors = [i for i in self.issues if i.severity == 'error']
        warnings = [i for i in self.issues if i.severity == 'warning']
        if errors:
            print(f"\n❌ ERRORS ({len(errors)}):")
            for issue in errors:
                print(f"  - {issue.field}: {issue.message}")
        if warnings:
            print(f"\n⚠️  WARNINGS ({len(warnings)}):")
            for issue in warnings:
                print(f"  - {issue.field}: {issue.message}")
        print("\n" + "=" * 60)
        summary = self.get_summary()
        print(f"Status: {'❌ FAILED' if not summary['passed'] else '✅ PASSED (with warnings)'}")
        print()


# ----------------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------------

def barrier_params_from_dict(section: Dict[str, Any]) -> BarrierParams:
    radius = section.get('neighbor_radius', 0.20)
    if radius is None or radius == 'inf':
        radius = math.inf
    kwargs = {
        'ds': float(section.get('ds', 0.08)),
        'gamma': float(section.get('gamma', 1.0)),
        'alpha_bound': float(section.get('alpha_bound', 0.1)),
        'neighbor_radius': float(radius),
    }
    if section.get('boundary_margin') is not None:
        kwargs['boundary_margin'] = float(section['boundary_margin'])
    return BarrierParams(**kwargs)


def limits_from_dict(section: Dict[str, Any]) -> ModelLimits:
    lookahead = float(section.get('lookahead', ModelLimits().lookahead))
    base = ModelLimits.for_lookahead(lookahead, float(section.get('v_max', ModelLimits().v_max)))
    return ModelLimits(base.v_max, float(section.get('w_max', base.w_max)), lookahead)


def collision_from_dict(section: Dict[str, Any], ds: float) -> CollisionModel:
    return CollisionModel(
        robot_radius=float(section.get('robot_radius', ds / 2.0)),
        mass=float(section.get('mass', CollisionModel().mass)),
    )


def coefficients_from_value(value: Any) -> ModelCoefficients:
    if value is None:
        return CALIBRATED_COEFFICIENTS
    if isinstance(value, str):
        return NAMED_COEFFICIENTS[value]
    return ModelCoefficients.from_dict(value)


def noise_from_dict(section: Optional[Dict[str, Any]]) -> NoiseModel:
    if section is None:
        return DEFAULT_NOISE
    return NoiseModel(
        sigma_dynamics=float(section.get('sigma_dynamics', DEFAULT_NOISE.sigma_dynamics)),
        sigma_init=float(section.get('sigma_init', DEFAULT_NOISE.sigma_init)),
        sigma_obs=float(section.get('sigma_obs', DEFAULT_NOISE.sigma_obs)),
        seed=int(section.get('seed', 0)),
    )


def read_document(filepath: str) -> Any:
    """Parse a YAML (.yaml/.yml), JSON (.json) or TOML (.toml) file."""
    if filepath.endswith('.yaml') or filepath.endswith('.yml'):
        with open(filepath, 'r') as f:
            return yaml.safe_load(f)
    if filepath.endswith('.json'):
        with open(filepath, 'r') as f:
            return json.load(f)
    if filepath.endswith('.toml'):
        with open(filepath, 'rb') as f:
            return tomllib.load(f)
    raise ValueError("Scenario file must be YAML, JSON or TOML")


def scenario_from_dict(doc: Any) -> ScenarioConfig:
    """
    Validate a parsed document and build the ScenarioConfig.

    Raises:
        ScenarioValidationError: Listing every error-severity issue
    """
    checker = ScenarioChecker()
    issues = checker.check(doc)
    errors = [i for i in issues if i.severity == 'error']
    for issue in issues:
        if issue.severity == 'warning':
            logger.warning("%s", issue)
    if errors:
        logger.info("Scenario rejected with %d error(s)", len(errors))
        raise ScenarioValidationError(errors)

    ws_section = doc.get('workspace')
    ws = Workspace(**ws_section) if ws_section else Workspace()
    barrier_section = doc.get('barrier', {})
    params = barrier_params_from_dict(barrier_section)
    robots_section = doc['robots']
    poses = generate_poses(robots_section, ws, params.ds)
    virtual = [bool(v) for v in robots_section.get('virtual', [False] * len(poses))]

    scenario = ScenarioConfig(
        name=str(doc['name']),
        description=str(doc.get('description', '')),
        robots=RobotsConfig(poses, virtual, {k: v for k, v in robots_section.items() if k != 'virtual'}),
        workspace=ws,
        barrier=params,
        barrier_mode=FilterMode(barrier_section.get('mode', FilterMode.CENTRALIZED.value)),
        controller=ControllerSpec.from_dict(doc['controller']),
        duration=float(doc['duration']),
        dt=float(doc.get('dt', DEFAULT_DT)),
        noise=noise_from_dict(doc.get('noise')),
        thresholds=SafetyThresholds.from_dict(doc['thresholds']),
        coefficients=coefficients_from_value(doc.get('coefficients')),
        limits=limits_from_dict(doc.get('limits', {})),
        collision=collision_from_dict(doc.get('collision', {}), params.ds),
        outputs=OutputPaths(**(doc.get('outputs') or {})),
    )

    extra = doc.get('virtual_robots')
    if extra:
        scenario = add_virtual_robots(
            scenario, int(extra['count']), poses=extra.get('poses'), goals=extra.get('goals')
        )
    return scenario


def load_scenario(filepath: str) -> ScenarioConfig:
    """Read, validate and build a scenario file."""
    return scenario_from_dict(read_document(filepath))
