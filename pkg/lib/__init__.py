"""
SwarmGuard

Barrier-certified multi-robot simulation with an offline Monte Carlo safety
gate, model identification and a certificate scaling benchmark.

Modules:
- model: unicycle dynamics and the single-integrator mapping
- qp_solver: small dense projection QPs
- barrier: barrier-certificate safety filter (centralized and decentralized)
- controllers: go-to-goal, waypoint, swap, consensus and formation controllers
- simulator: closed-loop simulation with contact mechanics and noise
- verification: damage, safety scores and the deployment gate
- sysid: coefficient regression and trajectory error
- scenario: declarative scenario files
- report_builder: safety reports in Markdown and JSON
"""

__version__ = "1.0.0"

from .barrier import BarrierParams, FilterMode, Workspace, apply_filter
from .controllers import Controller, ControllerKind, ControllerSpec
from .model import ModelCoefficients, ModelLimits, RobotPose, SwarmState
from .qp_solver import QpProblem, QpStatus, solve
from .report_builder import SafetyReportBuilder
from .scenario import ScenarioChecker, ScenarioConfig, load_scenario
from .simulator import NoiseModel, TrajectoryLog, add_virtual_robots, run
from .sysid import fit_coefficients, trajectory_error
from .verification import SafetyReport, SafetyThresholds, Verdict, verify

__all__ = [
    'BarrierParams',
    'FilterMode',
    'Workspace',
    'apply_filter',
    'Controller',
    'ControllerKind',
    'ControllerSpec',
    'ModelCoefficients',
    'ModelLimits',
    'RobotPose',
    'SwarmState',
    'QpProblem',
    'QpStatus',
    'solve',
    'SafetyReportBuilder',
    'ScenarioChecker',
    'ScenarioConfig',
    'load_scenario',
    'NoiseModel',
    'TrajectoryLog',
    'add_virtual_robots',
    'run',
    'fit_coefficients',
    'trajectory_error',
    'SafetyReport',
    'SafetyThresholds',
    'Verdict',
    'verify',
]
