"""
Verification Module

Offline Monte Carlo safety gate. Each rollout perturbs dynamics, initial
positions and observations; collision damage is integrated with the
work-energy principle and turned into a cumulative score S = 1 - D / D_max
and per-robot scores s_i = 1 - D_i / d_i,max. A controller may run without
the online filter only when the expected S and every expected s_i are
positive.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .barrier import FilterMode
from .errors import InvalidParameterError
from .rng import derive_seed
from .simulator import ROBOT_MASS, NoiseModel, RunStatus, TrajectoryLog, run

if TYPE_CHECKING:
    from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)

DEFAULT_RUNS = 50
DEFAULT_D_MAX_INDIVIDUAL = 1e-3


class Verdict(Enum):
    """Gate decision."""
    PASS_UNFILTERED = "pass-unfiltered"
    FAIL_REQUIRES_BARRIERS = "fail-requires-barriers"


@dataclass(frozen=True)
class SafetyThresholds:
    """
    Damage budgets of the gate.

    Attributes:
        d_max_total: Cumulative damage threshold D_max (J)
        d_max_individual: Per-robot damage threshold d_i,max (J)
        runs: Monte Carlo rollouts
    """
    d_max_total: float
    d_max_individual: float
    runs: int = DEFAULT_RUNS

    def __post_init__(self):
        if not self.d_max_total > 0:
            raise InvalidParameterError(f"d_max_total must be positive, got {self.d_max_total}")
        if not self.d_max_individual > 0:
            raise InvalidParameterError(f"d_max_individual must be positive, got {self.d_max_individual}")
        if int(self.runs) < 1:
            raise InvalidParameterError(f"runs must be at least 1, got {self.runs}")

    @classmethod
    def for_swarm(cls, n: int, d_max_individual: float = DEFAULT_D_MAX_INDIVIDUAL,
                  runs: int = DEFAULT_RUNS) -> 'SafetyThresholds':
        """D_max = N * d_max_individual."""
        return cls(n * d_max_individual, d_max_individual, runs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'd_max_total': self.d_max_total,
            'd_max_individual': self.d_max_individual,
            'runs': self.runs,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SafetyThresholds':
        return cls(
            d_max_total=float(data['d_max_total']),
            d_max_individual=float(data['d_max_individual']),
            runs=int(data.get('runs', DEFAULT_RUNS)),
        )


@dataclass
class RunScore:
    """Damage and scores of one rollout."""
    index: int
    seed: int
    damage: float
    damage_individual: List[float]
    score: float
    scores_individual: List[float]
    min_distance: float
    contact_ticks: int
    status: str = RunStatus.OK.value
    error: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            'index': self.index,
            'seed': self.seed,
            'damage': self.damage,
            'damage_individual': self.damage_individual,
            'score': self.score,
            'scores_individual': self.scores_individual,
            'min_distance': None if math.isinf(self.min_distance) else self.min_distance,
            'contact_ticks': self.contact_ticks,
            'status': self.status,
            'error': self.error,
        }


@dataclass
class SafetyReport:
    """
    Outcome of a verification campaign.

    Attributes:
        scenario: Scenario name
        robots: Robot count
        filter_mode: Filter mode the rollouts ran with
        thresholds: Damage budgets
        noise: Noise model (its seed is the master seed)
        runs: Per-run scores, ordered by run index
        mean_score: Expected S
        mean_scores_individual: Expected s_i per robot
        worst_score: Lowest S over runs
        worst_scores_individual: Lowest s_i per robot over runs
        verdict: Gate decision
        diagnostics: Reasons behind a failing verdict
        header: Provenance (config_hash, seed, version)
    """
    scenario: str
    robots: int
    filter_mode: str
    thresholds: SafetyThresholds
    noise: NoiseModel
    runs: List[RunScore]
    mean_score: float
    mean_scores_individual: List[float]
    worst_score: float
    worst_scores_individual: List[float]
    verdict: Verdict
    diagnostics: List[str] = field(default_factory=list)
    header: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS_UNFILTERED

    @property
    def seeds(self) -> List[int]:
        return [r.seed for r in self.runs]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'header': dict(self.header),
            'scenario': self.scenario,
            'robots': self.robots,
            'filter_mode': self.filter_mode,
            'thresholds': self.thresholds.to_dict(),
            'noise': self.noise.to_dict(),
            'master_seed': self.noise.seed,
            'seeds': self.seeds,
            'summary': {
                'mean_score': self.mean_score,
                'mean_scores_individual': self.mean_scores_individual,
                'worst_score': self.worst_score,
                'worst_scores_individual': self.worst_scores_individual,
            },
            'verdict': self.verdict.value,
            'diagnostics': list(self.diagnostics),
            'runs': [r.to_dict() for r in self.runs],
        }


def damage(log: TrajectoryLog, mass: float = ROBOT_MASS) -> Tuple[float, List[float]]:
    """
    Work-energy damage of a log.

    D_i = sum_k I_i(k) * (m / 2) * (v_before(k)^2 - v_after(k)^2), each tick's
    term clamped at zero; D = sum_i D_i.

    Returns:
        (D, [D_i])
    """
    if mass <= 0:
        raise InvalidParameterError(f"mass must be positive, got {mass}")
    terms = 0.5 * mass * (log.speed_before ** 2 - log.speed_after ** 2)
    per_tick = np.where(log.collide == 1, np.maximum(terms, 0.0), 0.0)
    d_i = per_tick.sum(axis=0) if per_tick.size else np.zeros(log.n_robots)
    d_i = [float(v) for v in d_i]
    return float(sum(d_i)), d_i


def score(d_total: float, d_individual: List[float], thresholds: SafetyThresholds) -> Tuple[float, List[float]]:
    """S = 1 - D / D_max and s_i = 1 - D_i / d_i,max (unbounded below)."""
    s = 1.0 - d_total / thresholds.d_max_total
    s_i = [1.0 - d / thresholds.d_max_individual for d in d_individual]
    return s, s_i


def derive_run_seeds(master_seed: int, runs: int) -> List[int]:
    """Seeds of runs 0..runs-1; run k's seed does not depend on the run count."""
    return [derive_seed(master_seed, k) for k in range(runs)]


def _rollout(args: Tuple['ScenarioConfig', NoiseModel, FilterMode, int, float, int]) -> RunScore:
    scenario, noise, mode, index, mass, seed = args
    log = run(scenario, noise=noise.with_seed(seed), filter_mode=mode)
    d_total, d_i = damage(log, mass)
    s, s_i = score(d_total, d_i, scenario.thresholds)
    return RunScore(
        index=index,
        seed=seed,
        damage=d_total,
        damage_individual=d_i,
        score=s,
        scores_individual=s_i,
        min_distance=log.min_pairwise_distance(),
        contact_ticks=int(log.collide.sum()),
        status=log.status.value,
        error=log.error,
    )


def verify(
    scenario: 'ScenarioConfig',
    thresholds: Optional[SafetyThresholds] = None,
    noise: Optional[NoiseModel] = None,
    filter_mode: Optional[FilterMode] = None,
    workers: int = 1
) -> SafetyReport:
    """
    Run the Monte Carlo gate.

    Args:
        scenario: Validated scenario
        thresholds: Overrides scenario.thresholds
        noise: Overrides scenario.noise; its seed is the master seed
        filter_mode: Force a filter mode for the rollouts (default: the scenario's)
        workers: Worker processes for rollouts; results are reduced by run index

    Returns:
        SafetyReport; any aborted rollout fails the gate
    """
    thresholds = thresholds or scenario.thresholds
    noise = noise or scenario.noise
    mode = filter_mode if filter_mode is not None else scenario.barrier_mode
    scenario = replace(scenario, thresholds=thresholds)
    mass = scenario.collision.mass
    seeds = derive_run_seeds(noise.seed, thresholds.runs)
    jobs = [(scenario, noise, mode, k, mass, seed) for k, seed in enumerate(seeds)]

    logger.info("Verifying '%s': %d runs, filter %s", scenario.name, len(jobs), mode.value)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rollout, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_rollout(job))
            logger.info("Run %d/%d: S = %.6f", job[3] + 1, len(jobs), results[-1].score)

    n = len(scenario.robots.poses)
    scores = np.array([r.score for r in results])
    per_robot = np.array([r.scores_individual for r in results]).reshape(len(results), n)
    mean_s = float(scores.mean())
    mean_si = [float(v) for v in per_robot.mean(axis=0)]

    diagnostics: List[str] = []
    for r in results:
        if r.status != RunStatus.OK.value:
            diagnostics.append(f"run {r.index} (seed {r.seed}) aborted: {r.error}")
    if not mean_s > 0:
        diagnostics.append(f"expected cumulative score {mean_s:.6f} is not positive")
    for i, v in enumerate(mean_si):
        if not v > 0:
            diagnostics.append(f"robot {i}: expected individual score {v:.6f} is not positive")

    verdict = Verdict.FAIL_REQUIRES_BARRIERS if diagnostics else Verdict.PASS_UNFILTERED
    if verdict is Verdict.FAIL_REQUIRES_BARRIERS:
        logger.warning("Gate failed for '%s': %s", scenario.name, "; ".join(diagnostics))

    return SafetyReport(
        scenario=scenario.name,
        robots=n,
        filter_mode=mode.value,
        thresholds=thresholds,
        noise=noise,
        runs=results,
        mean_score=mean_s,
        mean_scores_individual=mean_si,
        worst_score=float(scores.min()),
        worst_scores_individual=[float(v) for v in per_robot.min(axis=0)],
        verdict=verdict,
        diagnostics=diagnostics,
        header={'config_hash': scenario.config_hash(), 'seed': noise.seed, 'version': __version__},
    )


def deployment_mode(report: SafetyReport, requested: FilterMode) -> FilterMode:
    """
    Filter mode an experiment actually executes with.

    A passing gate honours the request; a failing one enforces barriers,
    centralized when the request was to run unfiltered.
    """
    if report.passed:
        return requested
    return FilterMode.CENTRALIZED if requested is FilterMode.OFF else requested
