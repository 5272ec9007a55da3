"""
Command-line front end.

Subcommands:
    simulate    run a scenario once and write its trajectory log
    verify      Monte Carlo safety gate; exit 1 when barriers are required
    benchmark   time centralized vs decentralized certificate computation
    sysid       fit model coefficients from trajectory logs
    traj-error  average distance between a simulated and a real trajectory

Exit codes:
    0  success, or gate passed
    1  gate failed (barrier certificates required)
    2  usage, scenario validation or log schema error (JSON document on stderr)
    3  internal error, or a run that aborted
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .barrier import (
    FilterMode,
    benchmark_certificates,
    format_benchmark_table,
    write_benchmark_csv,
)
from .errors import InvalidInputError, ScenarioValidationError, SchemaMismatchError
from .log import configure_logging
from .model import ModelCoefficients
from .report_builder import SafetyReportBuilder
from .scenario import ScenarioConfig, load_scenario
from .simulator import NO_NOISE, RunStatus, run, summarize
from .sysid import (
    RegressionDataset,
    dataset_from_log,
    fit_report,
    synthesize_dataset,
    trajectory_error,
)
from .trajectory_io import read_trajectory, write_plot_data, write_trajectory
from .verification import verify

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3

MODE_CHOICES = [m.value for m in FilterMode]


def _emit_error(document: Dict[str, Any]):
    print(json.dumps(document, indent=2), file=sys.stderr)


def _write_json(data: Dict[str, Any], filepath: str):
    with open(filepath, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def _apply_overrides(scenario: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    """Command-line overrides; the config hash reflects them."""
    changes: Dict[str, Any] = {}
    noise = scenario.noise
    if getattr(args, 'no_noise', False):
        noise = NO_NOISE.with_seed(noise.seed)
    if args.seed is not None:
        noise = noise.with_seed(args.seed)
    if noise is not scenario.noise:
        changes['noise'] = noise
    if args.filter is not None:
        changes['barrier_mode'] = FilterMode(args.filter)
    if getattr(args, 'duration', None) is not None:
        changes['duration'] = args.duration
    if getattr(args, 'runs', None) is not None:
        changes['thresholds'] = replace(scenario.thresholds, runs=args.runs)
    return replace(scenario, **changes) if changes else scenario


def _default_output(scenario: ScenarioConfig, configured: Optional[str], suffix: str) -> str:
    return configured or f"{scenario.name}{suffix}"


# ----------------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(load_scenario(args.config), args)
    log = run(scenario)
    summary = summarize(log)

    trajectory_path = args.out or _default_output(scenario, scenario.outputs.trajectory, "-trajectory.csv")
    write_trajectory(log, trajectory_path)
    plot_path = args.plot or scenario.outputs.plot
    if plot_path:
        write_plot_data(log, plot_path)

    document = {'header': dict(log.header), 'scenario': scenario.name, 'summary': summary.to_dict(),
                'trajectory': trajectory_path}
    if args.summary:
        _write_json(document, args.summary)

    status_icon = "✅" if log.status is RunStatus.OK else "❌"
    print(f"{status_icon} {scenario.name}: {summary.ticks} ticks, {summary.robots} robots")
    min_d = "n/a" if math.isinf(summary.min_distance) else f"{summary.min_distance:.4f} m"
    print(f"   Minimum pairwise distance: {min_d}")
    print(f"   Contact ticks: {summary.contact_ticks}, total damage: {summary.total_damage:.3e} J")
    print(f"   Filter interventions: {summary.filter_interventions}, emergency stops: {summary.emergency_stops}")
    print(f"   Trajectory: {trajectory_path}")

    if log.status is not RunStatus.OK:
        _emit_error({'error': 'run_aborted', 'message': log.error})
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    loaded = load_scenario(args.config)
    # --filter only selects the rollout mode; deployment is judged against the file's mode
    requested = FilterMode(args.requested) if args.requested else loaded.barrier_mode
    scenario = _apply_overrides(loaded, args)
    report = verify(scenario, workers=args.workers)

    builder = SafetyReportBuilder()
    builder.set_report(report, requested)
    if args.nominal:
        builder.set_run_summary(summarize(run(scenario, noise=NO_NOISE.with_seed(scenario.noise.seed))))

    report_path = args.report or _default_output(scenario, scenario.outputs.report, "-safety-report.json")
    builder.save_json(report_path)
    if args.markdown:
        builder.save_markdown(args.markdown)

    data = builder.build_dict()
    icon = "✅" if report.passed else "❌"
    print(f"{icon} {report.verdict.value}: expected S = {report.mean_score:.6f} over {len(report.runs)} runs")
    print(f"   Deployment mode: {data['deployment_mode']}")
    for item in report.diagnostics:
        print(f"   - {item}")
    print(f"   Report: {report_path}")
    return EXIT_OK if report.passed else EXIT_GATE_FAILED


def _parse_n_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise InvalidInputError(f"--n expects comma-separated integers, got {text!r}")
    if not values or any(v < 1 for v in values):
        raise InvalidInputError(f"--n expects positive robot counts, got {text!r}")
    return values


def cmd_benchmark(args: argparse.Namespace) -> int:
    n_list = _parse_n_list(args.n)
    modes = ([FilterMode.CENTRALIZED, FilterMode.DECENTRALIZED] if args.modes == 'both'
             else [FilterMode(args.modes)])
    rows = []
    for mode in modes:
        rows.extend(benchmark_certificates(n_list, mode, iters=args.iters, seed=args.seed))
    print(format_benchmark_table(rows))
    if args.out:
        write_benchmark_csv(rows, args.out, {'seed': args.seed, 'version': __version__, 'iters': args.iters})
        print(f"\nWrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def _parse_alphas(text: str) -> ModelCoefficients:
    parts = text.split(',')
    if len(parts) != 3:
        raise InvalidInputError(f"--alpha expects three comma-separated values, got {text!r}")
    try:
        return ModelCoefficients(*(float(p) for p in parts))
    except ValueError:
        raise InvalidInputError(f"--alpha expects numbers, got {text!r}")


def cmd_sysid(args: argparse.Namespace) -> int:
    header: Dict[str, Any] = {'version': __version__}
    if args.synthetic:
        truth = _parse_alphas(args.alpha)
        data = synthesize_dataset(truth, d=args.samples, sigma=args.sigma, seed=args.seed)
        header.update({'seed': args.seed, 'source': 'synthetic', 'true_coefficients': truth.to_dict()})
    else:
        if not args.logs:
            raise InvalidInputError("sysid needs at least one trajectory log (or --synthetic)")
        parts = []
        sources = []
        for path in args.logs:
            log = read_trajectory(path)
            parts.append(dataset_from_log(log, skip_contacts=not args.include_contacts))
            sources.append({'path': path, 'config_hash': log.header.get('config_hash'),
                            'seed': log.header.get('seed')})
        data = RegressionDataset(
            np.vstack([p.model_rates for p in parts]),
            np.vstack([p.observed_rates for p in parts]),
        )
        header['sources'] = sources

    result = fit_report(data)
    print(f"alpha1 = {result['alpha1']:.4f}, alpha2 = {result['alpha2']:.4f}, "
          f"alpha3 = {result['alpha3']:.4f} (d = {result['d']})")
    if args.out:
        _write_json({'header': header, **result}, args.out)
    return EXIT_OK


def cmd_traj_error(args: argparse.Namespace) -> int:
    sim = read_trajectory(args.sim)
    real = read_trajectory(args.real)
    if sim.n_robots != real.n_robots:
        raise InvalidInputError(f"Robot count mismatch: sim has {sim.n_robots}, real has {real.n_robots}")
    robots = [args.robot] if args.robot is not None else list(range(sim.n_robots))
    for i in robots:
        if not 0 <= i < sim.n_robots:
            raise InvalidInputError(f"Robot {i} not in log (N = {sim.n_robots})")

    sim_poses = sim.all_poses()
    real_poses = real.all_poses()
    errors = {}
    for i in robots:
        errors[i] = trajectory_error(sim_poses[:, i, :2], real_poses[:real.n_ticks, i, :2], real.times)
        print(f"robot {i}: {errors[i]:.4f} m")
    mean = float(np.mean(list(errors.values())))
    print(f"mean: {mean:.4f} m")

    if args.out:
        _write_json({
            'header': {
                'version': __version__,
                'sim': {'path': args.sim, 'config_hash': sim.header.get('config_hash')},
                'real': {'path': args.real, 'config_hash': real.header.get('config_hash')},
            },
            'errors': {str(i): e for i, e in errors.items()},
            'mean': mean,
        }, args.out)
    return EXIT_OK


# ----------------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='swarmguard',
        description='Barrier-certified multi-robot simulation and safety verification',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  swarmguard simulate templates/scenarios/swap10.yaml --seed 7
  swarmguard verify templates/scenarios/headon_crash.yaml --markdown report.md
  swarmguard benchmark --n 10,40,100 --modes both --out timing.csv
  swarmguard sysid run.csv --out coefficients.json
  swarmguard traj-error sim.csv real.csv
        """
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='Run a scenario once')
    p.add_argument('config', help='Scenario file (YAML, JSON or TOML)')
    p.add_argument('--seed', type=int, help='Override the noise seed')
    p.add_argument('--filter', choices=MODE_CHOICES, help='Override the barrier mode')
    p.add_argument('--duration', type=float, help='Override the duration (s)')
    p.add_argument('--no-noise', action='store_true', help='Disable every noise source')
    p.add_argument('--out', help='Trajectory log path (.csv or .jsonl)')
    p.add_argument('--plot', help='Plot-data CSV path')
    p.add_argument('--summary', help='Run summary JSON path')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('verify', help='Monte Carlo safety gate')
    p.add_argument('config', help='Scenario file (YAML, JSON or TOML)')
    p.add_argument('--seed', type=int, help='Override the master seed')
    p.add_argument('--runs', type=int, help='Override the number of rollouts')
    p.add_argument('--filter', choices=MODE_CHOICES, help='Barrier mode during rollouts')
    p.add_argument('--requested', choices=MODE_CHOICES,
                   help='Mode the experimenter asks to deploy with (default: scenario mode)')
    p.add_argument('--workers', type=int, default=1, help='Worker processes for rollouts')
    p.add_argument('--nominal', action='store_true', help='Add a noise-free run summary to the report')
    p.add_argument('--report', help='Safety report JSON path')
    p.add_argument('--markdown', help='Safety report Markdown path')
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser('benchmark', help='Time certificate computation')
    p.add_argument('--n', default='10,40,100', help='Comma-separated robot counts')
    p.add_argument('--modes', choices=['centralized', 'decentralized', 'both'], default='both')
    p.add_argument('--iters', type=int, default=20, help='Timed iterations per cell')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', help='CSV output path')
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser('sysid', help='Fit model coefficients')
    p.add_argument('logs', nargs='*', help='Trajectory logs (.csv or .jsonl)')
    p.add_argument('--include-contacts', action='store_true', help='Keep ticks with contacts')
    p.add_argument('--synthetic', action='store_true', help='Fit a synthetic dataset instead of logs')
    p.add_argument('--alpha', default='0.8645,0.8119,0.4640', help='True coefficients for --synthetic')
    p.add_argument('--samples', type=int, default=30000, help='Observations for --synthetic')
    p.add_argument('--sigma', type=float, default=0.01, help='Rate noise for --synthetic')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', help='Coefficients JSON path')
    p.set_defaults(func=cmd_sysid)

    p = sub.add_parser('traj-error', help='Average distance of a real trajectory from a simulated one')
    p.add_argument('sim', help='Simulated trajectory log')
    p.add_argument('real', help='Observed trajectory log')
    p.add_argument('--robot', type=int, help='Only this robot')
    p.add_argument('--out', help='Result JSON path')
    p.set_defaults(func=cmd_traj_error)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        return args.func(args)
    except ScenarioValidationError as exc:
        _emit_error(exc.to_dict())
        return EXIT_USAGE
    except SchemaMismatchError as exc:
        _emit_error({'error': 'schema_mismatch', 'column': exc.column, 'message': str(exc)})
        return EXIT_USAGE
    except (ValueError, OSError, yaml.YAMLError) as exc:
        # InvalidInputError and friends are ValueErrors
        _emit_error({'error': 'invalid_input', 'message': str(exc)})
        return EXIT_USAGE
    except Exception as exc:
        logger.exception("Unhandled error in %s", args.command)
        _emit_error({'error': 'internal', 'message': str(exc)})
        return EXIT_INTERNAL


if __name__ == '__main__':
    sys.exit(main())
