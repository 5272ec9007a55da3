"""
Trajectory I/O Module

Reads and writes TrajectoryLog files in the documented log schema:

- CSV: ``#``-comment header block (config_hash, seed, version, dt), then one
  row per robot per tick
- JSONL: a ``{"header": {...}}`` line, then one JSON object per row, each
  validated against schemas/trajectory-record.json on read

Plot data (t, x_0, y_0, x_1, y_1, ...) is written for external plotting.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from jsonschema import Draft7Validator

from .errors import SchemaMismatchError
from .model import DEFAULT_DT
from .simulator import TrajectoryLog

logger = logging.getLogger(__name__)

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"
RECORD_SCHEMA = SCHEMA_DIR / "trajectory-record.json"

# Columns every log carries, in order
REQUIRED_COLUMNS = (
    't', 'id', 'x1', 'x2', 'x3',
    'ux_hat', 'uy_hat', 'ux_star', 'uy_star',
    'collide', 'e_loss',
)

# Written by the simulator; readers fill zeros when absent
OPTIONAL_COLUMNS = ('v', 'w', 'speed_before', 'speed_after', 'virtual')

TRAJECTORY_COLUMNS = REQUIRED_COLUMNS + OPTIONAL_COLUMNS

_INT_COLUMNS = {'id', 'collide', 'virtual'}


def _header_lines(header: Dict[str, Any]) -> List[str]:
    return [f"# {key}: {value}" for key, value in header.items()]


_NUMERIC_HEADER = {'seed': int, 'dt': float}


def _parse_header_value(key: str, value: str) -> Any:
    cast = _NUMERIC_HEADER.get(key)
    if cast is None:
        return value
    try:
        return cast(value)
    except ValueError:
        raise SchemaMismatchError(f"Header field '{key}' has non-numeric value {value!r}", key)


def _merged_header(log: TrajectoryLog, header: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    merged = dict(log.header)
    merged.setdefault('dt', log.dt)
    if header:
        merged.update(header)
    return merged


def _row(record) -> List[Any]:
    return [getattr(record, name) for name in TRAJECTORY_COLUMNS]


def write_trajectory_csv(log: TrajectoryLog, filepath: str, header: Optional[Dict[str, Any]] = None):
    """Write a log as CSV with a provenance comment block."""
    with open(filepath, 'w', newline='') as f:
        for line in _header_lines(_merged_header(log, header)):
            f.write(line + "\n")
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_COLUMNS)
        for record in log.records():
            writer.writerow(_row(record))
    logger.info("Wrote %d trajectory rows to %s", log.n_ticks * log.n_robots, filepath)


def write_trajectory_jsonl(log: TrajectoryLog, filepath: str, header: Optional[Dict[str, Any]] = None):
    """Write a log as line-delimited JSON; the first line holds the header."""
    with open(filepath, 'w') as f:
        f.write(json.dumps({'header': _merged_header(log, header)}, sort_keys=True) + "\n")
        for record in log.records():
            f.write(json.dumps(dict(zip(TRAJECTORY_COLUMNS, _row(record)))) + "\n")


def write_trajectory(log: TrajectoryLog, filepath: str, header: Optional[Dict[str, Any]] = None):
    """Dispatch on suffix: .jsonl writes JSON lines, anything else CSV."""
    if str(filepath).endswith('.jsonl'):
        write_trajectory_jsonl(log, filepath, header)
    else:
        write_trajectory_csv(log, filepath, header)


def _cast(column: str, value: Any, line: int) -> float:
    try:
        return int(value) if column in _INT_COLUMNS else float(value)
    except (TypeError, ValueError):
        raise SchemaMismatchError(f"Line {line}: column '{column}' has non-numeric value {value!r}", column)


def read_trajectory_csv(filepath: str) -> TrajectoryLog:
    """
    Load a CSV trajectory log.

    Raises:
        SchemaMismatchError: Missing required column, unknown column, a row
            whose field count differs from the header, or a non-numeric value
    """
    header: Dict[str, Any] = {}
    rows: List[Dict[str, Any]] = []
    with open(filepath, 'r', newline='') as f:
        lines = f.readlines()

    body_start = 0
    for body_start, text in enumerate(lines):
        if not text.startswith('#'):
            break
        key, _, value = text[1:].partition(':')
        header[key.strip()] = _parse_header_value(key.strip(), value.strip())
    else:
        body_start = len(lines)

    reader = csv.reader(lines[body_start:])
    columns = next(reader, None)
    if not columns:
        raise SchemaMismatchError(f"{filepath}: no column header", None)
    _check_columns(columns)

    for offset, fields in enumerate(reader):
        line = body_start + offset + 2
        if not fields:
            continue
        if len(fields) != len(columns):
            raise SchemaMismatchError(
                f"Line {line}: expected {len(columns)} fields, got {len(fields)}",
                columns[len(fields)] if len(fields) < len(columns) else None
            )
        rows.append({c: _cast(c, v, line) for c, v in zip(columns, fields)})

    return _assemble(rows, header, filepath)


def read_trajectory_jsonl(filepath: str) -> TrajectoryLog:
    """Load a JSONL trajectory log, validating every record against the record schema."""
    with open(RECORD_SCHEMA) as f:
        validator = Draft7Validator(json.load(f))
    header: Dict[str, Any] = {}
    rows: List[Dict[str, Any]] = []
    with open(filepath, 'r') as f:
        for line_no, text in enumerate(f, start=1):
            text = text.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaMismatchError(f"Line {line_no}: invalid JSON ({exc.msg})")
            if 'header' in obj and not rows and not header:
                header = dict(obj['header'])
                continue
            errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.path))
            if errors:
                err = errors[0]
                column = err.path[0] if err.path else _missing_property(err.message)
                raise SchemaMismatchError(f"Line {line_no}: {err.message}", column)
            rows.append({c: obj.get(c, 0) for c in TRAJECTORY_COLUMNS})
    return _assemble(rows, header, filepath)


def _missing_property(message: str) -> Optional[str]:
    # jsonschema: "'x1' is a required property"
    if message.endswith('is a required property'):
        return message.split("'")[1]
    return None


def read_trajectory(filepath: str) -> TrajectoryLog:
    """Dispatch on suffix like write_trajectory."""
    if str(filepath).endswith('.jsonl'):
        return read_trajectory_jsonl(filepath)
    return read_trajectory_csv(filepath)


def _check_columns(columns: List[str]):
    for name in REQUIRED_COLUMNS:
        if name not in columns:
            raise SchemaMismatchError(f"Required column '{name}' is missing", name)
    for name in columns:
        if name not in TRAJECTORY_COLUMNS:
            raise SchemaMismatchError(f"Unknown column '{name}'", name)


def _assemble(rows: List[Dict[str, Any]], header: Dict[str, Any], source: str) -> TrajectoryLog:
    if not rows:
        raise SchemaMismatchError(f"{source}: no trajectory rows")
    ids = sorted({int(r['id']) for r in rows})
    if ids != list(range(len(ids))):
        raise SchemaMismatchError(f"{source}: robot ids must be 0..N-1, got {ids}", 'id')
    n = len(ids)
    times = sorted({float(r['t']) for r in rows})
    k_of = {t: k for k, t in enumerate(times)}
    if len(rows) != n * len(times):
        raise SchemaMismatchError(
            f"{source}: {len(rows)} rows do not cover {len(times)} ticks x {n} robots", 't'
        )

    k_count = len(times)
    poses = np.zeros((k_count, n, 3))
    u_hat = np.zeros((k_count, n, 2))
    u_star = np.zeros((k_count, n, 2))
    unicycle = np.zeros((k_count, n, 2))
    collide = np.zeros((k_count, n), dtype=int)
    e_loss = np.zeros((k_count, n))
    speed_before = np.zeros((k_count, n))
    speed_after = np.zeros((k_count, n))
    virtual = np.zeros(n, dtype=bool)
    for r in rows:
        k, i = k_of[float(r['t'])], int(r['id'])
        poses[k, i] = (r['x1'], r['x2'], r['x3'])
        u_hat[k, i] = (r['ux_hat'], r['uy_hat'])
        u_star[k, i] = (r['ux_star'], r['uy_star'])
        unicycle[k, i] = (r.get('v', 0.0), r.get('w', 0.0))
        collide[k, i] = r['collide']
        e_loss[k, i] = r['e_loss']
        speed_before[k, i] = r.get('speed_before', 0.0)
        speed_after[k, i] = r.get('speed_after', 0.0)
        virtual[i] = bool(r.get('virtual', 0))

    dt = float(header.get('dt') or (times[1] - times[0] if k_count > 1 else DEFAULT_DT))
    return TrajectoryLog(
        dt=dt,
        times=np.array(times),
        poses=poses,
        u_hat=u_hat,
        u_star=u_star,
        unicycle=unicycle,
        collide=collide,
        e_loss=e_loss,
        speed_before=speed_before,
        speed_after=speed_after,
        virtual=virtual,
        header=header,
    )


def plot_columns(n_robots: int) -> List[str]:
    cols = ['t']
    for i in range(n_robots):
        cols.extend((f"x_{i}", f"y_{i}"))
    return cols


def write_plot_data(log: TrajectoryLog, filepath: str, include_final: bool = True,
                    header: Optional[Dict[str, Any]] = None):
    """
    Write per-tick robot positions as a wide CSV (t, x_0, y_0, x_1, y_1, ...).

    Args:
        log: Trajectory to export
        filepath: Destination
        include_final: Append the pose after the last tick when known
        header: Extra provenance fields merged over log.header
    """
    poses = log.all_poses() if include_final else log.poses
    times: Iterable[float] = list(log.times)
    if include_final and log.final_state is not None:
        times = list(times) + [log.final_state.time]
    with open(filepath, 'w', newline='') as f:
        for line in _header_lines(_merged_header(log, header)):
            f.write(line + "\n")
        writer = csv.writer(f)
        writer.writerow(plot_columns(log.n_robots))
        for t, frame in zip(times, poses):
            writer.writerow([t] + frame[:, :2].ravel().tolist())

