"""
System Identification Module

Quantifies the gap between the nominal unicycle model and observed motion:
per-axis least-squares scaling coefficients fitted from pose-rate data, and
the average distance of a real trajectory from a simulated one.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .errors import DegenerateDataError, InvalidInputError
from .model import IDENTITY_COEFFICIENTS, V_MAX, W_MAX, ModelCoefficients, unicycle_rates, wrap_angle
from .simulator import TrajectoryLog

logger = logging.getLogger(__name__)

AXES = ('x1', 'x2', 'x3')

# Real samples processed per block in trajectory_error
_ERROR_CHUNK = 256


@dataclass
class RegressionDataset:
    """
    Paired pose-rate observations.

    Attributes:
        model_rates: (d, 3) rates predicted by the nominal model
        observed_rates: (d, 3) rates differenced from observed poses
    """
    model_rates: np.ndarray
    observed_rates: np.ndarray

    def __post_init__(self):
        self.model_rates = np.asarray(self.model_rates, dtype=float)
        self.observed_rates = np.asarray(self.observed_rates, dtype=float)
        if self.model_rates.ndim != 2 or self.model_rates.shape[1] != 3:
            raise InvalidInputError(f"model_rates must have shape (d, 3), got {self.model_rates.shape}")
        if self.model_rates.shape != self.observed_rates.shape:
            raise InvalidInputError(
                f"Shape mismatch: {self.model_rates.shape} vs {self.observed_rates.shape}"
            )
        if self.d < 2:
            raise InvalidInputError(f"At least 2 observations required, got {self.d}")
        if not (np.all(np.isfinite(self.model_rates)) and np.all(np.isfinite(self.observed_rates))):
            raise InvalidInputError("Rates must be finite")

    @property
    def d(self) -> int:
        return self.model_rates.shape[0]


def fit_coefficients(data: RegressionDataset) -> ModelCoefficients:
    """
    Per-axis least squares: a_k = <model_k, observed_k> / <model_k, model_k>.

    Raises:
        DegenerateDataError: A model column has zero energy, or a fit is not positive
    """
    alphas = []
    for axis in range(3):
        m = data.model_rates[:, axis]
        o = data.observed_rates[:, axis]
        energy = float(m @ m)
        if energy == 0.0:
            raise DegenerateDataError(f"Model rate column {AXES[axis]} has zero energy", axis)
        alpha = float(m @ o) / energy
        if not alpha > 0:
            raise DegenerateDataError(f"Fitted coefficient for {AXES[axis]} is not positive ({alpha})", axis)
        alphas.append(alpha)
    return ModelCoefficients(*alphas)


def rate_observations(poses: Any, dt: float) -> np.ndarray:
    """
    Forward-difference pose rates of one robot.

    Headings are differenced on the circle, so a crossing of +/-pi yields a
    small rate.

    Args:
        poses: (K, 3) array or sequence of RobotPose, uniformly sampled
        dt: Sample period (s)

    Returns:
        (K - 1, 3) rates
    """
    if dt <= 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if isinstance(poses, np.ndarray):
        p = poses.astype(float)
    else:
        p = np.array([q.as_array() if hasattr(q, 'as_array') else q for q in poses], dtype=float)
    if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 2:
        raise InvalidInputError(f"Need at least 2 poses of shape (K, 3), got {p.shape}")
    diff = np.diff(p, axis=0)
    diff[:, 2] = wrap_angle(diff[:, 2])
    return diff / dt


def trajectory_error(sim: np.ndarray, real: np.ndarray, real_times: Optional[Sequence[float]] = None) -> float:
    """
    Average distance from the real trajectory to the simulated path.

    For every real sample the distance to the closest point of the polyline
    through the sim samples is taken; these distances are averaged over real
    time (trapezoidal when real_times is given, else a plain mean over
    uniform samples). The measure is asymmetric: real is averaged, sim is
    minimized over.

    Args:
        sim: (M, 2) simulated positions
        real: (K, 2) observed positions
        real_times: Optional sample times of real

    Returns:
        Mean distance (m)
    """
    s = np.asarray(sim, dtype=float).reshape(-1, 2)
    r = np.asarray(real, dtype=float).reshape(-1, 2)
    if s.shape[0] == 0 or r.shape[0] == 0:
        raise InvalidInputError("trajectory_error needs non-empty series")

    dist = np.empty(r.shape[0])
    if s.shape[0] == 1:
        dist[:] = np.linalg.norm(r - s[0], axis=1)
    else:
        a = s[:-1]
        ab = s[1:] - a
        ab2 = np.einsum('ij,ij->i', ab, ab)
        ab2_safe = np.where(ab2 > 0, ab2, 1.0)
        for start in range(0, r.shape[0], _ERROR_CHUNK):
            p = r[start:start + _ERROR_CHUNK]
            ap = p[:, None, :] - a[None, :, :]
            t = np.clip(np.einsum('kmj,mj->km', ap, ab) / ab2_safe, 0.0, 1.0)
            t = np.where(ab2 > 0, t, 0.0)
            closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
            d = np.linalg.norm(closest - p[:, None, :], axis=2)
            dist[start:start + p.shape[0]] = d.min(axis=1)

    if real_times is None or r.shape[0] == 1:
        return float(dist.mean())
    times = np.asarray(real_times, dtype=float)
    span = times[-1] - times[0]
    if times.shape[0] != r.shape[0] or span <= 0:
        raise InvalidInputError("real_times must match real and span a positive interval")
    return float(np.sum(0.5 * (dist[1:] + dist[:-1]) * np.diff(times)) / span)


def dataset_from_log(
    log: TrajectoryLog,
    robots: Optional[Sequence[int]] = None,
    skip_contacts: bool = True
) -> RegressionDataset:
    """
    Pair logged commands with differenced poses.

    Model rates use identity coefficients on the logged (v, w) commands;
    ticks with a contact are skipped since contact resolution is not part
    of the model.
    """
    poses = log.all_poses()
    ticks = poses.shape[0] - 1
    if ticks < 2:
        raise InvalidInputError(f"Log too short for identification ({ticks} transitions)")
    ids = range(log.n_robots) if robots is None else robots
    model, observed = [], []
    for i in ids:
        obs = rate_observations(poses[:ticks + 1, i], log.dt)
        mod = unicycle_rates(poses[:ticks, i], log.unicycle[:ticks, i], IDENTITY_COEFFICIENTS)
        keep = np.ones(ticks, dtype=bool)
        if skip_contacts:
            keep &= log.collide[:ticks, i] == 0
        model.append(mod[keep])
        observed.append(obs[keep])
    data = RegressionDataset(np.vstack(model), np.vstack(observed))
    logger.info("Identification dataset: %d observations from %d robot(s)", data.d, len(list(ids)))
    return data


def synthesize_dataset(
    coeffs: ModelCoefficients,
    d: int = 30000,
    sigma: float = 0.01,
    seed: int = 0,
    v_max: float = V_MAX,
    w_max: float = W_MAX
) -> RegressionDataset:
    """
    Synthetic dataset with known coefficients.

    Headings, speeds and turn rates are drawn uniformly; observed rates are
    the coefficient-scaled model rates plus Gaussian noise of std sigma.
    """
    if d < 2:
        raise InvalidInputError(f"d must be at least 2, got {d}")
    g = np.random.default_rng(seed)
    poses = np.column_stack((np.zeros(d), np.zeros(d), g.uniform(-np.pi, np.pi, d)))
    cmds = np.column_stack((g.uniform(-v_max, v_max, d), g.uniform(-w_max, w_max, d)))
    model = unicycle_rates(poses, cmds, IDENTITY_COEFFICIENTS)
    observed = model * coeffs.as_array() + g.normal(0.0, sigma, model.shape)
    return RegressionDataset(model, observed)


def fit_report(data: RegressionDataset, coeffs: Optional[ModelCoefficients] = None) -> Dict[str, Any]:
    """Fitted coefficients with per-axis RMS residuals, as written by the sysid command."""
    coeffs = coeffs or fit_coefficients(data)
    residual = data.observed_rates - data.model_rates * coeffs.as_array()
    rms = np.sqrt(np.mean(residual ** 2, axis=0))
    return {
        'alpha1': coeffs.a1,
        'alpha2': coeffs.a2,
        'alpha3': coeffs.a3,
        'd': data.d,
        'residuals': {axis: float(v) for axis, v in zip(AXES, rms)},
    }
