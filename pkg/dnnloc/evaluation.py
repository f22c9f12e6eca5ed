"""Localization error statistics and the LOS range-bearing baseline."""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .channel import path_to_mpc
from .config import SPEED_OF_LIGHT
from .errors import ConfigError, ShapeError
from .scene import Point2D, Scene, build_grid, is_los, trace_paths


@dataclass(frozen=True)
class EvalResult:
    per_user_error_m: np.ndarray
    cdf: Tuple[Tuple[float, float], ...]
    p50_m: float
    p90_m: float
    mean_m: float
    outlier_count: int
    outlier_threshold_m: Optional[float] = None

    @property
    def users(self) -> int:
        return int(self.per_user_error_m.shape[0])

    def summary(self) -> Dict[str, Any]:
        return {
            "users": self.users,
            "p50_m": self.p50_m,
            "p90_m": self.p90_m,
            "mean_m": self.mean_m,
            "max_m": float(self.per_user_error_m.max()),
            "outlier_count": self.outlier_count,
            "outlier_threshold_m": self.outlier_threshold_m,
        }


def localization_errors(predicted, actual) -> np.ndarray:
    """Per-user Euclidean distance between denormalized positions."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ShapeError(f"{p.shape[0] if p.ndim else 0} predictions for "
                         f"{a.shape[0] if a.ndim else 0} actual positions")
    if p.ndim != 2 or p.shape[1] != 2:
        raise ShapeError(f"positions must be [users, 2], got shape {p.shape}")
    return np.hypot(p[:, 0] - a[:, 0], p[:, 1] - a[:, 1])


def percentile(sorted_errors: np.ndarray, q: float) -> float:
    """Nearest rank: the value at 1-based index ceil(q N) of the ascending sort."""
    n = len(sorted_errors)
    # small slack so 0.9 * 10 does not round up to rank 10
    rank = max(1, math.ceil(q * n - 1e-9))
    return float(sorted_errors[min(rank, n) - 1])


def empirical_cdf(errors, outlier_threshold: Optional[float] = None) -> EvalResult:
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ConfigError("empirical_cdf needs at least one error")
    if np.any(~np.isfinite(e)) or np.any(e < 0):
        raise ConfigError("errors must be finite and non-negative")
    ordered = np.sort(e)
    n = len(ordered)
    cdf = tuple((float(v), (i + 1) / n) for i, v in enumerate(ordered))
    outliers = 0 if outlier_threshold is None else int(np.sum(e > outlier_threshold))
    return EvalResult(
        per_user_error_m=e,
        cdf=cdf,
        p50_m=percentile(ordered, 0.5),
        p90_m=percentile(ordered, 0.9),
        mean_m=float(e.mean()),
        outlier_count=outliers,
        outlier_threshold_m=outlier_threshold,
    )


def evaluate_positions(predicted, actual, scene: Optional[Scene] = None) -> EvalResult:
    """Errors plus CDF; outliers are errors beyond the scene's bounding-box diagonal."""
    threshold = scene.bounding_diagonal() if scene is not None else None
    return empirical_cdf(localization_errors(predicted, actual), threshold)


# ==============================================================================
# GEOMETRIC BASELINE
# ==============================================================================

def los_geometric_fix(bs: Point2D, aoa_az: float, toa_s: float) -> Point2D:
    """Position from one LOS arrival: range c * toa along the azimuth."""
    if not toa_s > 0:
        raise ConfigError(f"toa must be positive, got {toa_s}")
    r = SPEED_OF_LIGHT * toa_s
    return Point2D(bs[0] + r * math.cos(aoa_az), bs[1] + r * math.sin(aoa_az))


def geometric_oracle_errors(scene: Scene, bs_index: int = 0) -> Tuple[List[int], np.ndarray]:
    """Fix every LOS user from its direct path; returns (user ids, errors in meters)."""
    if not 0 <= bs_index < len(scene.base_stations):
        raise ConfigError(f"no base station with index {bs_index}")
    bs = scene.base_stations[bs_index]
    ids, errors = [], []
    for user_id, ue in build_grid(scene):
        if not is_los(scene, bs, ue):
            continue
        direct = next(p for p in trace_paths(scene, bs, ue) if p.bounce_count == 0)
        mpc = path_to_mpc(direct, scene, bs)
        fix = los_geometric_fix(bs, mpc.aoa_az_rad, mpc.toa_s)
        ids.append(user_id)
        errors.append(math.hypot(fix.x - ue.x, fix.y - ue.y))
    return ids, np.asarray(errors, dtype=float)
