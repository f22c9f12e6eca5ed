"""
DNN inputs and targets.

Parameter modes take the n strongest MPCs of every user and lay out
[aoa_az (, rss_dbm) (, toa_s)] per MPC slot. ABS_RESPONSE flattens |h| of the
K x M channel response, subcarrier-major. Every column is min-max scaled to
[0, 1]; a constant column maps to 0.5.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import Mpc
from .config import NUM_MPCS, PAD_RSS_DBM
from .errors import ConfigError, ShapeError

SENTINEL_MPC = Mpc(rss_dbm=PAD_RSS_DBM, toa_s=0.0, phase_rad=0.0, aoa_az_rad=0.0, aoa_el_rad=0.0)


class FeatureMode(Enum):
    AOA = "aoa"
    AOA_RSS = "aoa-rss"
    AOA_RSS_TOA = "aoa-rss-toa"
    ABS_RESPONSE = "abs-response"

    @property
    def params_per_mpc(self) -> int:
        return {"aoa": 1, "aoa-rss": 2, "aoa-rss-toa": 3}.get(self.value, 0)

    @classmethod
    def parse(cls, value: str) -> "FeatureMode":
        key = value.strip().lower().replace("_", "-")
        for mode in cls:
            if mode.value == key:
                return mode
        raise ConfigError(f"unknown feature mode {value!r} "
                          f"(choose from {', '.join(m.value for m in cls)})")


@dataclass(frozen=True)
class NormParams:
    mins: np.ndarray
    maxs: np.ndarray

    def to_dict(self) -> Dict[str, List[float]]:
        return {"min": [float(v) for v in self.mins], "max": [float(v) for v in self.maxs]}

    @classmethod
    def from_dict(cls, data: Dict[str, List[float]]) -> "NormParams":
        mins = np.asarray(data["min"], dtype=float)
        maxs = np.asarray(data["max"], dtype=float)
        if mins.shape != maxs.shape:
            raise ShapeError("norm params min/max lengths differ")
        return cls(mins, maxs)


@dataclass(frozen=True)
class FeatureSet:
    mode: FeatureMode
    num_mpcs: int
    matrix: np.ndarray
    norm_params: NormParams
    columns: Tuple[str, ...]
    # users that needed sentinel MPCs
    padded: np.ndarray

    @property
    def num_features(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class LabelMatrix:
    matrix: np.ndarray
    norm_params: NormParams


# ==============================================================================
# NORMALIZATION
# ==============================================================================

def fit_norm(raw: np.ndarray) -> NormParams:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {raw.shape}")
    return NormParams(raw.min(axis=0), raw.max(axis=0))


def apply_norm(raw: np.ndarray, params: NormParams, clip: bool = False) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[1] != params.mins.shape[0]:
        raise ShapeError(f"matrix width {raw.shape[-1]} does not match "
                         f"{params.mins.shape[0]} normalization columns")
    span = params.maxs - params.mins
    flat = span <= 0
    safe = np.where(flat, 1.0, span)
    out = (raw - params.mins) / safe
    out[:, flat] = 0.5
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out


def invert_norm(matrix: np.ndarray, params: NormParams) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] != params.mins.shape[0]:
        raise ShapeError(f"matrix width {matrix.shape[-1]} does not match "
                         f"{params.mins.shape[0]} normalization columns")
    return params.mins + matrix * (params.maxs - params.mins)


# ==============================================================================
# OPERATIONS
# ==============================================================================

def select_top_mpcs(mpcs: Sequence[Mpc], n: int) -> Tuple[List[Mpc], bool]:
    """The n strongest MPCs, strongest first; padded with sentinels when short.

    Returns (selection, padded). Ties go to the earlier arrival, then the
    smaller azimuth.
    """
    if n <= 0:
        raise ConfigError(f"number of MPCs must be positive, got {n}")
    if len(mpcs) == 0:
        raise ConfigError("select_top_mpcs needs at least one MPC")
    ranked = sorted(mpcs, key=lambda p: (-p.rss_dbm, p.toa_s, p.aoa_az_rad))
    chosen = ranked[:n]
    padded = len(chosen) < n
    chosen.extend([SENTINEL_MPC] * (n - len(chosen)))
    return chosen, padded


def feature_columns(mode: FeatureMode, n: int, response_shape: Optional[Tuple[int, int]] = None) -> Tuple[str, ...]:
    if mode is FeatureMode.ABS_RESPONSE:
        if response_shape is None:
            raise ConfigError("abs-response columns need the response shape")
        K, M = response_shape
        return tuple(f"h_k{k}_m{m}" for k in range(K) for m in range(M))
    names = ["aoa_az_rad", "rss_dbm", "toa_s"][:mode.params_per_mpc]
    return tuple(f"{name}_{slot}" for slot in range(1, n + 1) for name in names)


def raw_features(per_user_mpcs: Sequence[Sequence[Mpc]],
                 responses: Optional[np.ndarray],
                 mode: FeatureMode,
                 n: int = NUM_MPCS) -> Tuple[np.ndarray, np.ndarray, Tuple[str, ...]]:
    """Un-normalized feature matrix, padded-user mask and column names."""
    if mode is FeatureMode.ABS_RESPONSE:
        if responses is None:
            raise ConfigError("abs-response mode needs channel responses")
        responses = np.asarray(responses)
        if responses.ndim != 3:
            raise ShapeError(f"responses must be [users, K, M], got shape {responses.shape}")
        if per_user_mpcs is not None and len(per_user_mpcs) not in (0, responses.shape[0]):
            raise ShapeError(f"{len(per_user_mpcs)} MPC lists for {responses.shape[0]} responses")
        users = responses.shape[0]
        matrix = np.abs(responses).reshape(users, -1)
        columns = feature_columns(mode, n, responses.shape[1:])
        empty = np.zeros(users, dtype=bool)
        if per_user_mpcs:
            empty = np.array([len(m) == 0 for m in per_user_mpcs], dtype=bool)
        return matrix, empty, columns

    if n <= 0:
        raise ConfigError(f"number of MPCs must be positive, got {n}")
    if responses is not None and len(responses) != len(per_user_mpcs):
        raise ShapeError(f"{len(per_user_mpcs)} MPC lists for {len(responses)} responses")
    rows = []
    padded = []
    for mpcs in per_user_mpcs:
        if len(mpcs) == 0:
            chosen, was_padded = [SENTINEL_MPC] * n, True
        else:
            chosen, was_padded = select_top_mpcs(mpcs, n)
        row = []
        for p in chosen:
            row.append(p.aoa_az_rad)
            if mode.params_per_mpc >= 2:
                row.append(p.rss_dbm)
            if mode.params_per_mpc >= 3:
                row.append(p.toa_s)
        rows.append(row)
        padded.append(was_padded)
    if not rows:
        raise ShapeError("no users to build features from")
    return np.asarray(rows, dtype=float), np.asarray(padded, dtype=bool), feature_columns(mode, n)


def assemble_features(per_user_mpcs: Sequence[Sequence[Mpc]],
                      responses: Optional[np.ndarray],
                      mode: FeatureMode,
                      n: int = NUM_MPCS,
                      norm_params: Optional[NormParams] = None) -> FeatureSet:
    """Build and normalize features.

    Without norm_params the dataset's own per-column min/max is fitted and
    stored; with them (split protocol) they are applied and values clipped to
    [0, 1].
    """
    matrix, padded, columns = raw_features(per_user_mpcs, responses, mode, n)
    if norm_params is None:
        params = fit_norm(matrix)
        normalized = apply_norm(matrix, params)
    else:
        params = norm_params
        normalized = apply_norm(matrix, params, clip=True)
    return FeatureSet(mode=mode, num_mpcs=n, matrix=normalized, norm_params=params,
                      columns=columns, padded=padded)


def normalize_labels(points) -> LabelMatrix:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise ConfigError("cannot normalize an empty label set")
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeError(f"labels must be [users, 2], got shape {pts.shape}")
    params = fit_norm(pts)
    return LabelMatrix(apply_norm(pts, params), params)


def denormalize_labels(matrix, norm_params: NormParams) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.size == 0:
        raise ConfigError("cannot denormalize an empty label set")
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.shape[1] != 2:
        raise ShapeError(f"labels must have 2 columns, got {m.shape[1]}")
    return invert_norm(m, norm_params)


def split_indices(n: int, holdout_fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded train/test index split; both sides keep ascending order."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ConfigError(f"holdout fraction must be in (0, 1), got {holdout_fraction}")
    if n < 2:
        raise ConfigError("need at least 2 users to hold some out")
    n_test = int(round(n * holdout_fraction))
    n_test = min(max(n_test, 1), n - 1)
    order = rng.permutation(n)
    return np.sort(order[n_test:]), np.sort(order[:n_test])
