"""
On-disk formats: CSV tables via pandas, response tensors as .npy, JSON documents.

All writers produce the same bytes for the same inputs. Read failures surface as
DataIOError; files that parse but break a format rule raise DataIOError too.
"""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import config
from .channel import Mpc
from .errors import DataIOError
from .evaluation import EvalResult
from .features import FeatureMode, NormParams
from .neuralnet import MlpModel, model_from_dict, model_to_dict

PathLike = Union[str, Path]

MPC_COLUMNS = ["user_id", "x", "y", "mpc_index", "rss_dbm", "toa_s", "phase_rad", "aoa_az_rad", "aoa_el_rad"]
USER_COLUMNS = ["user_id", "x", "y"]
TRIAL_COLUMNS = ["trial", "h1", "h2", "learning_rate", "activation", "cost", "seed"]
MAP_COLUMNS = ["user_id", "actual_x", "actual_y", "pred_x", "pred_y", "error_m", "outlier"]
CDF_COLUMNS = ["error_m", "fraction"]
ABLATION_COLUMNS = ["scene", "mode", "seed", "p50_m", "p90_m", "mean_m", "users"]
DIVERGED = "DIVERGED"


# ==============================================================================
# PRIMITIVES
# ==============================================================================

def ensure_dir(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataIOError(f"cannot create directory {path}: {e}")
    return path


def require_dir(path: PathLike) -> Path:
    path = Path(path)
    if not path.exists() or not path.is_dir():
        raise DataIOError(f"Invalid directory: {path}")
    return path


def require_file(path: PathLike) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"missing file: {path}")
    return path


def write_text(path: PathLike, text: str) -> Path:
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}")
    return path


def write_json(path: PathLike, data: Any) -> Path:
    return write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path: PathLike) -> Any:
    path = require_file(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataIOError(f"{path} is not valid JSON: {e}")
    except OSError as e:
        raise DataIOError(f"cannot read {path}: {e}")


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    try:
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}")
    return path


def read_csv(path: PathLike, columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Read a CSV; with `columns`, the header must be exactly those names in order."""
    path = require_file(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise DataIOError(f"cannot read table {path}: {e}")
    if columns is not None and list(frame.columns) != list(columns):
        raise DataIOError(f"{path}: expected header {','.join(columns)}, "
                          f"got {','.join(map(str, frame.columns))}")
    return frame


def file_sha256(path: PathLike) -> str:
    path = require_file(path)
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ==============================================================================
# MPC TABLE / USERS / RESPONSES
# ==============================================================================

def mpc_frame(user_ids: Sequence[int], positions: np.ndarray,
              per_user_mpcs: Sequence[Sequence[Mpc]]) -> pd.DataFrame:
    rows = []
    for uid, (x, y), mpcs in zip(user_ids, positions, per_user_mpcs):
        for i, p in enumerate(mpcs):
            rows.append((int(uid), float(x), float(y), i, p.rss_dbm, p.toa_s,
                         p.phase_rad, p.aoa_az_rad, p.aoa_el_rad))
    return pd.DataFrame(rows, columns=MPC_COLUMNS)


def write_mpc_table(path: PathLike, user_ids: Sequence[int], positions: np.ndarray,
                    per_user_mpcs: Sequence[Sequence[Mpc]]) -> Path:
    return write_csv(path, mpc_frame(user_ids, positions, per_user_mpcs))


def read_mpc_table(path: PathLike) -> Tuple[List[int], np.ndarray, List[List[Mpc]]]:
    """(user ids ascending, positions [users, 2], MPC lists in mpc_index order)."""
    frame = read_csv(path, MPC_COLUMNS)
    try:
        frame = frame.astype({"user_id": "int64", "mpc_index": "int64"})
        numeric = frame[MPC_COLUMNS[1:]].astype(float)
    except (TypeError, ValueError) as e:
        raise DataIOError(f"{path}: non-numeric MPC table entry: {e}")
    if not np.all(np.isfinite(numeric.to_numpy())):
        raise DataIOError(f"{path}: MPC table holds non-finite values")

    frame = frame.sort_values(["user_id", "mpc_index"], kind="mergesort")
    user_ids: List[int] = []
    positions = []
    per_user: List[List[Mpc]] = []
    for uid, group in frame.groupby("user_id", sort=True):
        if group["mpc_index"].duplicated().any():
            raise DataIOError(f"{path}: user {uid} repeats an mpc_index")
        user_ids.append(int(uid))
        first = group.iloc[0]
        positions.append((float(first["x"]), float(first["y"])))
        per_user.append([Mpc(float(r.rss_dbm), float(r.toa_s), float(r.phase_rad),
                             float(r.aoa_az_rad), float(r.aoa_el_rad))
                         for r in group.itertuples(index=False)])
    return user_ids, np.asarray(positions, dtype=float).reshape(-1, 2), per_user


def write_users(path: PathLike, user_ids: Sequence[int], positions: np.ndarray) -> Path:
    frame = pd.DataFrame({"user_id": [int(u) for u in user_ids],
                          "x": positions[:, 0].astype(float), "y": positions[:, 1].astype(float)})
    return write_csv(path, frame)


def read_users(path: PathLike) -> Tuple[List[int], np.ndarray]:
    frame = read_csv(path, USER_COLUMNS)
    return [int(u) for u in frame["user_id"]], frame[["x", "y"]].to_numpy(dtype=float)


def write_responses(path: PathLike, responses: np.ndarray) -> Path:
    path = Path(path)
    try:
        np.save(path, np.asarray(responses, dtype=np.complex128), allow_pickle=False)
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}")
    return path


def read_responses(path: PathLike) -> np.ndarray:
    path = require_file(path)
    try:
        arr = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise DataIOError(f"cannot read response tensor {path}: {e}")
    if arr.ndim != 3:
        raise DataIOError(f"{path}: responses must be [users, K, M], got shape {arr.shape}")
    return arr


# ==============================================================================
# FEATURES / MODELS / TRIALS
# ==============================================================================

def write_matrix(path: PathLike, matrix: np.ndarray, columns: Sequence[str]) -> Path:
    return write_csv(path, pd.DataFrame(np.asarray(matrix, dtype=float), columns=list(columns)))


def write_norm(path: PathLike, feature_norm: NormParams, label_norm: NormParams,
               mode: FeatureMode, num_mpcs: int) -> Path:
    return write_json(path, {
        "mode": mode.value,
        "num_mpcs": num_mpcs,
        "features": feature_norm.to_dict(),
        "labels": label_norm.to_dict(),
    })


@dataclass
class ModelBundle:
    """A trained model plus what is needed to feed it and read its output."""
    model: MlpModel
    mode: FeatureMode
    num_mpcs: int
    feature_norm: NormParams
    label_norm: NormParams

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": model_to_dict(self.model),
            "mode": self.mode.value,
            "num_mpcs": self.num_mpcs,
            "feature_norm": self.feature_norm.to_dict(),
            "label_norm": self.label_norm.to_dict(),
        }


def write_model_bundle(path: PathLike, bundle: ModelBundle) -> Path:
    return write_text(path, json.dumps(bundle.to_dict(), indent=1, sort_keys=True) + "\n")


def read_model_bundle(path: PathLike) -> ModelBundle:
    data = read_json(path)
    try:
        return ModelBundle(
            model=model_from_dict(data["model"]),
            mode=FeatureMode.parse(data["mode"]),
            num_mpcs=int(data["num_mpcs"]),
            feature_norm=NormParams.from_dict(data["feature_norm"]),
            label_norm=NormParams.from_dict(data["label_norm"]),
        )
    except (KeyError, TypeError) as e:
        raise DataIOError(f"{path}: malformed model file: {e}")


def trial_frame(trials) -> pd.DataFrame:
    rows = [(t.index, t.config.h1, t.config.h2, t.config.learning_rate, t.config.activation.value,
             DIVERGED if t.cost is None else repr(float(t.cost)), t.seed) for t in trials]
    return pd.DataFrame(rows, columns=TRIAL_COLUMNS)


def write_trial_log(path: PathLike, trials) -> Path:
    return write_csv(path, trial_frame(trials))


# ==============================================================================
# EVALUATION OUTPUTS
# ==============================================================================

def write_location_map(path: PathLike, user_ids: Sequence[int], actual: np.ndarray,
                       predicted: np.ndarray, result: EvalResult) -> Path:
    threshold = result.outlier_threshold_m
    errors = result.per_user_error_m
    outlier = np.zeros(len(errors), dtype=int) if threshold is None else (errors > threshold).astype(int)
    frame = pd.DataFrame({
        "user_id": [int(u) for u in user_ids],
        "actual_x": actual[:, 0], "actual_y": actual[:, 1],
        "pred_x": predicted[:, 0], "pred_y": predicted[:, 1],
        "error_m": errors, "outlier": outlier,
    }, columns=MAP_COLUMNS)
    return write_csv(path, frame)


def write_cdf(path: PathLike, result: EvalResult) -> Path:
    return write_csv(path, pd.DataFrame(list(result.cdf), columns=CDF_COLUMNS))


def write_ablation(path: PathLike, rows: Sequence[Dict[str, Any]]) -> Path:
    return write_csv(path, pd.DataFrame(list(rows), columns=ABLATION_COLUMNS))


# ==============================================================================
# RUN MANIFEST
# ==============================================================================

def make_run_id(inputs: Dict[str, Any]) -> str:
    canonical = json.dumps(inputs, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _timestamp() -> str:
    pinned = config.source_date_epoch()
    moment = pinned if pinned is not None else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(moment))


@dataclass
class RunManifest:
    command: str
    seed: int
    scene_hash: Optional[str] = None
    feature_mode: Optional[str] = None
    hyperparameters: Dict[str, Any] = field(default_factory=dict)
    inputs: Dict[str, Any] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    status: str = "ok"
    run_id: str = ""
    created_at: str = ""

    def finalize(self) -> "RunManifest":
        self.run_id = make_run_id({
            "command": self.command, "seed": self.seed, "scene_hash": self.scene_hash,
            "feature_mode": self.feature_mode, "hyperparameters": self.hyperparameters,
            "inputs": self.inputs,
        })
        self.created_at = _timestamp()
        return self


def write_manifest(out_dir: PathLike, manifest: RunManifest) -> Path:
    return write_json(Path(out_dir) / "manifest.json", asdict(manifest.finalize()))


def read_manifest(path: PathLike) -> Dict[str, Any]:
    data = read_json(path)
    if not isinstance(data, dict) or "run_id" not in data:
        raise DataIOError(f"{path}: not a run manifest")
    return data
