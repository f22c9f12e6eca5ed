"""
Per-user channel datasets: generation from a scene, ingestion of external MPC
tables and the dataset directory layout.

    <dir>/users.csv        user_id,x,y (every user, with or without paths)
    <dir>/mpcs.csv         one row per MPC
    <dir>/responses.npy    complex [users, K, M]
    <dir>/dataset.json     channel settings and provenance
    <dir>/scene.json       the scene, when the data was traced here
"""

from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import config, console
from .channel import ChannelConfig, Mpc, channel_response, mpcs_for_paths
from .errors import ConfigError, DataIOError
from .presets import scene_from_dict, scene_json
from .scene import Point2D, Scene, build_grid, trace_paths
from .storage import (PathLike, ensure_dir, read_json, read_mpc_table, read_responses, read_users,
                      require_dir, write_json, write_mpc_table, write_responses, write_text,
                      write_users)

DATASET_VERSION = 1


@dataclass
class Dataset:
    user_ids: List[int]
    positions: np.ndarray           # [users, 2]
    mpcs: List[List[Mpc]]
    responses: np.ndarray           # complex [users, K, M]
    channel: ChannelConfig
    bs: Point2D
    scene: Optional[Scene] = None
    source: str = "traced"

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    def empty_users(self) -> List[int]:
        return [uid for uid, m in zip(self.user_ids, self.mpcs) if not m]

    def subset(self, index: Sequence[int]) -> "Dataset":
        index = list(index)
        return Dataset(
            user_ids=[self.user_ids[i] for i in index],
            positions=self.positions[index],
            mpcs=[self.mpcs[i] for i in index],
            responses=self.responses[index],
            channel=self.channel,
            bs=self.bs,
            scene=self.scene,
            source=self.source,
        )


def _response_or_zeros(mpcs: Sequence[Mpc], channel: ChannelConfig) -> np.ndarray:
    if not mpcs:
        return np.zeros((channel.num_subcarriers, channel.num_antennas), dtype=np.complex128)
    return channel_response(mpcs, channel)


def _user_mpcs(args) -> List[Mpc]:
    scene, bs, ue = args
    return mpcs_for_paths(trace_paths(scene, bs, ue), scene, bs)


def generate_dataset(scene: Scene, bs_index: int = 0, channel: Optional[ChannelConfig] = None,
                     workers: int = config.DEFAULT_WORKERS) -> Dataset:
    """Trace every grid user, convert paths to MPCs and synthesize responses.

    Output order is user_id order whatever the worker count.
    """
    if not 0 <= bs_index < len(scene.base_stations):
        raise ConfigError(f"no base station with index {bs_index} "
                          f"(scene has {len(scene.base_stations)})")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    channel = channel or ChannelConfig.for_scene(scene)
    bs = scene.base_stations[bs_index]
    grid = build_grid(scene)
    jobs = [(scene, bs, ue) for _, ue in grid]

    console.step(f"Tracing {len(jobs)} users in {scene.name or 'scene'} "
                 f"(order {scene.max_reflection_order}, {workers} worker(s))")
    if workers > 1 and len(jobs) > 1:
        with Pool(workers) as pool:
            per_user = pool.map(_user_mpcs, jobs, chunksize=max(1, len(jobs) // (4 * workers)))
    else:
        per_user = [_user_mpcs(job) for job in jobs]

    responses = np.stack([_response_or_zeros(m, channel) for m in per_user])
    dataset = Dataset(
        user_ids=[uid for uid, _ in grid],
        positions=np.array([[p.x, p.y] for _, p in grid], dtype=float),
        mpcs=per_user,
        responses=responses,
        channel=channel,
        bs=bs,
        scene=scene,
    )
    empty = dataset.empty_users()
    if empty:
        console.warn(f"{len(empty)} user(s) have no propagation path; their response is all zeros")
    console.success(f"{dataset.num_users} users, {sum(len(m) for m in per_user)} MPCs")
    return dataset


def ingest_mpc_table(path: PathLike, channel: ChannelConfig, bs: Point2D = Point2D(0.0, 0.0),
                     scene: Optional[Scene] = None) -> Dataset:
    """Dataset from an externally traced MPC table; responses are recomputed."""
    user_ids, positions, per_user = read_mpc_table(path)
    if not user_ids:
        raise DataIOError(f"{path}: MPC table has no rows")
    responses = np.stack([_response_or_zeros(m, channel) for m in per_user])
    console.info(f"ingested {len(user_ids)} users from {path}")
    return Dataset(user_ids, positions, per_user, responses, channel, Point2D(*bs), scene, "ingested")


# ==============================================================================
# DIRECTORY LAYOUT
# ==============================================================================

def _channel_dict(channel: ChannelConfig) -> Dict[str, Any]:
    return {
        "num_antennas": channel.num_antennas,
        "num_subcarriers": channel.num_subcarriers,
        "bandwidth_hz": channel.bandwidth_hz,
        "carrier_frequency_hz": channel.carrier_frequency_hz,
        "element_spacing_wavelengths": channel.element_spacing_wavelengths,
    }


def write_dataset(out_dir: PathLike, dataset: Dataset) -> List[Path]:
    out = ensure_dir(out_dir)
    written = [
        write_users(out / "users.csv", dataset.user_ids, dataset.positions),
        write_mpc_table(out / "mpcs.csv", dataset.user_ids, dataset.positions, dataset.mpcs),
        write_responses(out / "responses.npy", dataset.responses),
        write_json(out / "dataset.json", {
            "version": DATASET_VERSION,
            "source": dataset.source,
            "bs": [dataset.bs.x, dataset.bs.y],
            "channel": _channel_dict(dataset.channel),
            "users": dataset.num_users,
        }),
    ]
    if dataset.scene is not None:
        written.append(write_text(out / "scene.json", scene_json(dataset.scene)))
    return written


def read_dataset(path: PathLike) -> Dataset:
    root = require_dir(path)
    meta = read_json(root / "dataset.json")
    if meta.get("version") != DATASET_VERSION:
        raise DataIOError(f"{root}: unsupported dataset version {meta.get('version')!r}")
    try:
        channel = ChannelConfig(**meta["channel"])
        bs = Point2D(float(meta["bs"][0]), float(meta["bs"][1]))
    except (KeyError, TypeError, IndexError) as e:
        raise DataIOError(f"{root}/dataset.json is malformed: {e}")

    user_ids, positions = read_users(root / "users.csv")
    table_ids, _, table_mpcs = read_mpc_table(root / "mpcs.csv")
    by_user = dict(zip(table_ids, table_mpcs))
    unknown = set(by_user) - set(user_ids)
    if unknown:
        raise DataIOError(f"{root}: MPC rows for unknown users {sorted(unknown)[:5]}")
    mpcs = [by_user.get(uid, []) for uid in user_ids]

    responses_path = root / "responses.npy"
    if responses_path.is_file():
        responses = read_responses(responses_path)
        expected = (len(user_ids), channel.num_subcarriers, channel.num_antennas)
        if responses.shape != expected:
            raise DataIOError(f"{responses_path}: shape {responses.shape}, expected {expected}")
    else:
        responses = np.stack([_response_or_zeros(m, channel) for m in mpcs])

    scene = None
    if (root / "scene.json").is_file():
        scene = scene_from_dict(read_json(root / "scene.json"))
    return Dataset(user_ids, positions, mpcs, responses, channel, bs, scene, str(meta.get("source", "traced")))
