"""
Training and evaluation protocol shared by the CLI commands and the ablation runner.

`full` trains and evaluates on every kept user; `holdout:<f>` fits normalization
and weights on the training rows and reports the held-out rows.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config, console
from .channel import ChannelConfig
from .dataset import Dataset, generate_dataset
from .errors import ConfigError, DivergenceError, ShapeError
from .evaluation import EvalResult, evaluate_positions
from .features import FeatureMode, apply_norm, assemble_features, normalize_labels, raw_features, split_indices
from .hyperopt import HyperPoint, HyperSpace, Trial, optimize, training_objective
from .neuralnet import Activation, TrainConfig, localization_model, predict_positions, train
from .scene import Scene
from .seeding import substream
from .storage import ModelBundle

DEFAULT_POINT = HyperPoint(h1=24, h2=24, learning_rate=0.3, activation=Activation.TANSIG)


def parse_split(text: str) -> Optional[float]:
    """"full" -> None, "holdout:0.2" -> 0.2."""
    value = text.strip().lower()
    if value == "full":
        return None
    if value.startswith("holdout:"):
        try:
            fraction = float(value.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad holdout fraction in {text!r}")
        if not 0.0 < fraction < 1.0:
            raise ConfigError(f"holdout fraction must be in (0, 1), got {fraction}")
        return fraction
    raise ConfigError(f"split must be 'full' or 'holdout:<fraction>', got {text!r}")


def usable_rows(dataset: Dataset, mode: FeatureMode, num_mpcs: int, keep_padded: bool) -> np.ndarray:
    """Indices of users that enter training/evaluation.

    Users that needed sentinel MPCs are dropped unless keep_padded; users with no
    path at all are always dropped in response mode.
    """
    _, padded, _ = raw_features(dataset.mpcs, dataset.responses, mode, num_mpcs)
    if mode is FeatureMode.ABS_RESPONSE or not keep_padded:
        keep = ~padded
    else:
        keep = np.ones(len(padded), dtype=bool)
    rows = np.flatnonzero(keep)
    dropped = len(padded) - len(rows)
    if dropped:
        console.warn(f"excluding {dropped} user(s) with fewer than {num_mpcs} MPCs")
    if len(rows) == 0:
        raise ConfigError("no usable users left for training")
    return rows


@dataclass
class TrainResult:
    bundle: ModelBundle
    history: List[float]
    train_rows: np.ndarray
    eval_rows: np.ndarray
    point: HyperPoint
    trials: List[Trial] = field(default_factory=list)


def fit_localizer(dataset: Dataset, mode: FeatureMode, point: Optional[HyperPoint] = None, *,
                  hyperopt: bool = False, budget: int = config.BUDGET, n_init: int = config.N_INIT,
                  holdout: Optional[float] = None, max_epochs: int = config.MAX_EPOCHS,
                  batch_size: Optional[int] = None, seed: int = config.DEFAULT_SEED,
                  num_mpcs: int = config.NUM_MPCS, keep_padded: bool = False,
                  space: Optional[HyperSpace] = None, final_epochs: Optional[int] = None) -> TrainResult:
    """Train one localizer.

    With hyperopt every trial gets max_epochs; the winner is then retrained from
    its own seed for final_epochs (default FINAL_EPOCH_FACTOR * max_epochs).
    """
    rows = usable_rows(dataset, mode, num_mpcs, keep_padded)
    if holdout is None:
        train_rows, eval_rows = rows, rows
    else:
        tr, te = split_indices(len(rows), holdout, substream(seed, "split"))
        train_rows, eval_rows = rows[tr], rows[te]

    train_set = dataset.subset(train_rows)
    features = assemble_features(train_set.mpcs, train_set.responses, mode, num_mpcs)
    labels = normalize_labels(train_set.positions)

    eval_x = eval_y = None
    if holdout is not None:
        eval_set = dataset.subset(eval_rows)
        eval_x = assemble_features(eval_set.mpcs, eval_set.responses, mode, num_mpcs,
                                   norm_params=features.norm_params).matrix
        eval_y = apply_norm(eval_set.positions, labels.norm_params)

    trials: List[Trial] = []
    train_seed = seed
    epochs = max_epochs
    if hyperopt:
        console.step(f"Bayesian optimization: budget {budget}, {n_init} initial draws")
        objective = training_objective(features.matrix, labels.matrix, max_epochs, batch_size, eval_x, eval_y)
        best, trials = optimize(space or HyperSpace(), objective, budget, n_init, seed)
        if best.diverged:
            console.warn("every trial diverged; retraining the first one will fail")
        point, train_seed = best.config, best.seed
        epochs = final_epochs if final_epochs is not None else config.FINAL_EPOCH_FACTOR * max_epochs
        if epochs < 1:
            raise ConfigError("final_epochs must be >= 1")
    elif point is None:
        point = DEFAULT_POINT

    console.step(f"Training {point.describe()} on {len(train_rows)} users ({mode.value})")
    model = localization_model(features.num_features, point.h1, point.h2, point.activation, train_seed)
    try:
        trained, history = train(model, features.matrix, labels.matrix,
                                 TrainConfig(point.learning_rate, epochs, batch_size, seed=train_seed))
    except DivergenceError as e:
        if epochs <= max_epochs:
            raise
        # the trial itself finished, so its own budget is known to stay finite
        console.warn(f"long retrain diverged at epoch {e.epoch}; keeping the {max_epochs}-epoch run")
        epochs = max_epochs
        trained, history = train(model, features.matrix, labels.matrix,
                                 TrainConfig(point.learning_rate, epochs, batch_size, seed=train_seed))
    console.success(f"final training MSE {min(history):.6g} after {len(history) - 1} epochs")
    bundle = ModelBundle(trained, mode, num_mpcs, features.norm_params, labels.norm_params)
    return TrainResult(bundle, history, train_rows, eval_rows, point, trials)


def predict_dataset(bundle: ModelBundle, dataset: Dataset, rows: Optional[Sequence[int]] = None) -> np.ndarray:
    subset = dataset if rows is None else dataset.subset(rows)
    features = assemble_features(subset.mpcs, subset.responses, bundle.mode, bundle.num_mpcs,
                                 norm_params=bundle.feature_norm)
    if features.num_features != bundle.model.n_inputs:
        raise ShapeError(f"model expects {bundle.model.n_inputs} features, "
                         f"dataset yields {features.num_features} ({bundle.mode.value})")
    return predict_positions(bundle.model, features.matrix, bundle.label_norm)


def evaluate_bundle(bundle: ModelBundle, dataset: Dataset, rows: Optional[Sequence[int]] = None,
                    keep_padded: bool = False) -> Tuple[np.ndarray, np.ndarray, EvalResult]:
    """(rows evaluated, predicted positions, statistics)."""
    if rows is None:
        rows = usable_rows(dataset, bundle.mode, bundle.num_mpcs, keep_padded)
    rows = np.asarray(rows, dtype=int)
    predicted = predict_dataset(bundle, dataset, rows)
    result = evaluate_positions(predicted, dataset.positions[rows], dataset.scene)
    return rows, predicted, result


def run_ablation(scene: Scene, modes: Sequence[FeatureMode], seeds: Sequence[int],
                 point: Optional[HyperPoint] = None, *, hyperopt: bool = False,
                 budget: int = config.BUDGET, max_epochs: int = config.MAX_EPOCHS,
                 bs_index: int = 0, workers: int = config.DEFAULT_WORKERS,
                 dataset: Optional[Dataset] = None, **channel_kwargs) -> List[Dict[str, Any]]:
    """Train and evaluate every (mode, seed) pair on the full-dataset protocol."""
    if not modes or not seeds:
        raise ConfigError("ablation needs at least one mode and one seed")
    if dataset is None:
        dataset = generate_dataset(scene, bs_index, ChannelConfig.for_scene(scene, **channel_kwargs), workers)

    rows = []
    for mode in modes:
        for seed in seeds:
            result = fit_localizer(dataset, mode, point, hyperopt=hyperopt, budget=budget,
                                   n_init=min(config.N_INIT, budget), max_epochs=max_epochs, seed=seed)
            _, _, stats = evaluate_bundle(result.bundle, dataset, result.eval_rows)
            console.info(f"{scene.name or 'scene'} {mode.value} seed={seed}: "
                         f"p50={stats.p50_m:.3f} m p90={stats.p90_m:.3f} m")
            rows.append({
                "scene": scene.name, "mode": mode.value, "seed": int(seed),
                "p50_m": stats.p50_m, "p90_m": stats.p90_m, "mean_m": stats.mean_m,
                "users": stats.users,
            })
    return rows
