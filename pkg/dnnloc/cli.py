"""
Command-line surface: generate, train, evaluate, ablation, presets.

Commands other than presets write their outputs plus manifest.json under --out. Errors from
the library map to exit codes (2 config, 3 divergence, 4 I/O).
"""

import argparse
import hashlib
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from . import config, console
from .channel import ChannelConfig
from .dataset import generate_dataset, ingest_mpc_table, read_dataset, write_dataset
from .errors import ConfigError, DnnLocError
from .experiments import DEFAULT_POINT, evaluate_bundle, fit_localizer, parse_split, run_ablation
from .features import FeatureMode, assemble_features, feature_columns, normalize_labels
from .hyperopt import HyperPoint, HyperSpace, best_so_far
from .neuralnet import Activation
from .presets import PRESETS, load_scene, scene_json
from .scene import Point2D, Scene
from .storage import (RunManifest, ensure_dir, file_sha256, write_ablation, write_cdf, write_csv,
                      write_json, write_location_map, write_manifest, write_matrix, write_model_bundle,
                      read_manifest, read_model_bundle, write_norm, write_trial_log)


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _scene_source_hash(name_or_path: str, scene: Scene) -> str:
    """SHA-256 of the scene file consumed; presets hash their canonical JSON."""
    if name_or_path in PRESETS:
        return _sha256_text(scene_json(scene))
    return file_sha256(name_or_path)


def _dataset_hash(dataset_dir: Path) -> str:
    digest = hashlib.sha256()
    for name in ("dataset.json", "users.csv", "mpcs.csv"):
        digest.update(file_sha256(dataset_dir / name).encode("ascii"))
    return digest.hexdigest()


def _scene_hash(dataset_dir: Path) -> Optional[str]:
    path = dataset_dir / "scene.json"
    return file_sha256(path) if path.is_file() else None


def _positive(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


# ==============================================================================
# COMMANDS
# ==============================================================================

def cmd_generate(args) -> List[str]:
    out = ensure_dir(args.out)
    scene = load_scene(args.scene) if args.scene else None

    if args.ingest:
        if scene is not None:
            channel = ChannelConfig.for_scene(scene, args.antennas, args.subcarriers)
            if not 0 <= args.bs_index < len(scene.base_stations):
                raise ConfigError(f"no base station with index {args.bs_index}")
            bs = scene.base_stations[args.bs_index]
        else:
            channel = ChannelConfig(num_antennas=args.antennas, num_subcarriers=args.subcarriers)
            bs = Point2D(0.0, 0.0)
        console.step(f"Ingesting MPC table {args.ingest}")
        dataset = ingest_mpc_table(args.ingest, channel, bs, scene)
        inputs = {"ingest_sha256": file_sha256(args.ingest)}
    elif scene is not None:
        channel = ChannelConfig.for_scene(scene, args.antennas, args.subcarriers)
        dataset = generate_dataset(scene, args.bs_index, channel, args.workers)
        inputs = {}
    else:
        raise ConfigError("generate needs --scene or --ingest")

    written = write_dataset(out, dataset)
    inputs.update({"bs_index": args.bs_index, "antennas": args.antennas, "subcarriers": args.subcarriers})
    write_manifest(out, RunManifest(
        command="generate",
        seed=args.seed,
        scene_hash=_scene_source_hash(args.scene, scene) if scene is not None else None,
        inputs=inputs,
        outputs=[p.name for p in written],
    ))
    console.success(f"Dataset written to {out}")
    return [p.name for p in written]


def _train_point(args) -> HyperPoint:
    return HyperPoint(
        h1=args.h1 if args.h1 is not None else DEFAULT_POINT.h1,
        h2=args.h2 if args.h2 is not None else DEFAULT_POINT.h2,
        learning_rate=args.lr if args.lr is not None else DEFAULT_POINT.learning_rate,
        activation=Activation.parse(args.activation) if args.activation else DEFAULT_POINT.activation,
    )


def cmd_train(args) -> List[str]:
    dataset_dir = Path(args.dataset)
    dataset = read_dataset(dataset_dir)
    mode = FeatureMode.parse(args.mode)
    holdout = parse_split(args.split)
    point = None if args.hyperopt else _train_point(args)
    n_init = args.n_init if args.n_init is not None else min(config.N_INIT, args.budget)
    space = HyperSpace(activations=(Activation.parse(args.activation),)) \
        if args.hyperopt and args.activation else None

    result = fit_localizer(dataset, mode, point, hyperopt=args.hyperopt, budget=args.budget,
                           n_init=n_init, holdout=holdout, max_epochs=args.epochs,
                           batch_size=args.batch_size, seed=args.seed,
                           keep_padded=args.keep_padded, space=space, final_epochs=args.final_epochs)

    out = ensure_dir(args.out)
    bundle = result.bundle
    train_set = dataset.subset(result.train_rows)
    features = assemble_features(train_set.mpcs, train_set.responses, mode, bundle.num_mpcs,
                                 norm_params=bundle.feature_norm)
    labels = normalize_labels(train_set.positions)
    columns = feature_columns(mode, bundle.num_mpcs, dataset.responses.shape[1:])

    written = [
        write_model_bundle(out / "model.json", bundle),
        write_matrix(out / "features.csv", features.matrix, columns),
        write_matrix(out / "labels.csv", labels.matrix, ["x", "y"]),
        write_norm(out / "norm.json", bundle.feature_norm, bundle.label_norm, mode, bundle.num_mpcs),
        write_csv(out / "history.csv", pd.DataFrame({"epoch": range(len(result.history)),
                                                     "mse": result.history})),
        write_json(out / "split.json", {
            "split": args.split,
            "train_user_ids": [dataset.user_ids[i] for i in result.train_rows],
            "eval_user_ids": [dataset.user_ids[i] for i in result.eval_rows],
        }),
    ]
    if result.trials:
        written.append(write_trial_log(out / "trials.csv", result.trials))
        curve = best_so_far(result.trials)
        console.info(f"best-so-far cost after {len(curve)} trials: {curve[-1]:.6g}")

    hyper = {"h1": result.point.h1, "h2": result.point.h2,
             "learning_rate": result.point.learning_rate,
             "activation": result.point.activation.value,
             "epochs": args.epochs, "batch_size": args.batch_size}
    if args.hyperopt:
        hyper.update({"budget": args.budget, "n_init": n_init,
                      "final_epochs": args.final_epochs or config.FINAL_EPOCH_FACTOR * args.epochs})
    write_manifest(out, RunManifest(
        command="train",
        seed=args.seed,
        scene_hash=_scene_hash(dataset_dir),
        feature_mode=mode.value,
        hyperparameters=hyper,
        inputs={"dataset_sha256": _dataset_hash(dataset_dir), "split": args.split,
                "hyperopt": bool(args.hyperopt), "keep_padded": bool(args.keep_padded)},
        outputs=[p.name for p in written],
    ))
    console.success(f"Model written to {out / 'model.json'}")
    return [p.name for p in written]


def cmd_evaluate(args) -> List[str]:
    dataset_dir = Path(args.dataset)
    bundle = read_model_bundle(args.model)
    dataset = read_dataset(dataset_dir)
    rows, predicted, result = evaluate_bundle(bundle, dataset, keep_padded=args.keep_padded)

    out = ensure_dir(args.out)
    user_ids = [dataset.user_ids[i] for i in rows]
    written = [
        write_location_map(out / "location_map.csv", user_ids, dataset.positions[rows], predicted, result),
        write_cdf(out / "cdf.csv", result),
        write_json(out / "summary.json", result.summary()),
    ]
    inputs = {"dataset_sha256": _dataset_hash(dataset_dir), "model_sha256": file_sha256(args.model),
              "keep_padded": bool(args.keep_padded)}
    train_manifest = Path(args.model).parent / "manifest.json"
    if train_manifest.is_file():
        inputs["model_run_id"] = read_manifest(train_manifest)["run_id"]
    write_manifest(out, RunManifest(
        command="evaluate",
        seed=args.seed,
        scene_hash=_scene_hash(dataset_dir),
        feature_mode=bundle.mode.value,
        inputs=inputs,
        outputs=[p.name for p in written],
    ))
    console.success(f"p50 {result.p50_m:.4f} m, p90 {result.p90_m:.4f} m over {result.users} users")
    return [p.name for p in written]


def cmd_ablation(args) -> List[str]:
    scene = load_scene(args.scene)
    modes = [FeatureMode.parse(m) for m in args.modes.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    point = None if args.hyperopt else _train_point(args)
    rows = run_ablation(scene, modes, seeds, point, hyperopt=args.hyperopt, budget=args.budget,
                        max_epochs=args.epochs, bs_index=args.bs_index, workers=args.workers)

    out = ensure_dir(args.out)
    written = [write_ablation(out / "ablation.csv", rows)]
    write_manifest(out, RunManifest(
        command="ablation",
        seed=args.seed,
        scene_hash=_scene_source_hash(args.scene, scene),
        hyperparameters={} if point is None else {
            "h1": point.h1, "h2": point.h2, "learning_rate": point.learning_rate,
            "activation": point.activation.value, "epochs": args.epochs},
        inputs={"modes": [m.value for m in modes], "seeds": seeds, "hyperopt": bool(args.hyperopt),
                "budget": args.budget, "bs_index": args.bs_index},
        outputs=[p.name for p in written],
    ))
    console.success(f"{len(rows)} runs written to {out / 'ablation.csv'}")
    return [p.name for p in written]


def cmd_presets(args) -> List[str]:
    if args.dump:
        sys.stdout.write(scene_json(load_scene(args.dump)))
        return []
    for name in sorted(PRESETS):
        scene = load_scene(name)
        print(f"{name:<16} {scene.ue_grid.size:>5} users  "
              f"{scene.carrier_frequency_hz / 1e9:g} GHz / {scene.bandwidth_hz / 1e6:g} MHz  "
              f"{len(scene.obstacles)} obstacles")
    return []


# ==============================================================================
# ENTRY POINT
# ==============================================================================

def _add_hyper_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--h1", type=_positive, help=f"first hidden layer width (default {DEFAULT_POINT.h1})")
    p.add_argument("--h2", type=_positive, help=f"second hidden layer width (default {DEFAULT_POINT.h2})")
    p.add_argument("--lr", type=float, help=f"learning rate (default {DEFAULT_POINT.learning_rate})")
    p.add_argument("--activation", help="tansig, logsig, purelin, poslin or radbas")
    p.add_argument("--hyperopt", action="store_true", help="tune h1/h2/lr/activation by Bayesian optimization")
    p.add_argument("--budget", type=_positive, default=config.BUDGET, help="hyperopt trials (default %(default)s)")
    p.add_argument("--epochs", type=_positive, default=config.MAX_EPOCHS, help="max epochs (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: $DNNLOC_OUT/<command>)")
    common.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="run seed (default %(default)s)")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(
        prog="dnnloc",
        description="Ray-traced channel datasets and DNN user localization",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py generate --scene los-grid --out runs/los
  python main.py train --dataset runs/los --mode aoa-rss-toa --hyperopt --out runs/los-model
  python main.py evaluate --model runs/los-model/model.json --dataset runs/los --out runs/los-eval
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="trace a scene into an MPC dataset")
    p.add_argument("--scene", help="preset name or scene JSON path")
    p.add_argument("--bs-index", type=int, default=0, help="base station to trace from")
    p.add_argument("--antennas", type=_positive, default=config.NUM_ANTENNAS)
    p.add_argument("--subcarriers", type=_positive, default=config.NUM_SUBCARRIERS)
    p.add_argument("--workers", type=_positive, default=config.DEFAULT_WORKERS)
    p.add_argument("--ingest", help="external MPC table CSV to ingest instead of tracing")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train a localization network")
    p.add_argument("--dataset", required=True, help="dataset directory written by generate")
    p.add_argument("--mode", default=FeatureMode.AOA_RSS_TOA.value,
                   help="aoa, aoa-rss, aoa-rss-toa or abs-response (default %(default)s)")
    _add_hyper_flags(p)
    p.add_argument("--n-init", type=_positive, help="random initial trials (default min(5, budget))")
    p.add_argument("--final-epochs", type=_positive,
                   help=f"epochs for retraining the best trial (default {config.FINAL_EPOCH_FACTOR} x --epochs)")
    p.add_argument("--split", default="full", help="full or holdout:<fraction> (default %(default)s)")
    p.add_argument("--batch-size", type=_positive, help="minibatch size (default: full batch)")
    p.add_argument("--keep-padded", action="store_true", help="keep users with fewer MPCs than slots")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a trained model on a dataset")
    p.add_argument("--model", required=True, help="model.json written by train")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--keep-padded", action="store_true", help="also score users with padded features")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablation", parents=[common], help="feature-mode comparison over several seeds")
    p.add_argument("--scene", default="los-grid", help="preset name or scene JSON path")
    p.add_argument("--modes", default="aoa,aoa-rss,aoa-rss-toa", help="comma-separated feature modes")
    p.add_argument("--seeds", default="1,2,3,4,5", help="comma-separated seeds")
    p.add_argument("--bs-index", type=int, default=0)
    p.add_argument("--workers", type=_positive, default=config.DEFAULT_WORKERS)
    _add_hyper_flags(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("presets", parents=[common], help="list the built-in scenes")
    p.add_argument("--dump", metavar="NAME", help="print one preset as scene JSON")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = str(Path(config.DEFAULT_OUT_DIR) / args.command)
    console.set_quiet(args.quiet or config.QUIET)
    try:
        args.func(args)
    except DnnLocError as e:
        console.error(str(e))
        return e.exit_code
    except KeyboardInterrupt:
        console.error("interrupted")
        return 130
    return 0
