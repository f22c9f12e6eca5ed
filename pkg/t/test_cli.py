import hashlib
import json

import pandas as pd
import pytest

from dnnloc.cli import _scene_source_hash, main
from dnnloc.config import SPEED_OF_LIGHT
from dnnloc.presets import load_scene, scene_json
from dnnloc.storage import CDF_COLUMNS, MAP_COLUMNS, TRIAL_COLUMNS

DATASET_FILES = ["users.csv", "mpcs.csv", "responses.npy", "dataset.json", "scene.json", "manifest.json"]


@pytest.fixture(autouse=True)
def pinned_clock(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


@pytest.fixture
def canyon_file(tmp_path, canyon_scene):
    path = tmp_path / "canyon.json"
    path.write_text(scene_json(canyon_scene), encoding="utf-8")
    return path


@pytest.fixture
def canyon_dataset(tmp_path, canyon_file):
    out = tmp_path / "data"
    assert main(["generate", "--scene", str(canyon_file), "--antennas", "4", "--subcarriers", "8",
                 "--workers", "1", "--out", str(out), "--quiet"]) == 0
    return out


def _train(dataset, out, *extra):
    return main(["train", "--dataset", str(dataset), "--out", str(out), "--epochs", "3", "--quiet", *extra])


class TestGenerate:
    def test_single_user_free_space(self, tmp_path, scene_dict):
        scene_path = tmp_path / "one.json"
        scene_path.write_text(json.dumps(scene_dict()), encoding="utf-8")
        out = tmp_path / "one"
        assert main(["generate", "--scene", str(scene_path), "--workers", "1", "--out", str(out), "--quiet"]) == 0
        assert len(pd.read_csv(out / "users.csv")) == 1
        mpcs = pd.read_csv(out / "mpcs.csv")
        assert len(mpcs) == 1
        assert mpcs["toa_s"].iloc[0] == pytest.approx(5.0 / SPEED_OF_LIGHT)
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["command"] == "generate"
        assert manifest["scene_hash"] == hashlib.sha256(scene_path.read_bytes()).hexdigest()

    def test_preset_hash_is_canonical_json(self):
        scene = load_scene("los-grid")
        expected = hashlib.sha256(scene_json(scene).encode("utf-8")).hexdigest()
        assert _scene_source_hash("los-grid", scene) == expected

    def test_rerun_is_byte_identical(self, tmp_path, canyon_file):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["generate", "--scene", str(canyon_file), "--antennas", "4", "--subcarriers", "8",
                         "--workers", "1", "--out", str(out), "--quiet"]) == 0
            outs.append(out)
        for name in DATASET_FILES:
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    def test_ingest_round_trip(self, tmp_path, canyon_dataset):
        out = tmp_path / "ingested"
        assert main(["generate", "--ingest", str(canyon_dataset / "mpcs.csv"), "--antennas", "4",
                     "--subcarriers", "8", "--out", str(out), "--quiet"]) == 0
        assert (out / "mpcs.csv").read_bytes() == (canyon_dataset / "mpcs.csv").read_bytes()
        assert not (out / "scene.json").exists()

    def test_invalid_scene_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"base_stations": [[0, 0]]}), encoding="utf-8")
        assert main(["generate", "--scene", str(bad), "--out", str(tmp_path / "x"), "--quiet"]) == 2

    def test_needs_a_source(self, tmp_path):
        assert main(["generate", "--out", str(tmp_path / "x"), "--quiet"]) == 2


class TestTrainEvaluate:
    def test_train_then_evaluate(self, tmp_path, canyon_dataset):
        model_dir = tmp_path / "model"
        assert _train(canyon_dataset, model_dir, "--mode", "aoa-rss", "--h1", "8", "--h2", "25",
                      "--lr", "0.05", "--activation", "logsig") == 0
        for name in ("model.json", "features.csv", "labels.csv", "norm.json", "history.csv", "split.json",
                     "manifest.json"):
            assert (model_dir / name).is_file(), name
        assert not (model_dir / "trials.csv").exists()
        manifest = json.loads((model_dir / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["feature_mode"] == "aoa-rss"
        assert manifest["hyperparameters"]["activation"] == "logsig"
        assert pd.read_csv(model_dir / "features.csv").shape == (40, 6)

        eval_dir = tmp_path / "eval"
        assert main(["evaluate", "--model", str(model_dir / "model.json"), "--dataset", str(canyon_dataset),
                     "--out", str(eval_dir), "--quiet"]) == 0
        summary = json.loads((eval_dir / "summary.json").read_text(encoding="utf-8"))
        assert summary["users"] == 40
        assert summary["p50_m"] <= summary["p90_m"]
        assert list(pd.read_csv(eval_dir / "cdf.csv").columns) == CDF_COLUMNS
        assert len(pd.read_csv(eval_dir / "cdf.csv")) == 40
        assert list(pd.read_csv(eval_dir / "location_map.csv").columns) == MAP_COLUMNS
        eval_manifest = json.loads((eval_dir / "manifest.json").read_text(encoding="utf-8"))
        assert eval_manifest["inputs"]["model_run_id"] == manifest["run_id"]

    def test_tuned_flags_accepted(self, tmp_path, canyon_dataset):
        out = tmp_path / "tuned"
        assert _train(canyon_dataset, out, "--mode", "aoa", "--h1", "40", "--h2", "50", "--lr", "0.9078",
                      "--activation", "logsig") == 0
        bundle = json.loads((out / "model.json").read_text(encoding="utf-8"))
        assert bundle["model"]["layer_sizes"] == [3, 40, 50, 2]

    def test_hyperopt_writes_trial_log(self, tmp_path, canyon_dataset):
        out = tmp_path / "bo"
        assert _train(canyon_dataset, out, "--hyperopt", "--budget", "1", "--split", "holdout:0.25") == 0
        trials = pd.read_csv(out / "trials.csv")
        assert list(trials.columns) == TRIAL_COLUMNS
        assert len(trials) == 1
        split = json.loads((out / "split.json").read_text(encoding="utf-8"))
        assert len(split["eval_user_ids"]) == 10
        assert not set(split["eval_user_ids"]) & set(split["train_user_ids"])

    @pytest.mark.slow
    def test_hyperopt_full_budget(self, tmp_path, canyon_dataset):
        out = tmp_path / "bo30"
        assert _train(canyon_dataset, out, "--hyperopt", "--budget", "30", "--final-epochs", "5") == 0
        assert len(pd.read_csv(out / "trials.csv")) == 30
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["hyperparameters"]["budget"] == 30
        assert manifest["hyperparameters"]["final_epochs"] == 5

    def test_missing_dataset_exit_code(self, tmp_path):
        assert _train(tmp_path / "nowhere", tmp_path / "m") == 4

    def test_bad_split_exit_code(self, tmp_path, canyon_dataset):
        assert _train(canyon_dataset, tmp_path / "m", "--split", "holdout:1.5") == 2

    def test_unknown_activation_exit_code(self, tmp_path, canyon_dataset):
        assert _train(canyon_dataset, tmp_path / "m", "--activation", "softmax") == 2

    def test_malformed_model_exit_code(self, tmp_path, canyon_dataset):
        model = tmp_path / "model.json"
        model.write_text("{}", encoding="utf-8")
        assert main(["evaluate", "--model", str(model), "--dataset", str(canyon_dataset),
                     "--out", str(tmp_path / "e"), "--quiet"]) == 4


class TestAblation:
    def test_table(self, tmp_path, canyon_file):
        out = tmp_path / "ablation"
        assert main(["ablation", "--scene", str(canyon_file), "--modes", "aoa,aoa-rss-toa", "--seeds", "1,2",
                     "--epochs", "3", "--workers", "1", "--out", str(out), "--quiet"]) == 0
        table = pd.read_csv(out / "ablation.csv")
        assert list(table.columns) == ["scene", "mode", "seed", "p50_m", "p90_m", "mean_m", "users"]
        assert table[["mode", "seed"]].values.tolist() == [["aoa", 1], ["aoa", 2],
                                                          ["aoa-rss-toa", 1], ["aoa-rss-toa", 2]]
        assert (table["users"] == 40).all()


class TestPresets:
    def test_listing(self, capsys):
        assert main(["presets"]) == 0
        text = capsys.readouterr().out
        for name in ("los-grid", "nlos-grid", "response-grid"):
            assert name in text

    def test_dump(self, capsys):
        assert main(["presets", "--dump", "nlos-grid"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["ue_grid"]["rows"] * data["ue_grid"]["cols"] == 540
