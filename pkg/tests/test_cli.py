import json

import numpy as np
import pytest
from PIL import Image

from seqvos import mask_io
from seqvos.cli import main
from seqvos.mask_ops import DistanceConfig, encode_distance_classes


GEN_ARGS = ["--height", "32", "--width", "32", "--min-objects", "1",
            "--max-objects", "2", "--min-length", "4", "--max-length", "5",
            "--max-size", "10", "--seed", "3"]
TRAIN_ARGS = ["--iterations", "4", "--batch-size", "2", "--learning-rate", "1e-3",
              "--scale-factor", "0.05", "--border-pixels", "20", "--bin-size", "10",
              "--min-seq-len", "3", "--max-seq-len", "4", "--no-augment",
              "--input-height", "32", "--input-width", "32", "--seed", "0"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """generate -> train once; reused by the downstream command tests."""
    root = tmp_path_factory.mktemp("ws")
    data = root / "data"
    run = root / "run"
    assert main(["generate", "--out", str(data), "--num-sequences", "3"]
                + GEN_ARGS) == 0
    assert main(["train", "--data", str(data), "--out", str(run)] + TRAIN_ARGS) == 0
    return {"data": data, "run": run}


class TestGenerate:
    def test_layout(self, workspace):
        data = workspace["data"]
        assert (data / "manifest.json").exists()
        assert sorted(p.name for p in (data / "frames").iterdir()) == \
            ["seq_0000", "seq_0001", "seq_0002"]
        assert len(list((data / "annotations" / "seq_0000").glob("*.png"))) >= 4


class TestTrain:
    def test_outputs(self, workspace):
        run = workspace["run"]
        assert (run / "checkpoint.pt").exists()
        assert (run / "checkpoint.manifest.json").exists()
        lines = (run / "train_log.jsonl").read_text().splitlines()
        assert len(lines) == 4
        assert {"iteration", "loss", "loss_seg", "loss_dist", "lr"} <= set(
            json.loads(lines[0]))


class TestInferAndEval:
    def test_infer_then_eval_composes(self, workspace, tmp_path):
        data, run = workspace["data"], workspace["run"]
        pred_root = tmp_path / "preds"
        for seq in ("seq_0000", "seq_0001", "seq_0002"):
            code = main(["infer", "--checkpoint", str(run / "checkpoint.pt"),
                         "--frames", str(data / "frames" / seq),
                         "--first-mask", str(data / "annotations" / seq / "00000.png"),
                         "--out", str(pred_root / seq), "--heatmaps"])
            assert code == 0
            n_frames = len(list((data / "frames" / seq).glob("*.png")))
            assert len(list((pred_root / seq).glob("*.png"))) == n_frames - 1
        report = tmp_path / "report.json"
        code = main(["eval", "--pred", str(pred_root),
                     "--gt", str(data / "annotations"), "--out", str(report)])
        assert code == 0
        result = json.loads(report.read_text())
        assert set(result) == {"per_object", "j_mean", "f_mean", "overall"}
        assert result["overall"] == pytest.approx(
            (result["j_mean"] + result["f_mean"]) / 2)

    def test_ground_truth_self_evaluates_to_one(self, workspace, tmp_path):
        data = workspace["data"]
        report = tmp_path / "self.json"
        code = main(["eval", "--pred", str(data / "annotations"),
                     "--gt", str(data / "annotations"), "--out", str(report)])
        assert code == 0
        result = json.loads(report.read_text())
        assert result["overall"] == 1.0 and result["j_mean"] == 1.0

    def test_heatmap_written(self, workspace, tmp_path):
        data, run = workspace["data"], workspace["run"]
        out = tmp_path / "h"
        main(["infer", "--checkpoint", str(run / "checkpoint.pt"),
              "--frames", str(data / "frames" / "seq_0000"),
              "--first-mask", str(data / "annotations" / "seq_0000" / "00000.png"),
              "--out", str(out), "--heatmaps"])
        heatmaps = list((out / "heatmaps").rglob("*.png"))
        assert heatmaps
        img = np.asarray(Image.open(heatmaps[0]))
        assert img.ndim == 3 and img.shape[2] == 3

    def test_missing_checkpoint_is_config_error(self, workspace, tmp_path, capsys):
        data = workspace["data"]
        code = main(["infer", "--checkpoint", str(tmp_path / "nope.pt"),
                     "--frames", str(data / "frames" / "seq_0000"),
                     "--first-mask", str(data / "annotations" / "seq_0000" / "00000.png"),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "configuration"


class TestEncode:
    def test_matches_library_encoding(self, workspace, tmp_path):
        data = workspace["data"]
        mask_path = data / "annotations" / "seq_0000" / "00000.png"
        out = tmp_path / "classes.png"
        code = main(["encode", "--mask", str(mask_path), "--out", str(out),
                     "--border-pixels", "10", "--bin-size", "1"])
        assert code == 0
        stored = mask_io.read_class_map(out)
        assert stored.config == DistanceConfig(10, 1)
        labels = mask_io.read_label_png(mask_path)
        expected = encode_distance_classes(labels == 1, DistanceConfig(10, 1))
        np.testing.assert_array_equal(stored.values, expected.values)

    def test_invalid_bin_size_is_config_error(self, workspace, tmp_path, capsys):
        data = workspace["data"]
        code = main(["encode", "--mask",
                     str(data / "annotations" / "seq_0000" / "00000.png"),
                     "--out", str(tmp_path / "x.png"),
                     "--border-pixels", "5", "--bin-size", "9"])
        assert code == 2
        assert json.loads(capsys.readouterr().err)["error"] == "configuration"

    def test_missing_object_is_data_error(self, workspace, tmp_path, capsys):
        data = workspace["data"]
        code = main(["encode", "--mask",
                     str(data / "annotations" / "seq_0000" / "00000.png"),
                     "--out", str(tmp_path / "x.png"), "--object-id", "99"])
        assert code == 3
        assert json.loads(capsys.readouterr().err)["error"] == "data"


class TestVisualize:
    def test_probability_npy(self, tmp_path):
        prob = np.full((4, 4), 0.5)
        np.save(tmp_path / "p.npy", prob)
        out = tmp_path / "p.png"
        assert main(["visualize", "--input", str(tmp_path / "p.npy"),
                     "--out", str(out)]) == 0
        img = np.asarray(Image.open(out))
        assert (img == 255).all()  # 0.5 renders white

    def test_class_map_with_sidecar(self, workspace, tmp_path):
        data = workspace["data"]
        enc = tmp_path / "c.png"
        main(["encode", "--mask", str(data / "annotations" / "seq_0000" / "00000.png"),
              "--out", str(enc), "--border-pixels", "10", "--bin-size", "5"])
        out = tmp_path / "c_vis.png"
        assert main(["visualize", "--input", str(enc), "--out", str(out)]) == 0
        assert out.exists()


class TestConfigFile:
    def test_flags_override_config_file(self, tmp_path):
        cfg = {"num_sequences": 5, "height": 32, "width": 32, "seed": 1,
               "min_objects": 1, "max_objects": 1, "min_length": 3,
               "max_length": 3, "max_size": 10}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "d"
        assert main(["generate", "--config", str(cfg_path), "--out", str(out),
                     "--num-sequences", "2"]) == 0
        assert len(list((out / "frames").iterdir())) == 2
