"""
Tests for the command-line interface.
"""

import json
import sys
from unittest.mock import patch

import pytest
from typer.testing import CliRunner

from src.imagecore import load_image
from src.main import _build_config, app, run
from src.models import AugmentationScheme
from src.nn import train as nn_train

runner = CliRunner()


def ppm_files(root):
    return sorted(root.rglob("*.ppm"))


def fold_row(scheme, fold, top1=0.6, top5=0.9):
    return json.dumps(
        {"scheme": scheme, "fold": fold, "top1": top1, "top5": top5, "items": 8}
    )


@pytest.fixture
def ten_images(make_class_tree):
    return make_class_tree({"ant": 5, "bee": 5})


class TestAugment:
    @pytest.mark.parametrize("scheme, expected", [("flip", 20), ("crop", 60), ("none", 10)])
    def test_file_counts(self, tmp_path, ten_images, scheme, expected):
        out = tmp_path / "out"

        result = runner.invoke(app, ["augment", "-d", str(ten_images), "-o", str(out), "-s", scheme])

        assert result.exit_code == 0, result.output
        assert len(ppm_files(out)) == expected

    def test_crops_are_224(self, tmp_path, ten_images):
        out = tmp_path / "out"

        runner.invoke(app, ["augment", "-d", str(ten_images), "-o", str(out), "-s", "crop"])

        assert load_image(out / "ant" / "img_000__crop4.ppm").shape == (224, 224, 3)
        assert load_image(out / "ant" / "img_000.ppm").shape == (256, 256, 3)

    def test_unknown_scheme(self, tmp_path, ten_images):
        result = runner.invoke(app, ["augment", "-d", str(ten_images), "-s", "blur"])

        assert result.exit_code == 1

    def test_needs_exactly_one_scheme(self, tmp_path, ten_images):
        result = runner.invoke(app, ["augment", "-d", str(ten_images), "-s", "flip,crop"])

        assert result.exit_code == 1
        assert "exactly one" in result.output

    def test_missing_dataset_root(self):
        result = runner.invoke(app, ["augment", "-s", "flip"])

        assert result.exit_code == 1

    def test_empty_dataset_is_a_data_error(self, tmp_path):
        (tmp_path / "empty").mkdir()

        result = runner.invoke(
            app, ["augment", "-d", str(tmp_path / "empty"), "-o", str(tmp_path / "out"), "-s", "flip"]
        )

        assert result.exit_code == 2

    def test_config_file_supplies_the_scheme(self, tmp_path, ten_images):
        conf = tmp_path / "run.conf"
        conf.write_text(f"dataset_root={ten_images}\nschemes=flip\n")
        out = tmp_path / "out"

        result = runner.invoke(app, ["augment", "-c", str(conf), "-o", str(out)])

        assert result.exit_code == 0, result.output
        assert len(ppm_files(out)) == 20

    def test_flag_overrides_config_file(self, tmp_path, ten_images):
        conf = tmp_path / "run.conf"
        conf.write_text("schemes=crop\n")
        out = tmp_path / "out"

        runner.invoke(app, ["augment", "-c", str(conf), "-d", str(ten_images), "-o", str(out), "-s", "none"])

        assert len(ppm_files(out)) == 10

    def test_rotation_angles_flag(self, tmp_path, ten_images):
        out = tmp_path / "out"

        result = runner.invoke(
            app,
            ["augment", "-d", str(ten_images), "-o", str(out), "-s", "rotate", "--rotation-angles=-15,15,90"],
        )

        assert result.exit_code == 0, result.output
        assert len(ppm_files(out)) == 40
        assert (out / "ant" / "img_000__rotate2.ppm").exists()

    def test_crop_size_flag(self, tmp_path, ten_images):
        out = tmp_path / "out"

        runner.invoke(
            app, ["augment", "-d", str(ten_images), "-o", str(out), "-s", "crop", "--crop-size", "200"]
        )

        assert load_image(out / "ant" / "img_000__crop0.ppm").shape == (200, 200, 3)

    @pytest.mark.parametrize(
        "flag", ["--rotation-angles=200", "--delta-hue=0.9", "--pca-eigenvalues=robust"]
    )
    def test_out_of_range_scheme_flag_is_a_usage_error(self, tmp_path, ten_images, flag):
        result = runner.invoke(app, ["augment", "-d", str(ten_images), "-s", "rotate", flag])

        assert result.exit_code == 1

    def test_rotation_angle_from_config_file_is_checked(self, tmp_path, ten_images):
        conf = tmp_path / "run.conf"
        conf.write_text("schemes=rotate\nrotation_angles=200\n")

        result = runner.invoke(
            app, ["augment", "-c", str(conf), "-d", str(ten_images), "-o", str(tmp_path / "out")]
        )

        assert result.exit_code == 1
        assert not (tmp_path / "out").exists()



def test_standardize(tmp_path, make_class_tree):
    root = make_class_tree({"ant": 2, "bee": 3}, size=(40, 90))
    out = tmp_path / "std"

    result = runner.invoke(app, ["standardize", "-d", str(root), "-o", str(out)])

    assert result.exit_code == 0, result.output
    files = ppm_files(out)
    assert len(files) == 5
    assert all(load_image(f).shape == (256, 256, 3) for f in files)


def test_split_writes_manifest(tmp_path, ten_images):
    out = tmp_path / "split"

    result = runner.invoke(app, ["split", "-d", str(ten_images), "-o", str(out), "--seed", "1"])

    assert result.exit_code == 0, result.output
    manifest = json.loads((out / "folds.json").read_text())
    assert len(manifest) == 8


def test_train_writes_artifacts(tmp_path, ten_images, tiny_network):
    out = tmp_path / "train"

    result = runner.invoke(
        app,
        [
            "train", "-d", str(ten_images), "-o", str(out), "-s", "none",
            "--fold", "2", "--epochs", "2", "--minibatch", "4", "--input-size", "16",
        ],
    )

    assert result.exit_code == 0, result.output
    assert (out / "none_fold2.ckpt").exists()
    assert len((out / "none_fold2_trace.jsonl").read_text().splitlines()) == 2
    assert json.loads((out / "none_fold2_result.json").read_text())["fold"] == 2


def test_train_network_flags(tmp_path, ten_images, tiny_network):
    with patch("src.benchmark.train", wraps=nn_train) as trainer:
        result = runner.invoke(
            app,
            [
                "train", "-d", str(ten_images), "-o", str(tmp_path / "train"), "-s", "none",
                "--epochs", "1", "--minibatch", "4", "--input-size", "16",
                "--weight-init", "gaussian", "--grad-clip-norm", "2.5",
            ],
        )

    assert result.exit_code == 0, result.output
    assert tiny_network.call_args.kwargs["weight_init"] == "gaussian"
    assert trainer.call_args.kwargs["grad_clip_norm"] == 2.5


def test_train_fold_out_of_range(ten_images):
    result = runner.invoke(app, ["train", "-d", str(ten_images), "-s", "none", "--fold", "4"])

    assert result.exit_code != 0


def test_benchmark_end_to_end(tmp_path, ten_images, tiny_network):
    out = tmp_path / "bench"

    result = runner.invoke(
        app,
        [
            "benchmark", "-d", str(ten_images), "-o", str(out), "-s", "none,flip",
            "--epochs", "1", "--minibatch", "4", "--input-size", "16", "--no-wall-time",
        ],
    )

    assert result.exit_code == 0, result.output
    rows = (out / "results.jsonl").read_text().splitlines()
    assert len(rows) == 8
    assert "Augmentation benchmark" in result.output


class TestReport:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text("")

        result = runner.invoke(app, ["report", str(path)])

        assert result.exit_code == 0
        assert "no results" in result.output

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text(fold_row("none", 0) + "\n" + fold_row("none", 1) + "\n{oops\n")

        result = runner.invoke(app, ["report", str(path)])

        assert result.exit_code == 2
        assert "line 3" in result.output

    def test_one_scheme_one_row(self, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text("\n".join(fold_row("crop", f) for f in range(4)) + "\n")
        text_out = tmp_path / "table.txt"

        result = runner.invoke(app, ["report", str(path), "--out", str(text_out), "--folds"])

        assert result.exit_code == 0, result.output
        table = text_out.read_text()
        assert table.count(AugmentationScheme.CROP.display_name) == 1
        assert "60.00 ± 0.00%" in table

    def test_failed_scheme_is_listed(self, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text(
            "\n".join(fold_row("none", f) for f in range(4))
            + '\n{"scheme": "edge", "status": "failed", "error": "numerical failure"}\n'
        )

        result = runner.invoke(app, ["report", str(path)])

        assert result.exit_code == 0
        assert "numerical failure" in result.output

    def test_missing_file(self, tmp_path):
        result = runner.invoke(app, ["report", str(tmp_path / "nope.jsonl")])

        assert result.exit_code != 0


class TestEntryPoint:
    def test_unknown_command_exits_one(self):
        with patch.object(sys, "argv", ["augbench", "frobnicate"]):
            with pytest.raises(SystemExit) as exc:
                run()

        assert exc.value.code == 1

    def test_data_error_exits_two(self, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text("not json\n")

        with patch.object(sys, "argv", ["augbench", "report", str(path)]):
            with pytest.raises(SystemExit) as exc:
                run()

        assert exc.value.code == 2


class TestBuildConfig:
    def test_none_flags_fall_through_to_defaults(self):
        cfg = _build_config(None, epochs=None, schemes=[], seed=None)

        assert cfg.epochs == 30
        assert cfg.schemes == list(AugmentationScheme)

    def test_repeated_schemes_are_joined(self):
        cfg = _build_config(None, schemes=["flip", "crop,edge"])

        assert cfg.schemes == [
            AugmentationScheme.FLIP,
            AugmentationScheme.CROP,
            AugmentationScheme.EDGE,
        ]

    def test_unknown_key_in_file(self, tmp_path):
        import typer

        conf = tmp_path / "run.conf"
        conf.write_text("dropout=0.5\n")

        with pytest.raises(typer.Exit) as exc:
            _build_config(conf)

        assert exc.value.exit_code == 1

    def test_scheme_and_network_flags_reach_the_config(self):
        cfg = _build_config(
            None,
            delta_hue=0.2,
            delta_saturation=0.0,
            s_p=1e5,
            pca_eigenvalues="scatter",
            rotation_angles="-5,5",
            crop_size=192,
            weight_init="gaussian",
            grad_clip_norm=2.0,
        )

        options = cfg.augmentation_options()
        assert options.jitter.delta_hue == 0.2
        assert options.jitter.delta_saturation == 0.0
        assert options.pca_scale == 1e5
        assert options.pca_eigenvalues == "scatter"
        assert options.rotation_angles == [-5.0, 5.0]
        assert options.crop.crop_size == 192
        assert cfg.weight_init == "gaussian"
        assert cfg.grad_clip_norm == 2.0

