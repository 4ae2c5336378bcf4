import json

import numpy as np
import pandas as pd
import pytest

from app import build_parser, main, resolve_config, sample_condition
from data.dataset_manager import MANIFEST_NAME, load_dataset, write_dataset
from data.field_sample import CaseSplit
from data.normalization import encode_condition
from data.sample_io import read_sample
from data.synthetic import cylinder_mask
from utils.errors import DataError
from utils.run_directory import RESOLVED_CONFIG_NAME

from conftest import TINY_OVERRIDES


def _set(overrides):
    args = []
    for override in overrides:
        args.extend(["--set", override])
    return args


def _only_run_dir(out):
    runs = [p for p in out.iterdir() if p.is_dir()]
    assert len(runs) == 1
    return runs[0]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv("FOILDIFF_DATA_ROOT", raising=False)
    monkeypatch.delenv("FOILDIFF_DEVICE", raising=False)


class TestParser:
    def test_out_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train"])

    def test_repeated_overrides(self):
        args = build_parser().parse_args(["train", "--out", "runs", "--set", "a=1", "--set", "b=2"])
        assert args.overrides == ["a=1", "b=2"]

    def test_checkpoint_required_for_sample(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["sample", "--out", "runs"])


class TestExitCodes:
    def test_synth(self, tmp_path):
        out = tmp_path / "synth"
        code = main(["synth", "--out", str(out)] + _set(["synthetic.grid=8", "synthetic.replicates=2",
                                                         "synthetic.case_ids=[1,3,7]"]))
        assert code == 0
        assert len(load_dataset(out)) == 6

    def test_invalid_config_exits_2(self, synthetic_root, tmp_path):
        code = main(["train", "--out", str(tmp_path), "--data", str(synthetic_root), "--set",
                     "training.iterations=0"])
        assert code == 2

    def test_seed_conflict_exits_2(self, synthetic_root, tmp_path):
        code = main(["train", "--out", str(tmp_path), "--data", str(synthetic_root), "--set", "seed=1",
                     "--seed", "2"])
        assert code == 2

    def test_missing_data_exits_3(self, tmp_path):
        code = main(["train", "--out", str(tmp_path / "runs"), "--data", str(tmp_path / "absent")])
        assert code == 3

    def test_no_data_root_exits_2(self, tmp_path):
        assert main(["train", "--out", str(tmp_path / "runs")]) == 2

    def test_empty_import_exits_3(self, tmp_path):
        (tmp_path / "archive").mkdir()
        code = main(["import", str(tmp_path / "archive"), "--out", str(tmp_path / "dataset")])
        assert code == 3
        assert (tmp_path / "dataset" / MANIFEST_NAME).exists()

    def test_data_root_from_environment(self, synthetic_root, tmp_path, monkeypatch):
        monkeypatch.setenv("FOILDIFF_DATA_ROOT", str(synthetic_root))
        assert main(["train", "--out", str(tmp_path / "runs")] + _set(TINY_OVERRIDES)) == 0


class TestPipeline:
    def test_train_sample_evaluate(self, synthetic_root, tmp_path):
        common = ["--data", str(synthetic_root)] + _set(TINY_OVERRIDES)

        assert main(["train", "--out", str(tmp_path / "train")] + common) == 0
        train_dir = _only_run_dir(tmp_path / "train")
        assert train_dir.name.startswith("train-")
        assert json.loads((train_dir / RESOLVED_CONFIG_NAME).read_text())["training"]["iterations"] == 2
        assert pd.read_csv(train_dir / "loss_log.csv")["iteration"].tolist() == [1, 2]
        checkpoint = train_dir / "checkpoints" / "ckpt_0000002.fdc"
        assert checkpoint.exists()

        assert main(["sample", "--out", str(tmp_path / "sample"), "--checkpoint", str(checkpoint),
                     "--set", "sample.count=3"] + common) == 0
        sample_dir = _only_run_dir(tmp_path / "sample")
        assert sorted(p.name for p in sample_dir.glob("member_*.fds")) == [
            "member_000.fds", "member_001.fds", "member_002.fds"]
        spread = read_sample(sample_dir / "std.fds")
        assert spread.shape == (8, 8)
        summary = json.loads((sample_dir / "sample_summary.json").read_text())
        assert summary["model_evaluations"] == 3 * 4

        assert main(["evaluate", "--out", str(tmp_path / "evaluate"), "--checkpoint", str(checkpoint),
                     "--set", "evaluation.dump_fields=true"] + common) == 0
        eval_dir = _only_run_dir(tmp_path / "evaluate")
        frame = pd.read_csv(eval_dir / "eval_report.csv")
        assert frame.loc[frame["row"] == "case", "case_id"].tolist() == [7]
        assert (eval_dir / "eval_report.html").exists()
        assert (eval_dir / "fields" / "case007_mean.fds").exists()

    def test_ablate(self, synthetic_root, tmp_path):
        code = main(["ablate", "--out", str(tmp_path / "runs"), "--data", str(synthetic_root)]
                    + _set(TINY_OVERRIDES + ["ablation.variants=[\"dit\",\"ddpm_full\"]"]))
        assert code == 0
        run_dir = _only_run_dir(tmp_path / "runs")
        frame = pd.read_csv(run_dir / "ablation.csv")
        assert frame["variant"].tolist() == ["dit", "ddpm_full"]


class TestSampleCondition:
    def _args(self, data_root):
        return build_parser().parse_args(["sample", "--out", "runs", "--checkpoint", "ckpt.fdc",
                                          "--data", str(data_root)])

    def test_re_max_comes_from_the_manifest(self, synthetic_root):
        args = self._args(synthetic_root)
        condition = sample_condition(args, resolve_config(args), 8)
        re_max = load_dataset(synthetic_root).re_max
        expected = encode_condition(cylinder_mask((8, 8), 0.25), 7.5e6, 20.0, re_max)
        np.testing.assert_allclose(condition, expected)

    def test_empty_dataset_is_a_data_error(self, tmp_path):
        write_dataset(tmp_path / "empty", [], CaseSplit(), re_max=0.0)
        args = self._args(tmp_path / "empty")
        with pytest.raises(DataError, match="no cases"):
            sample_condition(args, resolve_config(args), 8)

    def test_explicit_re_max_skips_the_dataset(self, tmp_path):
        args = build_parser().parse_args(["sample", "--out", "runs", "--checkpoint", "ckpt.fdc",
                                          "--data", str(tmp_path / "absent"), "--set", "sample.re_max=1.5e7"])
        condition = sample_condition(args, resolve_config(args), 8)
        np.testing.assert_allclose(condition[1:].max(), 7.5e6 * np.cos(np.deg2rad(20.0)) / 1.5e7)
