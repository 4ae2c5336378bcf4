import math

import pytest

from configs import load_run_config
from diffusion.samplers import SamplerKind
from models.config import LatentKind
from utils.ablation import AblationVariants, ablation_rows, run_ablation
from utils.errors import ConfigError
from utils.evaluator import CaseResult, EvalReport

from conftest import TINY_OVERRIDES


def _report(mse_mu, mse_sigma, seconds, evaluations=8, members=2):
    case = CaseResult(7, 7.5e6, "Interpolation", "High", mse_mu=mse_mu, mse_sigma=mse_sigma,
                      ensemble_size=members, model_evaluations=evaluations, inference_seconds=seconds)
    return EvalReport(cases=[case], aggregates=[], ensemble_size=members)


class TestAblationVariants:
    def test_sampler_variant_reuses_full_model(self):
        assert AblationVariants.latent_kind("ddpm_full") == LatentKind.DIT
        assert AblationVariants.sampler_kind("ddpm_full", "ddim") == SamplerKind.DDPM_FULL.value
        assert AblationVariants.latent_kind("unet_mid") == LatentKind.UNET_MID
        assert AblationVariants.sampler_kind("unet_mid", "ddim") == "ddim"


class TestAblationRows:
    def test_relative_to_first_variant(self):
        rows = ablation_rows([
            ("dit", _report(1.0, 2.0, 0.1), 100),
            ("unet_mid", _report(1.5, 1.0, 0.05), 80),
        ])
        assert math.isnan(rows[0].mse_mu_rel)
        assert math.isnan(rows[0].inference_rel)
        assert rows[1].mse_mu_rel == pytest.approx(50.0)
        assert rows[1].mse_sigma_rel == pytest.approx(-50.0)
        assert rows[1].inference_rel == pytest.approx(-50.0)
        assert rows[0].evaluations_per_sample == 4
        assert rows[1].label == AblationVariants.LABELS["unet_mid"]

    def test_empty(self):
        with pytest.raises(ConfigError):
            ablation_rows([])


class TestRunAblation:
    def test_default_variants(self, synthetic_dataset, tmp_path):
        config = load_run_config(overrides=TINY_OVERRIDES + ["ablation.case_ids=[7]"])
        rows, paths = run_ablation(config, synthetic_dataset, tmp_path)
        assert [r.variant for r in rows] == ["dit", "unet_mid", "none_skipless_dit", "ddpm_full"]
        assert math.isnan(rows[0].mse_mu_rel)
        by_variant = {r.variant: r for r in rows}
        assert by_variant["dit"].evaluations_per_sample == 4
        assert by_variant["ddpm_full"].evaluations_per_sample == 20
        assert by_variant["ddpm_full"].parameters == by_variant["dit"].parameters
        for variant in ("dit", "unet_mid", "none_skipless_dit"):
            assert (tmp_path / variant / "checkpoints").is_dir()
        assert not (tmp_path / "ddpm_full" / "checkpoints").exists()
        assert (tmp_path / "ddpm_full" / "eval_report.csv").exists()
        names = {p.name for p in paths}
        assert {"ablation.csv", "ablation.txt", "ablation.md", "ablation.html"} <= names

    def test_unknown_case(self, synthetic_dataset, tmp_path):
        config = load_run_config(overrides=TINY_OVERRIDES + ["ablation.case_ids=[5]"])
        with pytest.raises(ConfigError, match="ablation.case_ids"):
            run_ablation(config, synthetic_dataset, tmp_path)
