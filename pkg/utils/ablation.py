"""
Ablation Study
This module trains and evaluates the architectural and sampler variants
under one shared run configuration and tabulates each against the first
variant: the full model with DDIM, a convolutional mid-block in place of
the latent transformer, a latent DiT without encoder-decoder skips, and the
full model sampled with every DDPM step.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from data.field_sample import Dataset
from diffusion.samplers import SamplerKind
from models.config import LatentKind
from models.denoiser import count_parameters
from .errors import ConfigError
from .evaluator import EvalReport, Evaluator, relative_change
from .report_generator import ReportGenerator
from .trainer import DiffusionTrainer

logger = logging.getLogger(__name__)


class AblationVariants:
    """Variant names, display labels and what each one changes."""

    LABELS = {
        "dit": "Full model (DiT latent, DDIM)",
        "uvit": "U-ViT latent (DDIM)",
        "unet_mid": "No transformer (U-Net mid-block)",
        "none_skipless_dit": "Standard DiT (no encoder-decoder skips)",
        "ddpm_full": "Full-step DDPM (no acceleration)",
    }

    # Sampler-only variants reuse the model trained for this latent kind.
    SAMPLER_VARIANTS = {"ddpm_full": ("dit", SamplerKind.DDPM_FULL)}

    @classmethod
    def latent_kind(cls, variant: str) -> LatentKind:
        if variant in cls.SAMPLER_VARIANTS:
            return LatentKind(cls.SAMPLER_VARIANTS[variant][0])
        return LatentKind(variant)

    @classmethod
    def sampler_kind(cls, variant: str, default: str) -> str:
        if variant in cls.SAMPLER_VARIANTS:
            return cls.SAMPLER_VARIANTS[variant][1].value
        return default


@dataclass
class AblationRow:
    variant: str
    label: str
    mse_mu: float
    mse_mu_rel: float
    mse_sigma: float
    mse_sigma_rel: float
    inference_seconds: float
    inference_rel: float
    model_evaluations: int
    evaluations_per_sample: float
    parameters: int


def ablation_rows(results: Sequence[Tuple[str, EvalReport, int]]) -> List[AblationRow]:
    """Relative-change rows against the first variant, averaged over the evaluated cases."""
    if not results:
        raise ConfigError("ablation.variants must name at least one variant")
    summaries = []
    for variant, report, parameters in results:
        evaluations = int(sum(c.model_evaluations for c in report.cases))
        members = int(sum(c.ensemble_size for c in report.cases))
        summaries.append({
            "variant": variant,
            "mse_mu": float(np.mean([c.mse_mu for c in report.cases])),
            "mse_sigma": float(np.mean([c.mse_sigma for c in report.cases])),
            "seconds": float(np.mean([c.inference_seconds for c in report.cases])),
            "evaluations": evaluations,
            "per_sample": evaluations / max(members, 1),
            "parameters": parameters,
        })
    base = summaries[0]
    rows = []
    for s in summaries:
        first = s is base
        rows.append(AblationRow(
            variant=s["variant"],
            label=AblationVariants.LABELS.get(s["variant"], s["variant"]),
            mse_mu=s["mse_mu"],
            mse_mu_rel=float("nan") if first else relative_change(s["mse_mu"], base["mse_mu"]),
            mse_sigma=s["mse_sigma"],
            mse_sigma_rel=float("nan") if first else relative_change(s["mse_sigma"], base["mse_sigma"]),
            inference_seconds=s["seconds"],
            inference_rel=float("nan") if first else relative_change(s["seconds"], base["seconds"]),
            model_evaluations=s["evaluations"],
            evaluations_per_sample=s["per_sample"],
            parameters=s["parameters"],
        ))
    return rows


def run_ablation(run_config, dataset: Dataset, out_dir: Union[str, Path]) -> Tuple[List[AblationRow], List[Path]]:
    """Train each distinct latent kind once, evaluate every variant and write the tables."""
    out_dir = Path(out_dir)
    cfg = run_config.ablation
    schedule = run_config.noise_schedule()
    missing = [c for c in cfg.case_ids if c not in dataset.split]
    if missing:
        raise ConfigError(f"ablation.case_ids: cases {missing} are not in the dataset")

    models: Dict[LatentKind, object] = {}
    results = []
    paths: List[Path] = []
    for variant in cfg.variants:
        kind = AblationVariants.latent_kind(variant)
        if kind not in models:
            logger.info("Training the %s variant", kind.value)
            trainer = DiffusionTrainer(run_config.backbone.with_kind(kind), schedule, run_config.training,
                                       seed=run_config.seed, device=run_config.device)
            trained = trainer.train(dataset, out_dir / kind.value)
            models[kind] = trained.model
        model = models[kind]
        plan = run_config.sampler_plan(kind=AblationVariants.sampler_kind(variant, run_config.sampler.kind))
        evaluator = Evaluator(model, schedule, plan, device=run_config.device)
        report, _ = evaluator.evaluate(dataset, run_config.evaluation.ensemble_size, seed=run_config.seed,
                                       case_ids=cfg.case_ids, shared_noise=run_config.evaluation.shared_noise)
        paths.extend(ReportGenerator(out_dir / variant).write_eval_report(report))
        results.append((variant, report, count_parameters(model)))
        logger.info("Variant %s: MSE_mu %.4e, MSE_sigma %.4e", variant,
                    np.mean([c.mse_mu for c in report.cases]), np.mean([c.mse_sigma for c in report.cases]))

    rows = ablation_rows(results)
    paths.extend(ReportGenerator(out_dir).write_ablation_table(rows, cfg.case_ids))
    return rows, paths
