"""
Evaluator
This module runs ensemble inference for each evaluated case, compares the
ensemble mean and spread against the replicate statistics, and aggregates
the errors by region and uncertainty category.
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from scipy.stats import spearmanr

from data.field_sample import CaseSplit, CaseStatistics, Dataset, FieldSample, Region, SampleMeta, Subset
from data.sample_io import write_sample
from data.statistics import statistics_by_case
from diffusion.forward_process import noise_generator
from diffusion.sampler_manager import SamplerManager
from diffusion.samplers import SamplerPlan
from diffusion.schedules import NoiseSchedule
from utils.errors import EvaluationError, ProtocolError

logger = logging.getLogger(__name__)

AGGREGATE_CATEGORIES = ("Low", "High", "All")


@dataclass(eq=False)
class EnsemblePrediction:
    """Generated members with their pointwise mean and spread."""

    members: np.ndarray
    mean: np.ndarray
    std: Optional[np.ndarray]
    model_evaluations: int
    wall_seconds: float
    degenerate: bool = False
    protocol_parity: bool = False

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    @property
    def seconds_per_sample(self) -> float:
        return self.wall_seconds / max(self.size, 1)


@dataclass
class CaseResult:
    case_id: int
    reynolds: float
    region: str
    category: str
    mse_mu: float
    mse_sigma: float
    ensemble_size: int = 0
    model_evaluations: int = 0
    inference_seconds: float = float("nan")
    degenerate: bool = False
    protocol_parity: bool = False


@dataclass
class AggregateRow:
    region: str
    category: str
    cases: int
    mse_mu: float
    mse_mu_se: float
    mse_sigma: float
    mse_sigma_se: float


@dataclass
class EvalReport:
    """Per-case errors, region x category aggregates and the timing summary."""

    cases: List[CaseResult]
    aggregates: List[AggregateRow]
    ensemble_size: int
    plan: str = ""
    timing: Dict[str, Any] = field(default_factory=dict)

    def case_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(c) for c in self.cases])

    def aggregate_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(a) for a in self.aggregates])

    def to_frame(self) -> pd.DataFrame:
        """One row per case followed by the aggregate rows."""
        cases = self.case_frame()
        cases.insert(0, "row", "case")
        aggregates = self.aggregate_frame()
        aggregates.insert(0, "row", "aggregate")
        return pd.concat([cases, aggregates], ignore_index=True, sort=False)

    def aggregate(self, region: str, category: str) -> Optional[AggregateRow]:
        for row in self.aggregates:
            if row.region == region and row.category == category:
                return row
        return None

    @property
    def protocol_parity(self) -> bool:
        return bool(self.cases) and all(c.protocol_parity for c in self.cases)


def mse_fields(predicted: np.ndarray, reference: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Mean squared difference over fluid cells (mask < 0.5) of every channel."""
    predicted = np.asarray(predicted, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if predicted.shape != reference.shape:
        raise EvaluationError(f"Cannot compare fields of shape {predicted.shape} and {reference.shape}")
    squared = (predicted - reference) ** 2
    if mask is None:
        return float(squared.mean())
    fluid = np.asarray(mask) < 0.5
    if fluid.shape != predicted.shape[-fluid.ndim:]:
        raise EvaluationError(f"Mask of shape {fluid.shape} does not cover fields of shape {predicted.shape}")
    if not fluid.any():
        raise EvaluationError("Mask leaves no fluid cells to compare")
    return float(squared[..., fluid].mean())


def relative_change(value: float, baseline: float) -> float:
    """Percentage change of value against baseline."""
    if baseline == 0:
        return float("nan")
    return (value - baseline) / baseline * 100.0


def standard_error(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return float("nan")
    return float(values.std(ddof=1) / np.sqrt(values.size))


def aggregate_results(cases: Sequence[CaseResult]) -> List[AggregateRow]:
    """Unweighted case means per region x {Low, High, All}; empty groups are skipped."""
    rows = []
    for region in (Region.INTERPOLATION.value, Region.EXTRAPOLATION.value):
        for category in AGGREGATE_CATEGORIES:
            members = [c for c in cases if c.region == region and (category == "All" or c.category == category)]
            if not members:
                continue
            mu = [c.mse_mu for c in members]
            sigma = [c.mse_sigma for c in members]
            rows.append(AggregateRow(
                region=region,
                category=category,
                cases=len(members),
                mse_mu=float(np.mean(mu)),
                mse_mu_se=standard_error(mu),
                mse_sigma=float(np.mean(sigma)),
                mse_sigma_se=standard_error(sigma),
            ))
    return rows


def uncertainty_rank_correlation(predicted_std: np.ndarray, reference_std: np.ndarray,
                                 mask: Optional[np.ndarray] = None) -> float:
    """Spearman correlation of predicted and reference spread over fluid cells."""
    predicted_std = np.asarray(predicted_std, dtype=np.float64)
    reference_std = np.asarray(reference_std, dtype=np.float64)
    if predicted_std.shape != reference_std.shape:
        raise EvaluationError(f"Cannot correlate fields of shape {predicted_std.shape} and {reference_std.shape}")
    if mask is None:
        a, b = predicted_std.ravel(), reference_std.ravel()
    else:
        fluid = np.asarray(mask) < 0.5
        a, b = predicted_std[..., fluid].ravel(), reference_std[..., fluid].ravel()
    return float(spearmanr(a, b).correlation)


def evaluate_predictions(predictions: Dict[int, Tuple[np.ndarray, np.ndarray]],
                         statistics: Dict[int, CaseStatistics], split: CaseSplit,
                         masks: Dict[int, np.ndarray], ensemble_size: int = 0,
                         plan: str = "", details: Optional[Dict[int, EnsemblePrediction]] = None) -> EvalReport:
    """Score predicted (mean, std) fields against the reference statistics."""
    cases = []
    for case_id in sorted(predictions):
        if case_id not in statistics:
            raise EvaluationError(f"No reference statistics for case {case_id}")
        if case_id not in split:
            raise EvaluationError(f"Case {case_id} has no split assignment")
        mean, std = predictions[case_id]
        if std is None:
            raise ProtocolError(f"Case {case_id}: an ensemble of at least 2 members is needed for the spread")
        reference = statistics[case_id]
        info = split[case_id]
        mask = masks.get(case_id)
        result = CaseResult(
            case_id=case_id,
            reynolds=info.reynolds,
            region=info.region.value,
            category=info.category.value,
            mse_mu=mse_fields(mean, reference.mean, mask),
            mse_sigma=mse_fields(std, reference.std, mask),
            ensemble_size=ensemble_size,
        )
        prediction = (details or {}).get(case_id)
        if prediction is not None:
            result.ensemble_size = prediction.size
            result.model_evaluations = prediction.model_evaluations
            result.inference_seconds = prediction.seconds_per_sample
            result.degenerate = prediction.degenerate
            result.protocol_parity = prediction.size == reference.replicates
        cases.append(result)
    timing = {}
    if details:
        timing = {
            "model_evaluations": int(sum(p.model_evaluations for p in details.values())),
            "wall_seconds": float(sum(p.wall_seconds for p in details.values())),
            "seconds_per_sample": float(np.mean([p.seconds_per_sample for p in details.values()])),
        }
    return EvalReport(cases=cases, aggregates=aggregate_results(cases), ensemble_size=ensemble_size,
                      plan=plan, timing=timing)


class Evaluator:
    """Ensemble inference and scoring for one model under one sampler plan."""

    def __init__(self, model, schedule: NoiseSchedule, plan: SamplerPlan, device: str = "cpu"):
        self.model = model
        self.schedule = schedule
        self.plan = plan
        self.device = device
        self.sampler_manager = SamplerManager(schedule)

    def ensemble_predict(self, condition: Union[np.ndarray, torch.Tensor], ensemble_size: int,
                         generator: Optional[torch.Generator] = None, shared_noise: bool = False,
                         reference_replicates: Optional[int] = None,
                         require_spread: bool = False) -> EnsemblePrediction:
        """Generate an ensemble for one condition in a single batched call."""
        if ensemble_size < 1:
            raise ProtocolError(f"Ensemble size must be >= 1, got {ensemble_size}")
        if require_spread and ensemble_size < 2:
            raise ProtocolError("An ensemble of at least 2 members is needed for the spread")
        condition = torch.as_tensor(np.asarray(condition, dtype=np.float32), device=self.device)
        if condition.ndim != 3 or condition.shape[0] != 3:
            raise ProtocolError(f"Condition must be 3 x H x W, got {tuple(condition.shape)}")
        batch = condition.unsqueeze(0).expand(ensemble_size, -1, -1, -1).contiguous()
        x_T = None
        if shared_noise:
            single = torch.randn((1, 3) + tuple(condition.shape[1:]), generator=generator, device=self.device)
            x_T = single.expand(ensemble_size, -1, -1, -1).contiguous()

        before = self.sampler_manager.get_usage_info()
        start = time.perf_counter()
        members = self.sampler_manager.generate(self.model, batch, self.plan, generator, x_T=x_T)
        elapsed = time.perf_counter() - start
        evaluations = self.sampler_manager.usage["model_evaluations"] - before["model_evaluations"]

        members = members.detach().cpu().numpy().astype(np.float64)
        mean = members.mean(axis=0)
        std = members.std(axis=0, ddof=0) if ensemble_size >= 2 else None
        degenerate = std is not None and not np.any(std > 0)
        if degenerate:
            logger.warning("Ensemble of %d members is degenerate: every member is identical", ensemble_size)
        return EnsemblePrediction(
            members=members,
            mean=mean,
            std=std,
            model_evaluations=int(evaluations),
            wall_seconds=elapsed,
            degenerate=degenerate,
            protocol_parity=reference_replicates is not None and ensemble_size == reference_replicates,
        )

    def evaluate(self, dataset: Dataset, ensemble_size: int, seed: int = 0,
                 case_ids: Optional[Sequence[int]] = None, subset: Optional[str] = "Test",
                 shared_noise: bool = False,
                 statistics: Optional[Dict[int, CaseStatistics]] = None) -> Tuple[EvalReport, Dict[int, EnsemblePrediction]]:
        """Evaluate every selected case; returns the report and the raw ensembles."""
        if ensemble_size < 2:
            raise ProtocolError(f"Evaluation needs an ensemble of at least 2 members, got {ensemble_size}")
        if case_ids is None:
            if subset in (None, "All"):
                case_ids = dataset.split.ids()
            else:
                case_ids = dataset.split.ids(subset=Subset(subset))
        case_ids = sorted(case_ids)
        if not case_ids:
            raise EvaluationError("No cases selected for evaluation")
        missing = [c for c in case_ids if c not in dataset.split]
        if missing:
            raise EvaluationError(f"Cases {missing} are not part of the dataset split")
        if statistics is None:
            available = set(dataset.case_ids())
            absent = [c for c in case_ids if c not in available]
            if absent:
                raise EvaluationError(f"No reference replicates for cases {absent}")
            statistics = statistics_by_case(dataset.samples, case_ids)

        predictions, masks, details = {}, {}, {}
        was_training = getattr(self.model, "training", False)
        if hasattr(self.model, "eval"):
            self.model.eval()
        try:
            for case_id in case_ids:
                if case_id not in statistics:
                    raise EvaluationError(f"No reference statistics for case {case_id}")
                sample = dataset.for_case(case_id)[0]
                generator = noise_generator(seed, case_id, device=self.device)
                prediction = self.ensemble_predict(
                    sample.condition, ensemble_size, generator, shared_noise=shared_noise,
                    reference_replicates=statistics[case_id].replicates, require_spread=True,
                )
                predictions[case_id] = (prediction.mean, prediction.std)
                masks[case_id] = sample.mask
                details[case_id] = prediction
                logger.info("Case %d: %d members in %.2fs", case_id, prediction.size, prediction.wall_seconds)
        finally:
            if was_training:
                self.model.train()

        report = evaluate_predictions(predictions, statistics, dataset.split, masks, ensemble_size=ensemble_size,
                                      plan=f"{self.plan.kind.value} x{len(self.plan)}", details=details)
        return report, details


def dump_prediction_fields(out_dir: Union[str, Path], dataset: Dataset,
                           details: Dict[int, EnsemblePrediction]) -> List[Path]:
    """Write predicted mean (replicate 0) and spread (replicate 1) fields per case as sample files."""
    out_dir = Path(out_dir)
    written = []
    for case_id, prediction in sorted(details.items()):
        sample = dataset.for_case(case_id)[0]
        fluid = sample.fluid
        for replicate, (label, field_values) in enumerate((("mean", prediction.mean), ("std", prediction.std))):
            if field_values is None:
                continue
            values = np.where(fluid, field_values, 0.0).astype(np.float32)
            dump = FieldSample(
                condition=sample.condition,
                target=values,
                meta=SampleMeta(case_id=case_id, reynolds=sample.meta.reynolds, alpha_deg=sample.meta.alpha_deg,
                                replicate=replicate),
            )
            written.append(write_sample(out_dir / f"case{case_id:03d}_{label}.fds", dump))
    return written
