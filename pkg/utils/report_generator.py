"""
Report Generator
This module writes evaluation and ablation results as CSV tables,
fixed-width text, markdown and HTML.
"""

import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import jinja2
import markdown
import pandas as pd

from configs.report_templates import (
    ABLATION_MARKDOWN_TEMPLATE,
    ABLATION_TEXT_TEMPLATE,
    EVAL_MARKDOWN_TEMPLATE,
    EVAL_TEXT_TEMPLATE,
)
from .evaluator import EvalReport

logger = logging.getLogger(__name__)

RULE_WIDTH = 132


def format_scaled(value: float, scale: float = 1e-3, se: float = None) -> str:
    """value / scale with three decimals, plus a +/- term when the standard error is known."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    text = f"{value / scale:.3f}"
    if se is not None and not math.isnan(se):
        text += f" +/- {se / scale:.3f}"
    return text


def format_float(value: float, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{value:.{digits}e}"


def format_percent(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "--"
    return f"{value:+.1f}%"


class ReportGenerator:
    """Renders reports into a run directory."""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _eval_context(self, report: EvalReport) -> Dict[str, Any]:
        aggregates = [
            {
                "region": row.region,
                "category": row.category,
                "cases": row.cases,
                "mse_mu": format_scaled(row.mse_mu, se=row.mse_mu_se),
                "mse_sigma": format_scaled(row.mse_sigma, se=row.mse_sigma_se),
            }
            for row in report.aggregates
        ]
        cases = [
            {
                "case_id": row.case_id,
                "reynolds": f"{row.reynolds:.3g}",
                "region": row.region,
                "category": row.category,
                "mse_mu": format_float(row.mse_mu),
                "mse_sigma": format_float(row.mse_sigma),
                "seconds": "n/a" if math.isnan(row.inference_seconds) else f"{row.inference_seconds:.4f}",
                "degenerate": row.degenerate,
            }
            for row in report.cases
        ]
        timing = {}
        if report.timing:
            timing = {
                "model_evaluations": report.timing.get("model_evaluations", 0),
                "wall_seconds": f"{report.timing.get('wall_seconds', 0.0):.2f}",
            }
        return {
            "plan": report.plan or "n/a",
            "ensemble_size": report.ensemble_size,
            "protocol_parity": report.protocol_parity,
            "aggregates": aggregates,
            "cases": cases,
            "timing": timing,
            "rule": "-" * RULE_WIDTH,
        }

    def render_eval_text(self, report: EvalReport) -> str:
        return jinja2.Template(EVAL_TEXT_TEMPLATE).render(**self._eval_context(report))

    def render_eval_markdown(self, report: EvalReport) -> str:
        return jinja2.Template(EVAL_MARKDOWN_TEMPLATE).render(**self._eval_context(report))

    def write_eval_report(self, report: EvalReport, stem: str = "eval_report") -> List[Path]:
        """CSV, text, markdown and HTML renderings of an evaluation."""
        csv_path = self.out_dir / f"{stem}.csv"
        report.to_frame().to_csv(csv_path, index=False)
        md = self.render_eval_markdown(report)
        paths = [
            csv_path,
            self._write(f"{stem}.txt", self.render_eval_text(report)),
            self._write(f"{stem}.md", md),
            self._write(f"{stem}.html", markdown.markdown(md, extensions=["tables"])),
        ]
        logger.info("Wrote evaluation report %s", csv_path)
        return paths

    def _ablation_context(self, rows: Sequence, case_ids: Sequence[int]) -> Dict[str, Any]:
        formatted = [
            {
                "label": row.label,
                "mse_mu": format_float(row.mse_mu),
                "mse_mu_rel": format_percent(row.mse_mu_rel),
                "mse_sigma": format_float(row.mse_sigma),
                "mse_sigma_rel": format_percent(row.mse_sigma_rel),
                "inference_seconds": f"{row.inference_seconds:.4f}",
                "inference_rel": format_percent(row.inference_rel),
                "evaluations_per_sample": row.evaluations_per_sample,
            }
            for row in rows
        ]
        return {"rows": formatted, "cases": ", ".join(str(c) for c in case_ids), "rule": "-" * RULE_WIDTH}

    def write_ablation_table(self, rows: Sequence, case_ids: Sequence[int], stem: str = "ablation") -> List[Path]:
        """The combined relative-change table of an ablation run."""
        csv_path = self.out_dir / f"{stem}.csv"
        pd.DataFrame([asdict(row) for row in rows]).to_csv(csv_path, index=False)
        context = self._ablation_context(rows, case_ids)
        md = jinja2.Template(ABLATION_MARKDOWN_TEMPLATE).render(**context)
        paths = [
            csv_path,
            self._write(f"{stem}.txt", jinja2.Template(ABLATION_TEXT_TEMPLATE).render(**context)),
            self._write(f"{stem}.md", md),
            self._write(f"{stem}.html", markdown.markdown(md, extensions=["tables"])),
        ]
        logger.info("Wrote ablation table %s", csv_path)
        return paths

    def _write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text)
        return path
