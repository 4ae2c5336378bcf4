"""
Reference Case Table
This module contains the case configurations of the reference airfoil dataset
(Reynolds number, subset and uncertainty category per case) and the rules
that map a Reynolds number to its evaluation region.
"""

from typing import Dict, Iterable, List, Optional

from utils.errors import DataError
from .field_sample import CaseInfo, CaseSplit, Category, Region, Subset


class ReferenceCases:
    """Predefined case configurations of the reference dataset."""

    ALPHA_DEG = 20.0
    REPLICATES = 20
    GRID = 32

    CASES = {
        0: {"reynolds": 0.5e6, "subset": "Test", "category": "Low"},
        1: {"reynolds": 1.5e6, "subset": "Training", "category": "Low"},
        2: {"reynolds": 2.5e6, "subset": "Test", "category": "Low"},
        3: {"reynolds": 3.5e6, "subset": "Training", "category": "Low"},
        4: {"reynolds": 4.5e6, "subset": "Test", "category": "Low"},
        5: {"reynolds": 5.5e6, "subset": "Training", "category": "High"},
        6: {"reynolds": 6.5e6, "subset": "Training", "category": "High"},
        7: {"reynolds": 7.5e6, "subset": "Test", "category": "High"},
        8: {"reynolds": 8.5e6, "subset": "Training", "category": "High"},
        9: {"reynolds": 9.5e6, "subset": "Test", "category": "High"},
        10: {"reynolds": 10.5e6, "subset": "Test", "category": "High"},
    }

    # Condition used for the single-case ablation comparison.
    ABLATION_CASE = 7

    @classmethod
    def training_reynolds(cls) -> List[float]:
        return [row["reynolds"] for row in cls.CASES.values() if row["subset"] == "Training"]

    @classmethod
    def re_max(cls) -> float:
        return max(row["reynolds"] for row in cls.CASES.values())

    @classmethod
    def split(cls, alpha_deg: Optional[float] = None) -> CaseSplit:
        """CaseSplit of the reference table with inferred regions."""
        alpha = cls.ALPHA_DEG if alpha_deg is None else float(alpha_deg)
        rows = [dict(row, case_id=case_id, alpha_deg=alpha) for case_id, row in cls.CASES.items()]
        return build_split(rows)


def infer_region(reynolds: float, training_reynolds: Iterable[float]) -> Region:
    """Interpolation inside the span of training Reynolds numbers, extrapolation outside."""
    training = list(training_reynolds)
    if not training:
        raise DataError("Cannot infer regions without training cases")
    if min(training) <= reynolds <= max(training):
        return Region.INTERPOLATION
    return Region.EXTRAPOLATION


def build_split(rows: Iterable[Dict]) -> CaseSplit:
    """CaseSplit from rows holding case_id, reynolds, alpha_deg, subset, category and optionally region."""
    rows = list(rows)
    try:
        training = [float(r["reynolds"]) for r in rows if Subset(r["subset"]) == Subset.TRAINING]
        split = CaseSplit()
        for row in rows:
            region = row.get("region")
            split.add(CaseInfo(
                case_id=int(row["case_id"]),
                reynolds=float(row["reynolds"]),
                alpha_deg=float(row["alpha_deg"]),
                subset=Subset(row["subset"]),
                category=Category(row["category"]),
                region=Region(region) if isinstance(region, str) and region else infer_region(float(row["reynolds"]), training),
            ))
    except (KeyError, ValueError) as e:
        raise DataError(f"Invalid case row: {e}") from e
    return split


def category_for(reynolds: float, threshold: float = 5.0e6) -> Category:
    """Uncertainty category of a Reynolds number; the reference table switches to High above 5e6."""
    return Category.HIGH if reynolds > threshold else Category.LOW
