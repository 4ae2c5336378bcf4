"""
Case Statistics
Pointwise replicate mean and population standard deviation.
"""

from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from utils.errors import StatisticsError
from .field_sample import CaseStatistics, FieldSample


def compute_case_statistics(replicates: Sequence[np.ndarray], case_id: Optional[int] = None) -> CaseStatistics:
    """Mean and std (ddof=0) over at least two equally shaped replicates."""
    label = "replicates" if case_id is None else f"case {case_id}"
    if len(replicates) < 2:
        raise StatisticsError(f"{label}: need at least 2 replicates, got {len(replicates)}")
    shapes = {np.shape(r) for r in replicates}
    if len(shapes) != 1:
        raise StatisticsError(f"{label}: replicate shapes differ: {sorted(shapes)}")
    stack = np.stack([np.asarray(r, dtype=np.float64) for r in replicates])
    return CaseStatistics(
        case_id=-1 if case_id is None else int(case_id),
        mean=stack.mean(axis=0),
        std=stack.std(axis=0, ddof=0),
        replicates=len(replicates),
    )


def statistics_by_case(samples: Iterable[FieldSample],
                       case_ids: Optional[Iterable[int]] = None) -> Dict[int, CaseStatistics]:
    """Reference statistics for every case (or the listed cases) in a sample set."""
    grouped: Dict[int, List[FieldSample]] = defaultdict(list)
    for sample in samples:
        grouped[sample.meta.case_id].append(sample)
    wanted = sorted(grouped) if case_ids is None else sorted(case_ids)
    stats = {}
    for case_id in wanted:
        members = sorted(grouped.get(case_id, []), key=lambda s: s.meta.replicate)
        stats[case_id] = compute_case_statistics([s.target for s in members], case_id=case_id)
    return stats
