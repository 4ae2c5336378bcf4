"""
Dataset Manager
This module loads and writes a dataset directory: one ``.fds`` file per
sample plus ``manifest.csv`` listing every file with its case, replicate
and split assignment.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from utils.errors import ParseError, SampleValidationError
from .case_table import build_split
from .field_sample import CaseSplit, Dataset, FieldSample
from .sample_io import SAMPLE_SUFFIX, read_sample, sample_filename, write_sample

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["file", "case_id", "reynolds", "alpha_deg", "replicate", "subset", "category", "region", "re_max"]


class DatasetManager:
    """Reads and writes foildiff dataset directories."""

    def __init__(self, root: Union[str, Path], workers: int = 4):
        self.root = Path(root)
        self.workers = max(int(workers), 1)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    def read_manifest(self) -> pd.DataFrame:
        """Manifest rows with column and type checks."""
        path = self.manifest_path
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ParseError(f"{path}: unreadable manifest: {e}") from e
        missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
        if missing:
            raise ParseError(f"{path}: manifest is missing columns {missing}")
        for column in ("case_id", "replicate"):
            try:
                frame[column] = frame[column].astype(np.int64)
            except (TypeError, ValueError) as e:
                raise ParseError(f"{path}: column {column}: {e}") from e
        for column in ("reynolds", "alpha_deg", "re_max"):
            try:
                frame[column] = frame[column].astype(np.float64)
            except (TypeError, ValueError) as e:
                raise ParseError(f"{path}: column {column}: {e}") from e
        if frame["re_max"].nunique() > 1:
            raise ParseError(f"{path}: column re_max: rows disagree on the dataset-wide maximum")
        return frame

    def load(self) -> Dataset:
        """Parse and validate every sample listed in the manifest."""
        if not self.root.is_dir():
            raise ParseError(f"Dataset root {self.root} is not a directory")
        sample_files = sorted(self.root.glob(f"*{SAMPLE_SUFFIX}"))
        if not self.manifest_path.exists():
            if sample_files:
                raise ParseError(f"{self.root}: {len(sample_files)} sample files but no {MANIFEST_NAME}")
            logger.warning("Dataset directory %s is empty; returning an empty dataset", self.root)
            return Dataset(samples=[], split=CaseSplit(), re_max=0.0)

        frame = self.read_manifest()
        if frame.empty:
            logger.warning("Manifest %s lists no samples; returning an empty dataset", self.manifest_path)
            return Dataset(samples=[], split=CaseSplit(), re_max=0.0)
        re_max = float(frame["re_max"].iloc[0])
        rows = frame.to_dict("records")

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            samples = list(pool.map(lambda row: self._load_row(row, re_max), rows))

        case_rows = frame.drop_duplicates("case_id")[
            ["case_id", "reynolds", "alpha_deg", "subset", "category", "region"]
        ].to_dict("records")
        split = build_split(case_rows)
        logger.info("Loaded %d samples across %d cases from %s", len(samples), len(split), self.root)
        return Dataset(samples=samples, split=split, re_max=re_max)

    def _load_row(self, row: Dict, re_max: float) -> FieldSample:
        path = self.root / str(row["file"])
        sample = read_sample(path)
        if (sample.meta.case_id, sample.meta.replicate) != (row["case_id"], row["replicate"]):
            raise SampleValidationError(
                f"{path}: header says case {sample.meta.case_id} replicate {sample.meta.replicate}, "
                f"manifest says case {row['case_id']} replicate {row['replicate']}"
            )
        try:
            return sample.validate(re_max=re_max)
        except SampleValidationError as e:
            raise SampleValidationError(f"{path}: {e}") from e

    def write(self, samples: Sequence[FieldSample], split: CaseSplit, re_max: float) -> Path:
        """Write sample files and the manifest, sorted by (case, replicate)."""
        self.root.mkdir(parents=True, exist_ok=True)
        rows = []
        for sample in sorted(samples, key=lambda s: (s.meta.case_id, s.meta.replicate)):
            meta = sample.meta
            if meta.case_id not in split:
                raise SampleValidationError(f"case {meta.case_id} has no split assignment")
            info = split[meta.case_id]
            name = sample_filename(meta.case_id, meta.replicate)
            write_sample(self.root / name, sample)
            rows.append({
                "file": name,
                "case_id": meta.case_id,
                "reynolds": meta.reynolds,
                "alpha_deg": meta.alpha_deg,
                "replicate": meta.replicate,
                "subset": info.subset.value,
                "category": info.category.value,
                "region": info.region.value,
                "re_max": float(re_max),
            })
        frame = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
        frame.to_csv(self.manifest_path, index=False)
        logger.info("Wrote %d samples and %s", len(rows), self.manifest_path)
        return self.manifest_path


def load_dataset(root: Union[str, Path], workers: int = 4) -> Dataset:
    return DatasetManager(root, workers=workers).load()


def write_dataset(root: Union[str, Path], samples: Sequence[FieldSample], split: CaseSplit,
                  re_max: float) -> Path:
    return DatasetManager(root).write(samples, split, re_max)
