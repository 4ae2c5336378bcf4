"""
Archive Parser for the Upstream Airfoil Dataset
This module converts the published airfoil uncertainty archive into the
foildiff dataset layout.

Upstream files are ``.npz`` archives (a directory of them or a zip) whose
array ``a`` holds six H x W channels: freestream u_x, freestream u_y, mask,
pressure, u_x, u_y. The mask is 1 inside the airfoil. Reynolds number and
angle of attack are read from the file name. Files sharing (Re, alpha)
are replicates of one case.
"""

import io
import logging
import re
import zipfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from data.case_table import ReferenceCases, build_split, category_for
from data.dataset_manager import write_dataset
from data.field_sample import CaseSplit, FieldSample, SampleMeta
from data.normalization import encode_condition, normalize_raw_case
from .errors import ArchiveImportError, DataError, ParseError

logger = logging.getLogger(__name__)

UPSTREAM_CHANNELS = ("freestream_x", "freestream_y", "mask", "pressure", "velocity_x", "velocity_y")


@dataclass
class RawSample:
    name: str
    reynolds: float
    alpha_deg: float
    planes: np.ndarray


@dataclass
class ImportResult:
    manifest: Path
    cases: int = 0
    samples: int = 0
    unmatched: List[int] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.samples == 0


class ArchiveParser:
    """Reads upstream .npz samples and groups them into cases."""

    def __init__(self, reynolds_tolerance: float = 0.01):
        self.reynolds_tolerance = reynolds_tolerance
        self.tagged_pattern = re.compile(
            r"re[_-]?(?P<re>\d+(?:\.\d+)?(?:e[+-]?\d+)?).*?(?:aoa|alpha)[_-]?(?P<alpha>-?\d+(?:\.\d+)?)",
            re.IGNORECASE,
        )
        self.positional_pattern = re.compile(r"_(?P<re>\d{5,})_(?P<alpha>-?\d+(?:\.\d+)?)(?:_\d+)*\.npz$")

    def parse_name(self, name: str) -> Tuple[float, float]:
        """(Re, alpha in degrees) encoded in an upstream file name."""
        stem = Path(name).name
        for pattern in (self.tagged_pattern, self.positional_pattern):
            match = pattern.search(stem)
            if match:
                return float(match.group("re")), float(match.group("alpha"))
        raise ParseError(f"{name}: file name: cannot find Reynolds number and angle of attack")

    def _entries(self, source: Path) -> Iterator[Tuple[str, bytes]]:
        if source.is_dir():
            for path in sorted(source.rglob("*.npz")):
                yield str(path.relative_to(source)), path.read_bytes()
        elif zipfile.is_zipfile(source):
            with zipfile.ZipFile(source) as archive:
                for name in sorted(n for n in archive.namelist() if n.endswith(".npz")):
                    yield name, archive.read(name)
        else:
            raise ArchiveImportError(f"{source} is neither a directory nor a zip archive")

    def read_entry(self, name: str, data: bytes) -> RawSample:
        reynolds, alpha_deg = self.parse_name(name)
        try:
            with np.load(io.BytesIO(data)) as npz:
                keys = list(npz.keys())
                key = "a" if "a" in keys else (keys[0] if len(keys) == 1 else None)
                if key is None:
                    raise ParseError(f"{name}: array: expected key 'a', found {keys}")
                planes = np.asarray(npz[key], dtype=np.float64)
        except (OSError, ValueError, zipfile.BadZipFile) as e:
            raise ParseError(f"{name}: unreadable npz: {e}") from e
        if planes.ndim != 3 or planes.shape[0] != len(UPSTREAM_CHANNELS):
            raise ParseError(f"{name}: array: expected 6 x H x W, got {planes.shape}")
        for channel, plane in zip(UPSTREAM_CHANNELS, planes):
            if not np.isfinite(plane).all():
                raise ParseError(f"{name}: {channel}: non-finite values")
        return RawSample(name=name, reynolds=reynolds, alpha_deg=alpha_deg, planes=planes)

    def read(self, source: Union[str, Path]) -> Tuple[List[RawSample], Dict[str, str]]:
        """Every readable sample plus a name -> error map of the rest."""
        source = Path(source)
        if not source.exists():
            raise ArchiveImportError(f"Archive {source} does not exist")
        samples, failures = [], {}
        try:
            for name, data in self._entries(source):
                try:
                    samples.append(self.read_entry(name, data))
                except DataError as e:
                    failures[name] = str(e)
        except (OSError, zipfile.BadZipFile) as e:
            raise ArchiveImportError(f"{source}: unreadable archive: {e}", salvageable=[]) from e
        return samples, failures

    def group_cases(self, samples: List[RawSample]) -> Dict[Tuple[float, float], List[RawSample]]:
        grouped = defaultdict(list)
        for sample in samples:
            grouped[(sample.reynolds, sample.alpha_deg)].append(sample)
        return {key: sorted(grouped[key], key=lambda s: s.name) for key in sorted(grouped)}

    def reference_row(self, reynolds: float) -> Optional[Dict]:
        for row in ReferenceCases.CASES.values():
            if abs(row["reynolds"] - reynolds) <= self.reynolds_tolerance * row["reynolds"]:
                return row
        return None

    def convert(self, raw: RawSample, case_id: int, replicate: int, re_max: float) -> FieldSample:
        freestream_x, freestream_y, mask, pressure, velocity_x, velocity_y = raw.planes
        solid = mask >= 0.5
        fluid = ~solid
        if not fluid.any():
            raise ParseError(f"{raw.name}: mask: no fluid cells")
        freestream = (float(freestream_x[fluid].mean()), float(freestream_y[fluid].mean()))
        freestream_pressure = float(pressure[fluid].mean())
        target = normalize_raw_case(pressure, velocity_x, velocity_y, freestream, freestream_pressure, mask=mask)
        condition = encode_condition(mask, raw.reynolds, raw.alpha_deg, re_max)
        return FieldSample(
            condition=condition.astype(np.float32),
            target=target.astype(np.float32),
            meta=SampleMeta(case_id=case_id, reynolds=raw.reynolds, alpha_deg=raw.alpha_deg, replicate=replicate),
        )


def import_archive(source: Union[str, Path], out_dir: Union[str, Path],
                   parser: Optional[ArchiveParser] = None) -> ImportResult:
    """Convert an upstream archive into sample files plus a manifest."""
    parser = parser or ArchiveParser()
    raw_samples, failures = parser.read(source)
    grouped = parser.group_cases(raw_samples)

    if failures:
        failed_cases = set()
        for name in failures:
            try:
                failed_cases.add(parser.parse_name(name))
            except ParseError:
                pass
        salvageable = [
            f"Re={reynolds:g} alpha={alpha:g}" for reynolds, alpha in grouped
            if (reynolds, alpha) not in failed_cases
        ]
        details = "; ".join(f"{name}: {error}" for name, error in sorted(failures.items()))
        raise ArchiveImportError(
            f"{len(failures)} file(s) in {source} could not be imported ({details}). "
            f"Salvageable cases: {salvageable or 'none'}",
            salvageable=salvageable,
        )

    if not grouped:
        logger.warning("Archive %s holds no samples; writing an empty manifest", source)
        manifest = write_dataset(out_dir, [], CaseSplit(), re_max=0.0)
        return ImportResult(manifest=manifest)

    re_max = max(reynolds for reynolds, _ in grouped)
    rows, samples, unmatched = [], [], []
    for case_id, ((reynolds, alpha_deg), members) in enumerate(grouped.items()):
        reference = parser.reference_row(reynolds)
        if reference is None:
            unmatched.append(case_id)
            reference = {"subset": "Test", "category": category_for(reynolds).value}
        rows.append({"case_id": case_id, "reynolds": reynolds, "alpha_deg": alpha_deg,
                     "subset": reference["subset"], "category": reference["category"]})
        for replicate, raw in enumerate(members):
            samples.append(parser.convert(raw, case_id, replicate, re_max))
    if unmatched:
        logger.warning("Cases %s match no reference Reynolds number; assigned to Test", unmatched)
    if not any(row["subset"] == "Training" for row in rows):
        raise ArchiveImportError("No imported case matches a training Reynolds number",
                                 salvageable=[f"Re={r['reynolds']:g}" for r in rows])

    manifest = write_dataset(out_dir, samples, build_split(rows), re_max)
    logger.info("Imported %d samples in %d cases from %s", len(samples), len(rows), source)
    return ImportResult(manifest=manifest, cases=len(rows), samples=len(samples), unmatched=unmatched)
