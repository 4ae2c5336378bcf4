# Data Package
from .field_sample import (
    CaseInfo,
    CaseSplit,
    CaseStatistics,
    Category,
    Dataset,
    FieldSample,
    Region,
    SampleMeta,
    Subset,
)
from .normalization import denormalize_case, encode_condition, normalize_raw_case
from .statistics import compute_case_statistics, statistics_by_case
from .sample_io import decode_sample, encode_sample, read_sample, write_sample
from .case_table import ReferenceCases, build_split, infer_region
from .dataset_manager import DatasetManager, load_dataset, write_dataset
from .synthetic import build_synthetic_dataset, generate_synthetic_case
