"""Gridded case containers, point-data ingestion, normalization and splits."""
from .record import SCHEMA_VERSION, CaseMeta, CaseRecord
from .container import ChecksumError, list_cases, read_container, read_meta, write_container
from .grid import fill_empty_cells, interpolate_to_grid, pad_constant_bc, pad_mask
from .normalize import NormalizationStats, normalize_params
from .split import DatasetSplit, split_by_group, split_cases
from .dataset import SPLIT_FILE, FlowDataset, ingest_points

__all__ = [
    "CaseMeta", "CaseRecord", "ChecksumError", "DatasetSplit", "FlowDataset", "NormalizationStats",
    "SCHEMA_VERSION", "SPLIT_FILE", "fill_empty_cells", "ingest_points", "interpolate_to_grid",
    "list_cases", "normalize_params", "pad_constant_bc", "pad_mask", "read_container", "read_meta",
    "split_by_group", "split_cases", "write_container",
]
