"""DICOM CT + RT-STRUCT ingestion into the RTFD dataset format."""

from __future__ import annotations

import logging
from pathlib import Path

from .dicom import DicomError
from .extract import (
    CtGrid,
    extract_central_slice,
    extract_tabular,
    extract_volume,
    load_ct_series,
    load_rtstruct,
    rasterize_roi,
)
from .namemap import CLASS_NAMES, NameMap
from .rtfd import IngestRecord, export_rtfd

log = logging.getLogger("rtfed_ingest")

__version__ = "0.1.0"


def ingest_study(ct_series_dir, rtstruct_file, name_map: NameMap, out_dims, patient_id=None):
    """Convert one CT series + RT-STRUCT into records.

    ``out_dims`` is ((slice_h, slice_w), (vol_d, vol_h, vol_w)).  ROIs whose
    names do not match the map, or that rasterize empty, are skipped with a
    logged reason.
    """
    (slice_hw, volume_dhw) = out_dims
    grid = load_ct_series(ct_series_dir)
    spacing_zyx = (grid.spacing[2], grid.spacing[1], grid.spacing[0])
    pid = patient_id or Path(ct_series_dir).name
    records = []
    for roi in load_rtstruct(rtstruct_file):
        label = name_map.match(roi.name)
        if label is None:
            log.info("skipping unmatched ROI %r", roi.name)
            continue
        mask = rasterize_roi(roi, grid)
        if not mask.any():
            log.warning("skipping ROI %r: empty rasterization", roi.name)
            continue
        records.append(
            IngestRecord(
                patient_id=pid,
                label=label,
                tabular=extract_tabular(mask, grid.volume, spacing_zyx),
                slice2d=extract_central_slice(mask, grid.volume, slice_hw),
                volume3d=extract_volume(mask, grid.volume, volume_dhw),
            )
        )
    return records


__all__ = [
    "CLASS_NAMES",
    "CtGrid",
    "DicomError",
    "IngestRecord",
    "NameMap",
    "export_rtfd",
    "extract_central_slice",
    "extract_tabular",
    "extract_volume",
    "ingest_study",
    "load_ct_series",
    "load_rtstruct",
    "rasterize_roi",
]
