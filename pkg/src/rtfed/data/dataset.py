"""Synthetic cohort assembly: phantoms -> records -> standardized features."""

from __future__ import annotations

from .features import (
    extract_central_slice,
    extract_tabular,
    extract_volume,
    standardize_tabular,
)
from .partition import StructureRecord
from .phantom import generate_cohort
from ..models import CLASS_NAMES

# Full-scale cohort: 422 patients, 64x64 slices, 32x64x64 volumes.
FULL_PROFILE = {
    "n_patients": 422,
    "slice_hw": (64, 64),
    "volume_dhw": (32, 64, 64),
    "grid": (40, 96, 96),
    "holdout_patients": 50,
}

# Small profile for fast runs and CI: fewer patients, reduced dims.
DESK_PROFILE = {
    "n_patients": 60,
    "slice_hw": (16, 16),
    "volume_dhw": (8, 16, 16),
    "grid": (24, 48, 48),
    "holdout_patients": 10,
}


def build_synthetic_dataset(
    n_patients,
    base_seed=0,
    slice_hw=(64, 64),
    volume_dhw=(32, 64, 64),
    grid=(40, 96, 96),
    spacing=(3.0, 1.5, 1.5),
    holdout_patients=50,
):
    """Generate phantoms and extract one record per contoured structure.

    Tabular features are standardized against the training+validation pool
    (everything except the last ``holdout_patients`` patients in id order) so
    no statistic leaks from the test set.
    """
    records = []
    for phantom in generate_cohort(n_patients, base_seed=base_seed, grid=grid, spacing=spacing):
        for label, name in enumerate(CLASS_NAMES):
            mask = phantom.masks.get(name)
            if mask is None:
                continue
            records.append(
                StructureRecord(
                    patient_id=phantom.patient_id,
                    label=label,
                    tabular=extract_tabular(mask, phantom.ct, phantom.spacing),
                    slice2d=extract_central_slice(mask, phantom.ct, slice_hw),
                    volume3d=extract_volume(mask, phantom.ct, volume_dhw),
                )
            )
    patients = sorted({r.patient_id for r in records})
    fit_ids = set(patients[: max(len(patients) - holdout_patients, 0)])
    if fit_ids:
        standardize_tabular(records, fit_ids)
    return records
