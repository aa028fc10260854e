"""Patient-level partitioning into centre shards and the ablation subsampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..models import CLASS_NAMES


class PartitionError(ValueError):
    pass


@dataclass
class StructureRecord:
    """One contoured structure: label plus its three feature modalities."""

    patient_id: str
    label: int
    tabular: np.ndarray  # (9,) float64
    slice2d: np.ndarray  # (H, W) float32 in [0, 1]
    volume3d: np.ndarray  # (D, H, W) float32 in [0, 1]


@dataclass
class CentreShard:
    centre_id: int
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)

    def n_train(self):
        return len(self.train)

    def n_val(self):
        return len(self.validation)


def _records_by_patient(records):
    by_patient = {}
    for r in records:
        by_patient.setdefault(r.patient_id, []).append(r)
    for recs in by_patient.values():
        recs.sort(key=lambda r: r.label)
    return by_patient


def partition(records, n_centres, holdout_patients=50, val_frac=0.2, seed=0):
    """Split by patient: last ``holdout_patients`` (id order) become the test
    set, the rest are shuffled by ``seed`` and dealt round-robin to centres.

    Within each centre the last ceil(val_frac * n) dealt patients supply the
    validation records.  A patient never spans two centres or two roles.
    """
    if n_centres < 1:
        raise PartitionError("need at least one centre")
    by_patient = _records_by_patient(records)
    patients = sorted(by_patient)
    if len(patients) < holdout_patients + n_centres:
        raise PartitionError(
            f"{len(patients)} patients cannot cover {holdout_patients} holdout "
            f"+ {n_centres} centres"
        )
    test_patients = patients[len(patients) - holdout_patients :] if holdout_patients else []
    pool = patients[: len(patients) - holdout_patients]

    order = np.random.default_rng(seed).permutation(len(pool))
    dealt = [[] for _ in range(n_centres)]
    for k, j in enumerate(order):
        dealt[k % n_centres].append(pool[j])

    shards = []
    for cid, plist in enumerate(dealt):
        n_val = math.ceil(val_frac * len(plist))
        val_set = set(plist[len(plist) - n_val :]) if n_val else set()
        shard = CentreShard(centre_id=cid)
        for p in sorted(plist):
            target = shard.validation if p in val_set else shard.train
            target.extend(by_patient[p])
        shards.append(shard)

    test = [r for p in test_patients for r in by_patient[p]]
    return shards, test


def ablate(shard, fraction, seed=0):
    """Keep ceil(fraction * count) training records per class; validation
    records are untouched.  ceil keeps at least one record per class present
    before ablation (10 -> 5 at 50%, 10 -> 3 at 25%).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"ablation fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return CentreShard(shard.centre_id, list(shard.train), list(shard.validation))
    rng = np.random.default_rng(seed)
    kept = []
    for label in range(len(CLASS_NAMES)):
        recs = [r for r in shard.train if r.label == label]
        if not recs:
            continue
        n_keep = math.ceil(fraction * len(recs))
        picks = sorted(rng.permutation(len(recs))[:n_keep])
        kept.extend(recs[i] for i in picks)
    return CentreShard(shard.centre_id, kept, list(shard.validation))
