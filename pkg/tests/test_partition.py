"""Partitioning and ablation bookkeeping, including the Table-1-scale splits."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtfed.data import PartitionError, StructureRecord, ablate, partition
from rtfed.data.partition import CentreShard


def make_record(pid, label=0):
    return StructureRecord(
        patient_id=pid,
        label=label,
        tabular=np.zeros(9),
        slice2d=np.zeros((2, 2), dtype=np.float32),
        volume3d=np.zeros((2, 2, 2), dtype=np.float32),
    )


def cohort(n_patients, records_per_patient=2):
    records = []
    for i in range(n_patients):
        for k in range(records_per_patient):
            records.append(make_record(f"P{i:04d}", label=k % 7))
    return records


class TestPartition:
    def test_three_centres_of_422_patients(self):
        shards, test = partition(cohort(422), 3, holdout_patients=50, seed=0)
        counts = [len({r.patient_id for r in s.train} | {r.patient_id for r in s.validation}) for s in shards]
        assert counts == [124, 124, 124]
        assert len({r.patient_id for r in test}) == 50

    @pytest.mark.parametrize("n_centres,expected", [(5, 74), (7, 53)])
    def test_five_and_seven_centres_within_one(self, n_centres, expected):
        shards, _ = partition(cohort(422), n_centres, holdout_patients=50, seed=1)
        for s in shards:
            n = len({r.patient_id for r in s.train} | {r.patient_id for r in s.validation})
            assert abs(n - expected) <= 1

    def test_single_centre_no_validation(self):
        shards, test = partition(cohort(422), 1, holdout_patients=50, val_frac=0.0, seed=0)
        assert len(shards) == 1
        assert shards[0].validation == []
        assert len({r.patient_id for r in shards[0].train}) == 372
        assert len({r.patient_id for r in test}) == 50

    def test_patient_level_disjointness(self):
        records = cohort(60, records_per_patient=3)
        shards, test = partition(records, 4, holdout_patients=10, seed=3)
        seen = {}
        for s in shards:
            for role, recs in (("train", s.train), ("val", s.validation)):
                for r in recs:
                    key = (s.centre_id, role)
                    assert seen.setdefault(r.patient_id, key) == key
        for r in test:
            assert r.patient_id not in seen

    def test_union_covers_everything(self):
        records = cohort(30)
        shards, test = partition(records, 3, holdout_patients=5, seed=2)
        total = sum(len(s.train) + len(s.validation) for s in shards) + len(test)
        assert total == len(records)

    def test_validation_fraction_is_ceil(self):
        shards, _ = partition(cohort(20), 2, holdout_patients=0, val_frac=0.2, seed=0)
        for s in shards:  # 10 patients -> ceil(2.0) = 2 validation patients
            assert len({r.patient_id for r in s.validation}) == 2

    def test_too_few_patients_rejected(self):
        with pytest.raises(PartitionError):
            partition(cohort(10), 3, holdout_patients=9)

    def test_deterministic_in_seed(self):
        a, _ = partition(cohort(40), 3, holdout_patients=5, seed=9)
        b, _ = partition(cohort(40), 3, holdout_patients=5, seed=9)
        for sa, sb in zip(a, b):
            assert [r.patient_id for r in sa.train] == [r.patient_id for r in sb.train]

    def test_holdout_is_last_patients_by_id(self):
        _, test = partition(cohort(30), 2, holdout_patients=4, seed=5)
        assert {r.patient_id for r in test} == {f"P{i:04d}" for i in range(26, 30)}


class TestAblate:
    def shard_with_class_counts(self, counts):
        train = []
        for label, n in counts.items():
            train.extend(make_record(f"P{label}{i:03d}", label) for i in range(n))
        return CentreShard(0, train, [make_record("PVAL", 0)])

    def test_subsample_counts_ten_to_five_to_three(self):
        shard = self.shard_with_class_counts({0: 10})
        assert ablate(shard, 0.5, seed=1).n_train() == 5
        assert ablate(shard, 0.25, seed=1).n_train() == 3

    def test_fraction_one_unchanged(self):
        shard = self.shard_with_class_counts({0: 10, 3: 7})
        out = ablate(shard, 1.0, seed=0)
        assert [r.patient_id for r in out.train] == [r.patient_id for r in shard.train]

    def test_validation_untouched(self):
        shard = self.shard_with_class_counts({0: 8, 1: 4})
        out = ablate(shard, 0.25, seed=0)
        assert [r.patient_id for r in out.validation] == ["PVAL"]

    def test_every_present_class_survives(self):
        shard = self.shard_with_class_counts({i: max(1, i) for i in range(7)})
        out = ablate(shard, 0.25, seed=4)
        before = {r.label for r in shard.train}
        after = {r.label for r in out.train}
        assert before == after

    def test_invalid_fraction(self):
        shard = self.shard_with_class_counts({0: 3})
        with pytest.raises(ValueError):
            ablate(shard, 0.0)
        with pytest.raises(ValueError):
            ablate(shard, 1.5)

    @settings(max_examples=30, deadline=None)
    @given(
        counts=st.dictionaries(
            st.integers(0, 6), st.integers(1, 20), min_size=1, max_size=7
        ),
        fraction=st.sampled_from([0.25, 0.5, 1.0]),
        seed=st.integers(0, 100),
    )
    def test_kept_counts_are_ceil(self, counts, fraction, seed):
        import math

        shard = self.shard_with_class_counts(counts)
        out = ablate(shard, fraction, seed=seed)
        for label, n in counts.items():
            kept = sum(1 for r in out.train if r.label == label)
            assert kept == math.ceil(fraction * n)
