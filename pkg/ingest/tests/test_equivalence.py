"""Cross-component checks against the training engine.

The same synthetic volume is expressed once as in-memory arrays (the
engine's own extraction path) and once as DICOM fixtures (this tool); the
resulting records must agree, and exported RTFD files must load and train
in the engine.
"""

import numpy as np
import pytest

from dicom_fixtures import write_ct_volume, write_rtstruct
from rtfed_ingest import NameMap, export_rtfd, ingest_study

rtfed_features = pytest.importorskip("rtfed.data.features")
rtfed_data = pytest.importorskip("rtfed.data")
rtfed_models = pytest.importorskip("rtfed.models")


@pytest.fixture()
def shared_volume(tmp_path):
    """A cube structure on a 12x24x24 grid, as arrays and as DICOM files."""
    ct = np.full((12, 24, 24), -1000.0)
    ct[3:9, 6:18, 8:16] = 150.0
    mask = np.zeros_like(ct, dtype=bool)
    mask[3:9, 6:18, 8:16] = True

    ct_dir = tmp_path / "ct"
    write_ct_volume(ct_dir, ct, z0=0.0, dz=1.0)
    rt_path = tmp_path / "rs.dcm"
    contours = [
        [[7.5, 5.5, z], [15.5, 5.5, z], [15.5, 17.5, z], [7.5, 17.5, z]]
        for z in range(3, 9)
    ]
    write_rtstruct(rt_path, [(1, "GTV-1", contours)])
    return ct, mask, ct_dir, rt_path


def test_tabular_features_agree(shared_volume):
    ct, mask, ct_dir, rt_path = shared_volume
    engine = rtfed_features.extract_tabular(mask, ct, (1.0, 1.0, 1.0))
    rec = ingest_study(ct_dir, rt_path, NameMap(), ((16, 16), (8, 16, 16)))[0]
    np.testing.assert_allclose(rec.tabular, engine, rtol=1e-6)


def test_slice_and_volume_tensors_agree(shared_volume):
    ct, mask, ct_dir, rt_path = shared_volume
    engine_slice = rtfed_features.extract_central_slice(mask, ct, (16, 16))
    engine_volume = rtfed_features.extract_volume(mask, ct, (8, 16, 16))
    rec = ingest_study(ct_dir, rt_path, NameMap(), ((16, 16), (8, 16, 16)))[0]
    np.testing.assert_allclose(rec.slice2d, engine_slice, atol=1e-4)
    np.testing.assert_allclose(rec.volume3d, engine_volume, atol=1e-4)


def test_exported_rtfd_loads_in_engine(shared_volume, tmp_path):
    _, _, ct_dir, rt_path = shared_volume
    records = ingest_study(
        ct_dir, rt_path, NameMap(), ((16, 16), (8, 16, 16)), patient_id="CASE0"
    )
    out = tmp_path / "case.rtfd"
    export_rtfd(records, out, manifest={"CASE0": {"centre": 0, "role": "train"}})

    loaded, manifest = rtfed_data.read_dataset(out)
    assert manifest == {"CASE0": {"centre": 0, "role": "train"}}
    assert len(loaded) == len(records)
    np.testing.assert_array_equal(loaded[0].tabular, records[0].tabular)
    np.testing.assert_array_equal(loaded[0].volume3d, records[0].volume3d)
    assert loaded[0].patient_id == "CASE0"


def test_engine_trains_on_ingested_records(shared_volume, tmp_path):
    _, _, ct_dir, rt_path = shared_volume
    rt_multi = tmp_path / "rs_multi.dcm"
    # two structures so the training batch has class variety
    write_rtstruct(
        rt_multi,
        [
            (1, "GTV-1", [[[7.5, 5.5, z], [15.5, 5.5, z], [15.5, 17.5, z], [7.5, 17.5, z]] for z in range(3, 9)]),
            (2, "Heart", [[[4.5, 4.5, z], [12.5, 4.5, z], [12.5, 12.5, z], [4.5, 12.5, z]] for z in range(4, 7)]),
        ],
    )
    records = ingest_study(ct_dir, rt_multi, NameMap(), ((16, 16), (8, 16, 16)))
    out = tmp_path / "multi.rtfd"
    export_rtfd(records, out)

    loaded, _ = rtfed_data.read_dataset(out)
    spec = rtfed_models.NetworkSpec(
        modalities=("tabular", "volume"), slice_hw=(16, 16), volume_dhw=(8, 16, 16)
    )
    weights = rtfed_models.build_network(spec, init_seed=0).get_weights()
    new_weights, loss = rtfed_models.train_local_epoch(weights, loaded, spec, 0)
    assert np.isfinite(loss)
    acc, _, n = rtfed_models.evaluate(new_weights, loaded, spec)
    assert n == len(records)
    assert 0.0 <= acc <= 1.0
