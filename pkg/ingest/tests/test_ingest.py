"""Ingestion: DICOM parsing, rasterization geometry, name mapping, export."""

import numpy as np
import pytest

from dicom_fixtures import write_ct_volume, write_rtstruct
from rtfed_ingest import (
    NameMap,
    export_rtfd,
    ingest_study,
    load_ct_series,
    load_rtstruct,
    rasterize_roi,
)
from rtfed_ingest.dicom import DicomError, read_file


def square_contour(x0, x1, y0, y1, z):
    return [[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]]


@pytest.fixture()
def study(tmp_path):
    """8-slice CT with a bright 10x10x4 cube from (10,10,2) to (20,20,6)."""
    volume = np.full((8, 32, 32), -1000.0)
    volume[2:6, 10:20, 10:20] = 100.0
    ct_dir = tmp_path / "ct"
    write_ct_volume(ct_dir, volume, z0=0.0, dz=1.0)
    contours = [
        square_contour(9.5, 19.5, 9.5, 19.5, z) for z in (2.0, 3.0, 4.0, 5.0)
    ]
    rt_path = tmp_path / "rs.dcm"
    write_rtstruct(rt_path, [(1, "GTV-1", contours)])
    return ct_dir, rt_path, volume


class TestDicomParsing:
    def test_ct_series_geometry(self, study):
        ct_dir, _, volume = study
        grid = load_ct_series(ct_dir)
        assert grid.volume.shape == (8, 32, 32)
        np.testing.assert_allclose(grid.volume, volume)
        np.testing.assert_allclose(grid.spacing, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(grid.z_positions, np.arange(8.0))

    def test_rtstruct_rois(self, study):
        _, rt_path, _ = study
        rois = load_rtstruct(rt_path)
        assert len(rois) == 1
        assert rois[0].name == "GTV-1"
        assert len(rois[0].contours) == 4
        assert rois[0].contours[0].points.shape == (4, 3)

    def test_unsupported_transfer_syntax_rejected(self, tmp_path):
        from dicom_fixtures import element

        raw = (
            b"\x00" * 128
            + b"DICM"
            + element(0x0002, 0x0010, b"UI", "1.2.840.10008.1.2.4.70")
        )
        path = tmp_path / "jpeg.dcm"
        path.write_bytes(raw)
        with pytest.raises(DicomError, match="transfer syntax"):
            read_file(path)

    def test_headerless_dataset_parses(self, tmp_path):
        # raw dataset without preamble/meta, explicit VR assumed
        from dicom_fixtures import element

        path = tmp_path / "raw.dcm"
        path.write_bytes(element(0x0008, 0x0060, b"CS", "CT"))
        ds = read_file(path)
        assert ds.text((0x0008, 0x0060)) == "CT"


class TestRasterization:
    def test_square_contour_voxel_count(self, study):
        ct_dir, rt_path, _ = study
        grid = load_ct_series(ct_dir)
        roi = load_rtstruct(rt_path)[0]
        mask = rasterize_roi(roi, grid)
        # analytic: 10x10 pixels over 4 slices; tolerance +-1 row/col
        per_slice = mask.sum(axis=(1, 2))
        assert per_slice[2] > 0
        for k in (2, 3, 4, 5):
            assert 9 * 9 <= per_slice[k] <= 11 * 11
        assert per_slice[[0, 1, 6, 7]].sum() == 0

    def test_mask_matches_bright_region(self, study):
        ct_dir, rt_path, volume = study
        grid = load_ct_series(ct_dir)
        mask = rasterize_roi(load_rtstruct(rt_path)[0], grid)
        np.testing.assert_array_equal(mask, volume > -1000.0)

    def test_contour_off_grid_skipped(self, tmp_path):
        volume = np.full((4, 16, 16), 0.0)
        ct_dir = tmp_path / "ct"
        write_ct_volume(ct_dir, volume)
        rt_path = tmp_path / "rs.dcm"
        write_rtstruct(
            rt_path, [(1, "GTV-1", [square_contour(2, 6, 2, 6, 99.0)])]
        )
        grid = load_ct_series(ct_dir)
        mask = rasterize_roi(load_rtstruct(rt_path)[0], grid)
        assert not mask.any()

    def test_non_coplanar_contour_skipped(self, tmp_path, caplog):
        import logging

        volume = np.full((4, 16, 16), 0.0)
        ct_dir = tmp_path / "ct"
        write_ct_volume(ct_dir, volume)
        rt_path = tmp_path / "rs.dcm"
        tilted = [[2.0, 2.0, 1.0], [6.0, 2.0, 1.4], [6.0, 6.0, 1.8], [2.0, 6.0, 1.0]]
        write_rtstruct(rt_path, [(1, "GTV-1", [tilted])])
        grid = load_ct_series(ct_dir)
        with caplog.at_level(logging.WARNING, logger="rtfed_ingest"):
            mask = rasterize_roi(load_rtstruct(rt_path)[0], grid)
        assert not mask.any()
        assert any("non-coplanar" in m for m in caplog.messages)


class TestNameMap:
    def test_common_variants(self):
        nm = NameMap()
        assert nm.match("lt lung") == 3
        assert nm.match("Lung_R") == 4
        assert nm.match("SPINAL CORD") == 1
        assert nm.match("Esophagus") == 2
        assert nm.match("HEART") == 5
        assert nm.match("Lungs-Total") == 6
        assert nm.match("GTV-1") == 0
        assert nm.match("gtv") == 0

    def test_gtv2_and_unknown_skipped(self):
        nm = NameMap()
        assert nm.match("GTV-2") is None
        assert nm.match("PTV") is None
        assert nm.match("CouchSurface") is None

    def test_total_wins_over_single_lung(self):
        assert NameMap().match("lungs total") == 6

    def test_map_file_round_trip(self, tmp_path):
        import json

        path = tmp_path / "map.json"
        path.write_text(json.dumps([["^target$", 0], ["organ", 5]]))
        nm = NameMap.from_file(path)
        assert nm.match("Target") == 0
        assert nm.match("some ORGAN here") == 5
        assert nm.match("gtv") is None


class TestIngestStudy:
    def test_matched_rois_become_records(self, study):
        ct_dir, rt_path, _ = study
        records = ingest_study(
            ct_dir, rt_path, NameMap(), ((16, 16), (4, 16, 16)), patient_id="CASE1"
        )
        assert len(records) == 1
        rec = records[0]
        assert rec.patient_id == "CASE1"
        assert rec.label == 0
        assert rec.tabular.shape == (9,)
        assert rec.slice2d.shape == (16, 16)
        assert rec.volume3d.shape == (4, 16, 16)
        assert rec.slice2d.min() >= 0.0 and rec.slice2d.max() <= 1.0

    def test_unmatched_roi_skipped(self, study, caplog):
        import logging

        ct_dir, _, _ = study
        rt_path = ct_dir.parent / "rs_unmatched.dcm"
        write_rtstruct(
            rt_path,
            [
                (1, "GTV-2", [square_contour(9.5, 19.5, 9.5, 19.5, 3.0)]),
                (2, "GTV-1", [square_contour(9.5, 19.5, 9.5, 19.5, 3.0)]),
            ],
        )
        with caplog.at_level(logging.INFO, logger="rtfed_ingest"):
            records = ingest_study(ct_dir, rt_path, NameMap(), ((8, 8), (4, 8, 8)))
        assert [r.label for r in records] == [0]
        assert any("GTV-2" in m for m in caplog.messages)

    def test_tabular_geometry_of_cube(self, study):
        ct_dir, rt_path, _ = study
        rec = ingest_study(ct_dir, rt_path, NameMap(), ((16, 16), (4, 16, 16)))[0]
        cx, cy, cz, ex, ey, ez, count, volume, mean_hu = rec.tabular
        # cube spans voxels 10..19 in x/y and slices 2..5
        assert cx == pytest.approx(14.5)
        assert cy == pytest.approx(14.5)
        assert cz == pytest.approx(3.5)
        assert (ex, ey, ez) == (10.0, 10.0, 4.0)
        assert count == 400.0
        assert volume == pytest.approx(400.0)
        assert mean_hu == pytest.approx(100.0)


class TestExport:
    def test_rtfd_crc_and_layout(self, study, tmp_path):
        import struct
        import zlib

        ct_dir, rt_path, _ = study
        records = ingest_study(ct_dir, rt_path, NameMap(), ((8, 8), (4, 8, 8)))
        out = tmp_path / "case.rtfd"
        export_rtfd(records, out, manifest={"CASE": {"centre": None, "role": "train"}})
        raw = out.read_bytes()
        assert raw[:4] == b"RTFD"
        version, count, tab, sh, sw, vd, vh, vw, flags = struct.unpack_from(
            "<HI6IB", raw, 4
        )
        assert (version, count, tab) == (1, 1, 9)
        assert (sh, sw, vd, vh, vw) == (8, 8, 4, 8, 8)
        body = raw[4 + struct.calcsize("<HI6IB") : -4]
        (crc,) = struct.unpack("<I", raw[-4:])
        assert zlib.crc32(body) == crc
        assert (tmp_path / "case.rtfd.manifest.json").exists()
