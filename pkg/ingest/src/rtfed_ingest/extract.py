"""CT series loading, contour rasterization, and feature extraction.

Extraction numerics (HU window, scaling, resize grid convention, tabular
descriptor definitions) deliberately match the training engine's ones, so a
structure expressed as DICOM and as in-memory arrays yields the same record.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dicom
from .dicom import DicomError

log = logging.getLogger("rtfed_ingest")

HU_WINDOW = (-1000.0, 1000.0)


@dataclass
class CtGrid:
    volume: np.ndarray  # (D, H, W) float32 HU
    origin: np.ndarray  # patient-space (x, y, z) of voxel (0, 0, 0)
    spacing: np.ndarray  # (x, y, z) mm
    z_positions: np.ndarray  # per-slice patient z


@dataclass
class Contour:
    points: np.ndarray  # (n, 3) patient mm
    geometry: str


@dataclass
class Roi:
    number: int
    name: str
    contours: list


def load_ct_series(ct_dir):
    """Read every CT file in a directory into a z-sorted voxel grid."""
    slices = []
    for path in sorted(Path(ct_dir).iterdir()):
        if not path.is_file():
            continue
        try:
            ds = dicom.read_file(path)
        except DicomError as exc:
            log.warning("skipping %s: %s", path.name, exc)
            continue
        if ds.text(dicom.MODALITY, "CT") not in ("CT",):
            continue
        slices.append(ds)
    if not slices:
        raise DicomError(f"no CT slices found in {ct_dir}")

    first = slices[0]
    rows = first.us(dicom.ROWS)
    cols = first.us(dicom.COLUMNS)
    orientation = first.floats(dicom.IMAGE_ORIENTATION) or [1, 0, 0, 0, 1, 0]
    if not np.allclose(orientation, [1, 0, 0, 0, 1, 0], atol=1e-3):
        raise DicomError(f"only axial identity orientation supported, got {orientation}")
    ps = first.floats(dicom.PIXEL_SPACING)  # (row spacing, column spacing)
    if len(ps) != 2:
        raise DicomError("CT slice lacks PixelSpacing")

    slices.sort(key=lambda ds: ds.floats(dicom.IMAGE_POSITION)[2])
    z_positions = np.array([ds.floats(dicom.IMAGE_POSITION)[2] for ds in slices])
    origin_xy = slices[0].floats(dicom.IMAGE_POSITION)[:2]

    volume = np.empty((len(slices), rows, cols), dtype=np.float32)
    for i, ds in enumerate(slices):
        if ds.us(dicom.ROWS) != rows or ds.us(dicom.COLUMNS) != cols:
            raise DicomError("CT slices disagree on matrix size")
        bits = ds.us(dicom.BITS_ALLOCATED, 16)
        if bits != 16:
            raise DicomError(f"only 16-bit CT supported, got {bits}")
        signed = ds.us(dicom.PIXEL_REPRESENTATION, 0) == 1
        raw = np.frombuffer(ds[dicom.PIXEL_DATA], dtype="<i2" if signed else "<u2")
        if raw.size != rows * cols:
            raise DicomError("PixelData length does not match Rows*Columns")
        slope = (ds.floats(dicom.RESCALE_SLOPE) or [1.0])[0]
        intercept = (ds.floats(dicom.RESCALE_INTERCEPT) or [0.0])[0]
        volume[i] = (raw.reshape(rows, cols) * slope + intercept).astype(np.float32)

    dz = float(np.diff(z_positions).mean()) if len(slices) > 1 else 1.0
    spacing = np.array([ps[1], ps[0], dz])  # (x, y, z)
    origin = np.array([origin_xy[0], origin_xy[1], z_positions[0]])
    return CtGrid(volume=volume, origin=origin, spacing=spacing, z_positions=z_positions)


def load_rtstruct(path):
    """ROIs with their raw contours from an RT-STRUCT file."""
    ds = dicom.read_file(path)
    names = {}
    for item in ds.get(dicom.STRUCTURE_SET_ROI_SEQ, []):
        number = item.ints(dicom.ROI_NUMBER)
        if number:
            names[number[0]] = item.text(dicom.ROI_NAME, f"ROI-{number[0]}")
    rois = []
    for item in ds.get(dicom.ROI_CONTOUR_SEQ, []):
        ref = item.ints(dicom.REF_ROI_NUMBER)
        number = ref[0] if ref else -1
        contours = []
        for c in item.get(dicom.CONTOUR_SEQ, []):
            data = c.floats(dicom.CONTOUR_DATA)
            if len(data) < 9 or len(data) % 3:
                continue
            contours.append(
                Contour(
                    points=np.asarray(data, dtype=np.float64).reshape(-1, 3),
                    geometry=c.text(dicom.CONTOUR_GEOMETRY, "CLOSED_PLANAR"),
                )
            )
        rois.append(Roi(number=number, name=names.get(number, f"ROI-{number}"), contours=contours))
    return rois


def _fill_polygon(mask_slice, poly_rc):
    """Even-odd scanline fill of one closed polygon given (row, col) vertices."""
    rows, cols = mask_slice.shape
    ys = poly_rc[:, 0]
    xs = poly_rc[:, 1]
    r_lo = max(int(np.floor(ys.min())), 0)
    r_hi = min(int(np.ceil(ys.max())), rows - 1)
    n = len(poly_rc)
    for r in range(r_lo, r_hi + 1):
        yc = r  # sample at the voxel-centre row coordinate
        crossings = []
        for i in range(n):
            y0, x0 = ys[i], xs[i]
            y1, x1 = ys[(i + 1) % n], xs[(i + 1) % n]
            if (y0 <= yc) != (y1 <= yc):
                t = (yc - y0) / (y1 - y0)
                crossings.append(x0 + t * (x1 - x0))
        crossings.sort()
        for a, b in zip(crossings[::2], crossings[1::2]):
            c0 = max(int(np.ceil(a)), 0)
            c1 = min(int(np.floor(b)), cols - 1)
            if c1 >= c0:
                mask_slice[r, c0 : c1 + 1] = True


def rasterize_roi(roi, grid: CtGrid):
    """Voxel mask of a ROI on the CT grid; skip reasons are logged.

    Contours are filled with even-odd parity on their referenced slice; no
    interpolation happens between slices.
    """
    mask = np.zeros(grid.volume.shape, dtype=bool)
    dz = grid.spacing[2]
    for contour in roi.contours:
        if contour.geometry != "CLOSED_PLANAR":
            log.warning("%s: skipping %s contour", roi.name, contour.geometry)
            continue
        z_values = contour.points[:, 2]
        if np.ptp(z_values) > 1e-3 * max(dz, 1.0):
            log.warning("%s: skipping non-coplanar contour", roi.name)
            continue
        offsets = np.abs(grid.z_positions - z_values[0])
        k = int(offsets.argmin())
        if offsets[k] > 0.5 * dz + 1e-6:
            log.warning(
                "%s: contour at z=%.2f has no CT slice (nearest %.2f)",
                roi.name,
                z_values[0],
                grid.z_positions[k],
            )
            continue
        cols = (contour.points[:, 0] - grid.origin[0]) / grid.spacing[0]
        rows = (contour.points[:, 1] - grid.origin[1]) / grid.spacing[1]
        _fill_polygon(mask[k], np.column_stack([rows, cols]))
    return mask


# -- feature extraction (matches the training engine's conventions) ---------


def extract_tabular(mask, ct, spacing_zyx):
    if not mask.any():
        raise ValueError("empty mask")
    sz, sy, sx = spacing_zyx
    idx = np.argwhere(mask)
    cz, cy, cx = idx.mean(axis=0) * (sz, sy, sx)
    ez, ey, ex = (idx.max(axis=0) - idx.min(axis=0) + 1) * (sz, sy, sx)
    count = float(idx.shape[0])
    volume = count * sz * sy * sx
    mean_hu = float(ct[mask].mean())
    return np.array([cx, cy, cz, ex, ey, ez, count, volume, mean_hu], dtype=np.float64)


def _mask_and_scale(values, mask):
    lo, hi = HU_WINDOW
    out = np.where(mask, values, lo)
    out = np.clip(out, lo, hi)
    return ((out - lo) / (hi - lo)).astype(np.float64)


def _resize_axis(arr, axis, n_out):
    n_in = arr.shape[axis]
    coords = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    coords = np.clip(coords, 0.0, n_in - 1.0)
    i0 = np.floor(coords).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = coords - i0
    shape = [1] * arr.ndim
    shape[axis] = n_out
    frac = frac.reshape(shape)
    return np.take(arr, i0, axis=axis) * (1.0 - frac) + np.take(arr, i1, axis=axis) * frac


def linear_resize(arr, out_shape):
    out = np.asarray(arr, dtype=np.float64)
    for axis, n_out in enumerate(out_shape):
        if out.shape[axis] != n_out:
            out = _resize_axis(out, axis, n_out)
    return out


def extract_central_slice(mask, ct, out_hw):
    if not mask.any():
        raise ValueError("empty mask")
    counts = mask.sum(axis=(1, 2))
    k = int(counts.argmax())
    return linear_resize(_mask_and_scale(ct[k], mask[k]), out_hw).astype(np.float32)


def extract_volume(mask, ct, out_dhw):
    if not mask.any():
        raise ValueError("empty mask")
    return linear_resize(_mask_and_scale(ct, mask), out_dhw).astype(np.float32)
