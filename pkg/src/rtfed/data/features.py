"""Feature extraction: tabular descriptors, central slice, resized volume.

Voxel values are clipped to the HU window [-1000, 1000] and mapped linearly
to [0, 1]; voxels outside a structure's mask are set to the lower bound so
the contour shape stays visible after masking.
"""

from __future__ import annotations

import numpy as np

HU_WINDOW = (-1000.0, 1000.0)

N_TABULAR = 9


def extract_tabular(mask, ct, voxel_spacing):
    """Nine positional/size descriptors of a masked structure.

    Order: centroid x,y,z (mm from the grid origin), bounding-box extents
    x,y,z (mm), voxel count, physical volume (mm^3), mean HU inside the mask.
    """
    if not mask.any():
        raise ValueError("empty mask")
    sz, sy, sx = voxel_spacing
    idx = np.argwhere(mask)  # (n, 3) in z, y, x
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
    # half-pixel-centre sampling, clamped at the borders
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
    """Separable linear interpolation to ``out_shape``; identity is exact."""
    if arr.ndim != len(out_shape):
        raise ValueError(f"rank mismatch: {arr.shape} -> {out_shape}")
    out = np.asarray(arr, dtype=np.float64)
    for axis, n_out in enumerate(out_shape):
        if out.shape[axis] != n_out:
            out = _resize_axis(out, axis, n_out)
    return out


def extract_central_slice(mask, ct, out_hw):
    """The axial slice with the most contoured pixels, masked and resized.

    Ties go to the lowest slice index.
    """
    if not mask.any():
        raise ValueError("empty mask")
    counts = mask.sum(axis=(1, 2))
    k = int(counts.argmax())
    sl = _mask_and_scale(ct[k], mask[k])
    return linear_resize(sl, out_hw).astype(np.float32)


def extract_volume(mask, ct, out_dhw):
    """The whole masked volume, clipped, scaled to [0,1], and resized."""
    if not mask.any():
        raise ValueError("empty mask")
    vol = _mask_and_scale(ct, mask)
    return linear_resize(vol, out_dhw).astype(np.float32)


def standardize_tabular(records, fit_patient_ids):
    """Zero-mean/unit-variance tabular features, fit on the given patients only.

    Transforms every record in place; returns the (mean, std) used so other
    cohorts can be mapped into the same space.  Test-set records must not be
    part of ``fit_patient_ids``.
    """
    fit = np.stack([r.tabular for r in records if r.patient_id in fit_patient_ids])
    mean = fit.mean(axis=0)
    std = fit.std(axis=0)
    std[std == 0.0] = 1.0
    for r in records:
        r.tabular = (r.tabular - mean) / std
    return mean, std
