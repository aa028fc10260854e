"""Synthetic thoracic phantoms: a CT-like volume plus per-structure masks.

Axes are (z, y, x) = (axial slice, anterior->posterior, patient left->right
as seen on the grid), so the left lung sits at low x and the right lung at
high x.  Voxel values imitate Hounsfield units: air -1000, soft tissue ~40,
lung ~-700, with the tumour slightly denser than lung so intensity alone
carries class signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..models import CLASS_NAMES

HU_AIR = -1000.0
HU_BODY = 40.0
HU_LUNG = -700.0
HU_HEART = 45.0
HU_CORD = 35.0
HU_ESOPHAGUS = 0.0
HU_GTV = 50.0

# Per-class contouring rates: how often a clinician delineated each structure
# in a 422-patient lung cohort (counts out of 422).
INCLUSION_COUNTS = {
    "GTV-1": 421,
    "Spinal-Cord": 411,
    "Esophagus": 355,
    "Lung-Left": 312,
    "Lung-Right": 312,
    "Heart": 127,
    "Lungs-Total": 97,
}
COHORT_SIZE = 422

JITTER = 0.15  # relative size/position wobble per patient


@dataclass
class Phantom:
    patient_id: str
    ct: np.ndarray  # (D, H, W) float32, HU-like
    masks: dict  # class name -> bool array (D, H, W)
    spacing: tuple  # (z, y, x) mm


def _ellipsoid(grid_shape, center, semi):
    """Boolean ellipsoid; center and semi-axes in voxel units per axis."""
    d, h, w = grid_shape
    zz, yy, xx = np.ogrid[0:d, 0:h, 0:w]
    cz, cy, cx = center
    az, ay, ax = semi
    m = (
        ((zz - cz) / az) ** 2 + ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2
    ) <= 1.0
    if not m.any():  # degenerate on coarse grids: keep the nearest voxel
        m[int(round(cz)) % d, int(round(cy)) % h, int(round(cx)) % w] = True
    return m


def _tube(grid_shape, center_yx, radius_yx, z_range):
    """Axis-aligned tube along z between fractional z bounds."""
    d, h, w = grid_shape
    zz, yy, xx = np.ogrid[0:d, 0:h, 0:w]
    cy, cx = center_yx
    ry, rx = radius_yx
    m = (((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) <= 1.0
    z0, z1 = int(z_range[0] * d), int(z_range[1] * d)
    m = m & (zz >= z0) & (zz < max(z1, z0 + 1))
    if not m.any():
        m[(z0 + max(z1, z0 + 1)) // 2 % d, int(round(cy)) % h, int(round(cx)) % w] = True
    return m


def generate_phantom(patient_seed, patient_id="P0000", grid=(40, 96, 96), spacing=(3.0, 1.5, 1.5)):
    """Deterministic phantom for ``patient_seed``; see module docstring."""
    rng = np.random.default_rng(patient_seed)
    d, h, w = grid

    def jit(value):
        return value * (1.0 + JITTER * rng.uniform(-1.0, 1.0))

    # Everything below is anchored to the body ellipsoid frame with offset
    # and size fractions that sum below 1 even at full jitter, so every
    # structure stays inside the body (and the GTV inside its lung).
    bcz, bcy, bcx = 0.5 * d, jit(0.52) * h, 0.5 * w
    bsz, bsy, bsx = 0.60 * d, jit(0.38) * h, jit(0.44) * w

    lung_dx = jit(0.45) * bsx
    lung_dy = jit(0.12) * bsy
    lung_s = (jit(0.55) * bsz, jit(0.55) * bsy, jit(0.34) * bsx)
    lung_l_c = (bcz, bcy - lung_dy, bcx - lung_dx)
    lung_r_c = (bcz, bcy - lung_dy, bcx + lung_dx)

    heart_c = (bcz - jit(0.10) * bsz, bcy - jit(0.35) * bsy, bcx - jit(0.05) * bsx)
    heart_s = (jit(0.25) * bsz, jit(0.30) * bsy, jit(0.28) * bsx)

    # cord and esophagus are deliberately similar tubes whose posterior
    # offsets overlap at full jitter: telling them apart needs enough
    # training samples near the boundary, which is what the per-class
    # subsampling study degrades
    cord_yx = (bcy + jit(0.60) * bsy, bcx + jit(0.02) * bsx)
    cord_r = (jit(0.07) * bsy, jit(0.06) * bsx)

    eso_yx = (bcy + jit(0.48) * bsy, bcx - jit(0.03) * bsx)
    eso_r = (jit(0.065) * bsy, jit(0.055) * bsx)

    gtv_side_left = rng.random() < 0.5
    gtv_lung_c = lung_l_c if gtv_side_left else lung_r_c
    gtv_c = (
        gtv_lung_c[0] + 0.3 * lung_s[0] * rng.uniform(-1, 1),
        gtv_lung_c[1] + 0.3 * lung_s[1] * rng.uniform(-1, 1),
        gtv_lung_c[2] + 0.3 * lung_s[2] * rng.uniform(-1, 1),
    )
    gtv_r = jit(0.30) * min(lung_s)
    gtv_s = (gtv_r, gtv_r, gtv_r)

    body = _ellipsoid(grid, (bcz, bcy, bcx), (bsz, bsy, bsx))
    lung_l = _ellipsoid(grid, lung_l_c, lung_s) & body
    lung_r = _ellipsoid(grid, lung_r_c, lung_s) & body
    heart = _ellipsoid(grid, heart_c, heart_s) & body
    cord = _tube(grid, cord_yx, cord_r, (0.15, 0.85)) & body
    eso = _tube(grid, eso_yx, eso_r, (0.18, 0.82)) & body
    gtv = _ellipsoid(grid, gtv_c, gtv_s)
    for name, m in [("lung", lung_l), ("cord", cord), ("esophagus", eso)]:
        if not m.any():
            raise RuntimeError(f"degenerate phantom: empty {name} region")

    ct = np.full(grid, HU_AIR, dtype=np.float32)
    ct[body] = HU_BODY
    ct[lung_l] = HU_LUNG
    ct[lung_r] = HU_LUNG
    ct[heart] = HU_HEART
    ct[cord] = HU_CORD
    ct[eso] = HU_ESOPHAGUS
    ct[gtv] = HU_GTV

    geometry = {
        "GTV-1": gtv,
        "Spinal-Cord": cord,
        "Esophagus": eso,
        "Lung-Left": lung_l,
        "Lung-Right": lung_r,
        "Heart": heart,
        "Lungs-Total": lung_l | lung_r,
    }
    masks = {}
    for name in CLASS_NAMES:
        contoured = rng.random() < INCLUSION_COUNTS[name] / COHORT_SIZE
        if contoured:
            masks[name] = geometry[name]
    return Phantom(patient_id=patient_id, ct=ct, masks=masks, spacing=tuple(spacing))


def generate_cohort(n_patients, base_seed=0, grid=(40, 96, 96), spacing=(3.0, 1.5, 1.5)):
    """Yield ``n_patients`` phantoms with ids P0000.. in generation order."""
    for i in range(n_patients):
        yield generate_phantom(
            [base_seed, i], patient_id=f"P{i:04d}", grid=grid, spacing=spacing
        )
