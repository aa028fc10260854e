"""RTFD writer: the training engine's portable binary dataset format.

Layout (little-endian): magic "RTFD", version u16=1, record count u32,
six u32 dims (tabular length, slice H, W, volume D, H, W), flags u8; per
record: patient_id (u16 length + UTF-8), label u8, 9 x f64 tabular, f32
slice, f32 volume, both row-major; trailer u32 CRC32 over the record bytes.
A JSON manifest sidecar ``<path>.manifest.json`` carries split assignments.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RTFD"
VERSION = 1
_HEADER = struct.Struct("<HI6IB")


@dataclass
class IngestRecord:
    patient_id: str
    label: int
    tabular: np.ndarray
    slice2d: np.ndarray
    volume3d: np.ndarray


def export_rtfd(records, path, manifest=None):
    if not records:
        raise ValueError("no records to export")
    first = records[0]
    dims = (
        first.tabular.shape[0],
        *first.slice2d.shape,
        *first.volume3d.shape,
    )
    chunks = []
    for r in records:
        pid = r.patient_id.encode("utf-8")
        chunks.append(struct.pack("<H", len(pid)))
        chunks.append(pid)
        chunks.append(struct.pack("<B", r.label))
        chunks.append(np.asarray(r.tabular, dtype="<f8").tobytes())
        chunks.append(np.asarray(r.slice2d, dtype="<f4").tobytes())
        chunks.append(np.asarray(r.volume3d, dtype="<f4").tobytes())
    body = b"".join(chunks)
    out = Path(path)
    out.write_bytes(
        MAGIC
        + _HEADER.pack(VERSION, len(records), *dims, 0)
        + body
        + struct.pack("<I", zlib.crc32(body))
    )
    if manifest is not None:
        Path(str(path) + ".manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True)
        )
    return out
