"""RTFD: the portable binary dataset format.

Layout (all integers little-endian):

    magic   4 bytes  b"RTFD"
    version u16      1
    count   u32      number of records
    dims    6 x u32  tabular length, slice H, W, volume D, H, W
    flags   u8       reserved, 0
    records          per record:
                       patient_id  u16 length + UTF-8 bytes
                       label       u8
                       tabular     9 x f64
                       slice       H*W x f32, row-major
                       volume      D*H*W x f32, row-major
    trailer u32      CRC32 over all record bytes

A sidecar JSON manifest at ``<path>.manifest.json`` maps patient_id ->
{"centre": int | null, "role": "train" | "validation" | "test"}.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .partition import StructureRecord

MAGIC = b"RTFD"
VERSION = 1

_HEADER = struct.Struct("<HI6IB")  # after magic


class RtfdError(Exception):
    """Base for dataset file errors."""


class MagicError(RtfdError):
    pass


class VersionError(RtfdError):
    pass


class TruncatedError(RtfdError):
    pass


class ChecksumError(RtfdError):
    pass


class FormatError(RtfdError):
    pass


def manifest_path(path):
    return Path(str(path) + ".manifest.json")


def _record_dims(record):
    return (
        record.tabular.shape[0],
        record.slice2d.shape[0],
        record.slice2d.shape[1],
        record.volume3d.shape[0],
        record.volume3d.shape[1],
        record.volume3d.shape[2],
    )


def write_dataset(path, records, manifest=None):
    """Write records (and the optional manifest sidecar) to ``path``."""
    if not records:
        raise FormatError("refusing to write an empty dataset")
    dims = _record_dims(records[0])
    if dims[0] != 9:
        raise FormatError(f"tabular feature length must be 9, got {dims[0]}")
    chunks = []
    for r in records:
        if _record_dims(r) != dims:
            raise FormatError(
                f"record dims {_record_dims(r)} differ from dataset dims {dims}"
            )
        if not 0 <= r.label < 256:
            raise FormatError(f"label {r.label} does not fit u8")
        pid = r.patient_id.encode("utf-8")
        chunks.append(struct.pack("<H", len(pid)))
        chunks.append(pid)
        chunks.append(struct.pack("<B", r.label))
        chunks.append(np.asarray(r.tabular, dtype="<f8").tobytes())
        chunks.append(np.asarray(r.slice2d, dtype="<f4").tobytes())
        chunks.append(np.asarray(r.volume3d, dtype="<f4").tobytes())
    body = b"".join(chunks)
    header = MAGIC + _HEADER.pack(VERSION, len(records), *dims, 0)
    Path(path).write_bytes(header + body + struct.pack("<I", zlib.crc32(body)))
    if manifest is not None:
        manifest_path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True))


def read_dataset(path):
    """Read records and the manifest (or None) back; bit-exact round trip."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedError("file shorter than the magic")
    if raw[:4] != MAGIC:
        raise MagicError(f"bad magic {raw[:4]!r}")
    if len(raw) < 4 + _HEADER.size + 4:
        raise TruncatedError("file shorter than header plus checksum")
    version, count, *dims_and_flags = _HEADER.unpack_from(raw, 4)
    if version != VERSION:
        raise VersionError(f"unsupported version {version}")
    tab, sh, sw, vd, vh, vw = dims_and_flags[:6]
    body = raw[4 + _HEADER.size : -4]
    (crc_stored,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc_stored:
        raise ChecksumError("record payload failed CRC32 check")

    records = []
    off = 0
    slice_bytes = sh * sw * 4
    volume_bytes = vd * vh * vw * 4
    for _ in range(count):
        try:
            (pid_len,) = struct.unpack_from("<H", body, off)
            off += 2
            pid = body[off : off + pid_len].decode("utf-8")
            off += pid_len
            label = body[off]
            off += 1
            end = off + tab * 8 + slice_bytes + volume_bytes
            if end > len(body):
                raise struct.error("record extends past payload")
            tabular = np.frombuffer(body, dtype="<f8", count=tab, offset=off).copy()
            off += tab * 8
            sl = (
                np.frombuffer(body, dtype="<f4", count=sh * sw, offset=off)
                .reshape(sh, sw)
                .copy()
            )
            off += slice_bytes
            vol = (
                np.frombuffer(body, dtype="<f4", count=vd * vh * vw, offset=off)
                .reshape(vd, vh, vw)
                .copy()
            )
            off += volume_bytes
        except (struct.error, IndexError) as exc:
            raise TruncatedError(f"record payload truncated: {exc}") from exc
        records.append(
            StructureRecord(
                patient_id=pid, label=label, tabular=tabular, slice2d=sl, volume3d=vol
            )
        )
    if off != len(body):
        raise FormatError(f"{len(body) - off} trailing bytes after last record")

    manifest = None
    mpath = manifest_path(path)
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
    return records, manifest


def build_manifest(shards, test):
    """Patient -> {centre, role} mapping from a partition result."""
    manifest = {}
    for shard in shards:
        for r in shard.train:
            manifest[r.patient_id] = {"centre": shard.centre_id, "role": "train"}
        for r in shard.validation:
            manifest[r.patient_id] = {"centre": shard.centre_id, "role": "validation"}
    for r in test:
        manifest[r.patient_id] = {"centre": None, "role": "test"}
    return manifest
