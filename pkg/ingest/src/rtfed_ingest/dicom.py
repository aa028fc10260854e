"""Minimal DICOM reader for uncompressed little-endian CT and RT-STRUCT files.

Supports explicit and implicit VR little endian, nested sequences with both
defined and undefined lengths, and the handful of tags this tool needs.
Compressed transfer syntaxes are out of scope and raise ``DicomError``.
"""

from __future__ import annotations

import struct
from pathlib import Path

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
IMPLICIT_VR_LE = "1.2.840.10008.1.2"

# tags
TRANSFER_SYNTAX = (0x0002, 0x0010)
MODALITY = (0x0008, 0x0060)
IMAGE_POSITION = (0x0020, 0x0032)
IMAGE_ORIENTATION = (0x0020, 0x0037)
INSTANCE_NUMBER = (0x0020, 0x0013)
ROWS = (0x0028, 0x0010)
COLUMNS = (0x0028, 0x0011)
PIXEL_SPACING = (0x0028, 0x0030)
BITS_ALLOCATED = (0x0028, 0x0100)
PIXEL_REPRESENTATION = (0x0028, 0x0103)
RESCALE_INTERCEPT = (0x0028, 0x1052)
RESCALE_SLOPE = (0x0028, 0x1053)
PIXEL_DATA = (0x7FE0, 0x0010)
STRUCTURE_SET_ROI_SEQ = (0x3006, 0x0020)
ROI_NUMBER = (0x3006, 0x0022)
ROI_NAME = (0x3006, 0x0026)
ROI_CONTOUR_SEQ = (0x3006, 0x0039)
CONTOUR_SEQ = (0x3006, 0x0040)
CONTOUR_GEOMETRY = (0x3006, 0x0042)
CONTOUR_DATA = (0x3006, 0x0050)
REF_ROI_NUMBER = (0x3006, 0x0084)

_ITEM = (0xFFFE, 0xE000)
_ITEM_DELIM = (0xFFFE, 0xE00D)
_SEQ_DELIM = (0xFFFE, 0xE0DD)
_UNDEFINED = 0xFFFFFFFF

_LONG_VRS = {b"OB", b"OW", b"OF", b"OD", b"OL", b"SQ", b"UC", b"UR", b"UT", b"UN"}

# implicit-VR files carry no VR bytes; sequences must be recognized by tag
_SQ_TAGS = {STRUCTURE_SET_ROI_SEQ, ROI_CONTOUR_SEQ, CONTOUR_SEQ}


class DicomError(Exception):
    pass


class Dataset(dict):
    """Tag -> raw bytes, or a list of child Datasets for sequences."""

    def text(self, tag, default=None):
        raw = self.get(tag)
        if raw is None or isinstance(raw, list):
            return default
        return raw.decode("ascii", errors="replace").strip("\x00 ")

    def ints(self, tag):
        txt = self.text(tag)
        return [int(float(v)) for v in txt.split("\\")] if txt else []

    def floats(self, tag):
        txt = self.text(tag)
        return [float(v) for v in txt.split("\\")] if txt else []

    def us(self, tag, default=None):
        raw = self.get(tag)
        if raw is None:
            return default
        return struct.unpack("<H", raw[:2])[0]


def _parse_one(buf, pos, explicit):
    """Parse one element; returns (tag, value, new_pos).

    Delimiter pseudo-elements come back as (tag, None, new_pos).
    """
    if pos + 8 > len(buf):
        raise DicomError("truncated element header")
    group, elem = struct.unpack_from("<HH", buf, pos)
    tag = (group, elem)
    pos += 4
    if group == 0xFFFE:  # item/delimiter headers never carry a VR
        (length,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        if tag in (_ITEM_DELIM, _SEQ_DELIM):
            return tag, None, pos
        raise DicomError(f"unexpected bare item tag at offset {pos - 8}")
    if explicit:
        vr = buf[pos : pos + 2]
        pos += 2
        if vr in _LONG_VRS:
            pos += 2
            (length,) = struct.unpack_from("<I", buf, pos)
            pos += 4
        else:
            (length,) = struct.unpack_from("<H", buf, pos)
            pos += 2
        is_seq = vr == b"SQ"
    else:
        (length,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        is_seq = tag in _SQ_TAGS
    if is_seq or length == _UNDEFINED:
        items, pos = _parse_sequence(buf, pos, length, explicit)
        return tag, items, pos
    if pos + length > len(buf):
        raise DicomError(f"element {tag} runs past end of file")
    return tag, buf[pos : pos + length], pos + length


def _parse_sequence(buf, pos, length, explicit):
    items = []
    end = len(buf) if length == _UNDEFINED else pos + length
    while pos < end:
        group, elem = struct.unpack_from("<HH", buf, pos)
        (item_len,) = struct.unpack_from("<I", buf, pos + 4)
        pos += 8
        if (group, elem) == _SEQ_DELIM:
            return items, pos
        if (group, elem) != _ITEM:
            raise DicomError(f"expected sequence item, found {(group, elem)}")
        item_end = len(buf) if item_len == _UNDEFINED else pos + item_len
        child = Dataset()
        while pos < item_end:
            tag, value, pos = _parse_one(buf, pos, explicit)
            if tag == _ITEM_DELIM:
                break
            if tag == _SEQ_DELIM:
                raise DicomError("sequence delimiter inside an item")
            child[tag] = value
        items.append(child)
        if item_len != _UNDEFINED:
            pos = item_end
    return items, pos


def read_file(path):
    """Parse one DICOM file into a Dataset."""
    buf = Path(path).read_bytes()
    pos = 0
    explicit = True
    if len(buf) > 132 and buf[128:132] == b"DICM":
        pos = 132
        meta = Dataset()
        # file meta group (0002) is always explicit VR little endian and
        # announces the transfer syntax of the remaining dataset
        while pos + 8 <= len(buf) and struct.unpack_from("<H", buf, pos)[0] == 0x0002:
            tag, value, pos = _parse_one(buf, pos, explicit=True)
            meta[tag] = value
        syntax = meta.text(TRANSFER_SYNTAX, EXPLICIT_VR_LE)
        if syntax == IMPLICIT_VR_LE:
            explicit = False
        elif syntax != EXPLICIT_VR_LE:
            raise DicomError(f"unsupported transfer syntax {syntax!r}")
    ds = Dataset()
    while pos + 8 <= len(buf):
        tag, value, pos = _parse_one(buf, pos, explicit)
        if tag in (_ITEM_DELIM, _SEQ_DELIM):
            raise DicomError("stray delimiter outside a sequence")
        ds[tag] = value
    return ds
