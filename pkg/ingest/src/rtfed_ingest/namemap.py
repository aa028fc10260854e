"""ROI-name matching: ordered case-insensitive patterns -> class index.

The first matching pattern wins; unmatched names are skipped (and logged by
the caller).  The default map covers the frequent spelling variants seen in
clinical structure sets; site-specific variants belong in an editable JSON
map file rather than code.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

CLASS_NAMES = (
    "GTV-1",
    "Spinal-Cord",
    "Esophagus",
    "Lung-Left",
    "Lung-Right",
    "Heart",
    "Lungs-Total",
)

# order matters: "lungs total" must win before the single-lung patterns
DEFAULT_PATTERNS = [
    (r"lungs?[-_ ]?total|total[-_ ]?lungs?|both[-_ ]?lungs?", 6),
    (r"\b(l|lt|left)[-_ ]?lung\b|lung[-_ ]?(l|lt|left)\b", 3),
    (r"\b(r|rt|right)[-_ ]?lung\b|lung[-_ ]?(r|rt|right)\b", 4),
    (r"heart|cardiac", 5),
    (r"eso|oesoph", 2),
    (r"spinal|cord|\bsc\b", 1),
    (r"^gtv[-_ ]?1?$", 0),
]


class NameMap:
    def __init__(self, patterns=None):
        entries = patterns if patterns is not None else DEFAULT_PATTERNS
        self.entries = [
            (re.compile(pattern, re.IGNORECASE), int(index))
            for pattern, index in entries
        ]
        for _, index in self.entries:
            if not 0 <= index < len(CLASS_NAMES):
                raise ValueError(f"class index {index} out of range")

    def match(self, roi_name):
        """Class index for a ROI name, or None when nothing matches."""
        text = roi_name.strip()
        for regex, index in self.entries:
            if regex.search(text):
                return index
        return None

    @classmethod
    def from_file(cls, path):
        """JSON list of [pattern, class_index] pairs, in priority order."""
        data = json.loads(Path(path).read_text())
        return cls([(str(p), int(i)) for p, i in data])
