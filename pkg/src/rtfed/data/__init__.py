from .phantom import Phantom, generate_phantom, generate_cohort
from .features import (
    extract_tabular,
    extract_central_slice,
    extract_volume,
    linear_resize,
    standardize_tabular,
)
from .partition import StructureRecord, CentreShard, PartitionError, partition, ablate
from .rtfd import (
    RtfdError,
    MagicError,
    VersionError,
    TruncatedError,
    ChecksumError,
    FormatError,
    write_dataset,
    read_dataset,
)
from .dataset import build_synthetic_dataset, DESK_PROFILE, FULL_PROFILE

__all__ = [
    "Phantom",
    "generate_phantom",
    "generate_cohort",
    "extract_tabular",
    "extract_central_slice",
    "extract_volume",
    "linear_resize",
    "standardize_tabular",
    "StructureRecord",
    "CentreShard",
    "PartitionError",
    "partition",
    "ablate",
    "RtfdError",
    "MagicError",
    "VersionError",
    "TruncatedError",
    "ChecksumError",
    "FormatError",
    "write_dataset",
    "read_dataset",
    "build_synthetic_dataset",
    "DESK_PROFILE",
    "FULL_PROFILE",
]
