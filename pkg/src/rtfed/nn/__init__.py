from .layers import (
    BatchNorm,
    Concat,
    Conv2D,
    Conv3D,
    Dense,
    Dropout,
    Flatten,
    MaxPool,
    Relu,
    ShapeError,
    ConfigError,
)
from .loss import softmax_cross_entropy
from .network import Sequential
from .gradcheck import grad_check

__all__ = [
    "BatchNorm",
    "Concat",
    "Conv2D",
    "Conv3D",
    "Dense",
    "Dropout",
    "Flatten",
    "MaxPool",
    "Relu",
    "Sequential",
    "ShapeError",
    "ConfigError",
    "softmax_cross_entropy",
    "grad_check",
]
