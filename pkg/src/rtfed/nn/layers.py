"""Dense-tensor layers with hand-written forward and backward passes.

Every layer follows the same contract: ``forward(x, mode, rng)`` returns
``(out, cache)`` and ``backward(dout, cache)`` returns ``(dx, grads)`` where
``grads`` maps the layer's parameter names to gradient arrays.  Tensors are
plain numpy arrays in row-major layout; the training path runs in float32,
gradient checking in float64.  Forward passes are deterministic given
(parameters, input, rng state).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Input/parameter shapes disagree."""


class ConfigError(ValueError):
    """Layer hyperparameters are invalid for the given input."""


class Layer:
    """Base class: parameter/buffer containers plus naming."""

    def __init__(self, name):
        self.name = name
        self.params = {}
        self.buffers = {}

    def forward(self, x, mode="train", rng=None):
        raise NotImplementedError

    def backward(self, dout, cache):
        raise NotImplementedError


class Dense(Layer):
    """Fully connected layer: out = x @ w + b."""

    def __init__(self, name, in_dim, out_dim, dtype=np.float32):
        super().__init__(name)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.params["w"] = np.zeros((in_dim, out_dim), dtype=dtype)
        self.params["b"] = np.zeros(out_dim, dtype=dtype)

    def forward(self, x, mode="train", rng=None):
        if x.ndim != 2:
            raise ShapeError(f"dense input must be 2-d, got shape {x.shape}")
        w = self.params["w"]
        if x.shape[1] != w.shape[0]:
            raise ShapeError(
                f"dense shape mismatch: input {x.shape} vs weight {w.shape}"
            )
        out = x @ w + self.params["b"]
        return out, x

    def backward(self, dout, cache):
        x = cache
        dw = x.T @ dout
        db = dout.sum(axis=0)
        dx = dout @ self.params["w"].T
        return dx, {"w": dw, "b": db}


def _flip_kernel(w, spatial_ndim):
    """Swap in/out channel axes and reverse every spatial axis."""
    flipped = np.swapaxes(w, 0, 1)
    for ax in range(2, 2 + spatial_ndim):
        flipped = np.flip(flipped, axis=ax)
    return np.ascontiguousarray(flipped)


class _ConvNd(Layer):
    """Cross-correlation with kernel 3 per axis, stride 1, zero 'same' padding."""

    spatial_ndim = None

    def __init__(self, name, in_channels, out_channels, dtype=np.float32):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        k = (3,) * self.spatial_ndim
        self.params["w"] = np.zeros((out_channels, in_channels) + k, dtype=dtype)
        self.params["b"] = np.zeros(out_channels, dtype=dtype)

    def _correlate(self, x, w):
        # im2col: window the padded input, flatten patches, one big matmul.
        nd = self.spatial_ndim
        pad = [(0, 0), (0, 0)] + [(1, 1)] * nd
        xp = np.pad(x, pad)
        windows = sliding_window_view(xp, (3,) * nd, axis=tuple(range(2, 2 + nd)))
        # windows: (B, C, *spatial, *k) -> (B, *spatial, C, *k)
        order = (0,) + tuple(range(2, 2 + nd)) + (1,) + tuple(range(2 + nd, 2 + 2 * nd))
        cols = windows.transpose(order)
        b = x.shape[0]
        spatial = x.shape[2:]
        cols = cols.reshape(b * int(np.prod(spatial)), w[0].size)
        out = cols @ w.reshape(w.shape[0], -1).T
        out = out.reshape((b,) + spatial + (w.shape[0],))
        # back to channels-first
        return np.moveaxis(out, -1, 1), cols

    def forward(self, x, mode="train", rng=None):
        nd = self.spatial_ndim
        if x.ndim != 2 + nd:
            raise ShapeError(
                f"{type(self).__name__} expects {2 + nd}-d input, got shape {x.shape}"
            )
        if x.shape[1] != self.in_channels:
            raise ShapeError(
                f"channel mismatch: input has {x.shape[1]}, layer expects {self.in_channels}"
            )
        if min(x.shape[2:]) < 1:
            raise ShapeError(f"spatial dims must be >= 1, got {x.shape}")
        out, cols = self._correlate(x, self.params["w"])
        out += self.params["b"].reshape((1, -1) + (1,) * nd)
        return out, (x, cols)

    def backward(self, dout, cache):
        x, cols = cache
        nd = self.spatial_ndim
        w = self.params["w"]
        dout_mat = np.moveaxis(dout, 1, -1).reshape(-1, self.out_channels)
        dw = (dout_mat.T @ cols).reshape(w.shape)
        db = dout_mat.sum(axis=0)
        # dx is the same-padded correlation of dout with the flipped kernel.
        dx, _ = self._correlate(dout, _flip_kernel(w, nd))
        return dx, {"w": dw, "b": db}


class Conv2D(_ConvNd):
    spatial_ndim = 2


class Conv3D(_ConvNd):
    spatial_ndim = 3


class MaxPool(Layer):
    """Non-overlapping max pooling; backward routes gradient to the argmax.

    Ties are broken toward the lowest flat index inside each window so the
    backward pass is deterministic across runs.
    """

    def __init__(self, name, window):
        super().__init__(name)
        self.window = tuple(window)

    def forward(self, x, mode="train", rng=None):
        nd = len(self.window)
        if x.ndim != 2 + nd:
            raise ShapeError(
                f"maxpool window {self.window} expects {2 + nd}-d input, got {x.shape}"
            )
        spatial = x.shape[2:]
        for s, w in zip(spatial, self.window):
            if s % w != 0:
                raise ConfigError(
                    f"spatial dims {spatial} not divisible by pool window {self.window}"
                )
        b, c = x.shape[:2]
        blocked_shape = (b, c)
        for s, w in zip(spatial, self.window):
            blocked_shape += (s // w, w)
        blocked = x.reshape(blocked_shape)
        # bring all window axes to the back, preserving row-major flat order
        out_axes = (0, 1) + tuple(2 + 2 * i for i in range(nd))
        win_axes = tuple(3 + 2 * i for i in range(nd))
        blocked = blocked.transpose(out_axes + win_axes)
        out_spatial = blocked.shape[2 : 2 + nd]
        flat = blocked.reshape(blocked.shape[: 2 + nd] + (-1,))
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return out, (x.shape, idx, flat.shape)

    def backward(self, dout, cache):
        x_shape, idx, flat_shape = cache
        nd = len(self.window)
        dflat = np.zeros(flat_shape, dtype=dout.dtype)
        np.put_along_axis(dflat, idx[..., None], dout[..., None], axis=-1)
        blocked_shape = dflat.shape[: 2 + nd] + self.window
        blocked = dflat.reshape(blocked_shape)
        # inverse of the forward transpose
        inv = [0, 1]
        for i in range(nd):
            inv.extend([2 + i, 2 + nd + i])
        dx = blocked.transpose(inv).reshape(x_shape)
        return dx, {}


class BatchNorm(Layer):
    """Per-channel batch normalization over batch and spatial axes."""

    def __init__(self, name, channels, momentum=0.9, eps=1e-5, dtype=np.float32):
        super().__init__(name)
        if eps <= 0:
            raise ConfigError("batchnorm epsilon must be > 0")
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)

    def _axes_and_shape(self, x):
        if x.ndim < 2:
            raise ShapeError(f"batchnorm needs at least 2-d input, got {x.shape}")
        if x.shape[1] != self.channels:
            raise ShapeError(
                f"channel mismatch: input has {x.shape[1]}, layer has {self.channels}"
            )
        axes = (0,) + tuple(range(2, x.ndim))
        bshape = (1, self.channels) + (1,) * (x.ndim - 2)
        return axes, bshape

    def forward(self, x, mode="train", rng=None):
        axes, bshape = self._axes_and_shape(x)
        gamma = self.params["gamma"].reshape(bshape)
        beta = self.params["beta"].reshape(bshape)
        if mode == "train":
            if x.shape[0] < 2:
                raise ConfigError("batchnorm train mode requires batch size >= 2")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            inv_std = 1.0 / np.sqrt(var.reshape(bshape) + self.eps)
            xhat = (x - mean.reshape(bshape)) * inv_std
            out = gamma * xhat + beta
            m = self.momentum
            self.buffers["running_mean"] = (
                m * self.buffers["running_mean"] + (1.0 - m) * mean
            ).astype(x.dtype)
            self.buffers["running_var"] = (
                m * self.buffers["running_var"] + (1.0 - m) * var
            ).astype(x.dtype)
            return out, (xhat, inv_std, axes, bshape)
        mean = self.buffers["running_mean"].reshape(bshape)
        var = self.buffers["running_var"].reshape(bshape)
        xhat = (x - mean) / np.sqrt(var + self.eps)
        out = gamma * xhat + beta
        return out, (xhat, None, axes, bshape)

    def backward(self, dout, cache):
        xhat, inv_std, axes, bshape = cache
        gamma = self.params["gamma"].reshape(bshape)
        dgamma = (dout * xhat).sum(axis=axes)
        dbeta = dout.sum(axis=axes)
        if inv_std is None:  # infer mode: running stats are constants
            var = self.buffers["running_var"].reshape(bshape)
            dx = dout * gamma / np.sqrt(var + self.eps)
            return dx, {"gamma": dgamma, "beta": dbeta}
        dxhat = dout * gamma
        dx = (
            dxhat
            - dxhat.mean(axis=axes).reshape(bshape)
            - xhat * (dxhat * xhat).mean(axis=axes).reshape(bshape)
        ) * inv_std
        return dx, {"gamma": dgamma, "beta": dbeta}


class Dropout(Layer):
    """Inverted dropout: kept units scaled by 1/(1-rate); identity at inference."""

    def __init__(self, name, rate):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, mode="train", rng=None):
        if mode != "train" or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ConfigError("dropout in train mode needs an rng")
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / keep
        return x * mask, mask

    def backward(self, dout, cache):
        if cache is None:
            return dout, {}
        return dout * cache, {}


class Relu(Layer):
    def __init__(self, name):
        super().__init__(name)

    def forward(self, x, mode="train", rng=None):
        out = np.maximum(x, 0)
        return out, x

    def backward(self, dout, cache):
        return dout * (cache > 0), {}


class Flatten(Layer):
    def __init__(self, name):
        super().__init__(name)

    def forward(self, x, mode="train", rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, cache):
        return dout.reshape(cache), {}


class Concat(Layer):
    """Concatenates a list of (B, d_i) inputs along axis 1; backward splits."""

    def __init__(self, name):
        super().__init__(name)

    def forward(self, xs, mode="train", rng=None):
        widths = [x.shape[1] for x in xs]
        return np.concatenate(xs, axis=1), widths

    def backward(self, dout, cache):
        widths = cache
        splits = np.cumsum(widths)[:-1]
        return np.split(dout, splits, axis=1), {}
