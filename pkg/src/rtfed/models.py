"""Multimodal classifier construction, local training, and evaluation.

The fusion network concatenates per-modality branch outputs and feeds a
single output layer.  Single-modality configurations are the comparison
baselines: the tabular one is the fully connected branch plus the output
layer, the imaging ones add a hidden dense layer between the flattened
convolutional features and the output layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    BatchNorm,
    Concat,
    Conv2D,
    Conv3D,
    Dense,
    Dropout,
    Flatten,
    MaxPool,
    Relu,
    Sequential,
    softmax_cross_entropy,
)
from .nn.layers import ConfigError

MODALITIES = ("tabular", "visual", "volume")

CLASS_NAMES = (
    "GTV-1",
    "Spinal-Cord",
    "Esophagus",
    "Lung-Left",
    "Lung-Right",
    "Heart",
    "Lungs-Total",
)

N_POOLS = 3  # conv blocks per imaging branch, each halving every spatial axis


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; all widths are derived from these fields."""

    modalities: tuple[str, ...]
    n_classes: int = 7
    tabular_dim: int = 9
    slice_hw: tuple[int, int] = (64, 64)
    volume_dhw: tuple[int, int, int] = (32, 64, 64)
    dense_width: int = 32
    conv_channels: tuple[int, int, int] = (8, 16, 32)
    dropout_rate: float = 0.25

    def __post_init__(self):
        mods = tuple(self.modalities)
        if not mods:
            raise ConfigError("at least one modality must be enabled")
        for m in mods:
            if m not in MODALITIES:
                raise ConfigError(f"unknown modality {m!r}")
        if len(set(mods)) != len(mods):
            raise ConfigError(f"duplicate modality in {mods}")
        # canonical order, so weight layout is a pure function of the set
        object.__setattr__(
            self, "modalities", tuple(m for m in MODALITIES if m in mods)
        )
        shrink = 2**N_POOLS
        if "visual" in self.modalities:
            if any(s % shrink for s in self.slice_hw):
                raise ConfigError(f"slice dims {self.slice_hw} must be divisible by {shrink}")
        if "volume" in self.modalities:
            if any(s % shrink for s in self.volume_dhw):
                raise ConfigError(f"volume dims {self.volume_dhw} must be divisible by {shrink}")

    def is_single_conv_baseline(self):
        return len(self.modalities) == 1 and self.modalities[0] != "tabular"

    def flatten_width(self, modality):
        c = self.conv_channels[-1]
        shrink = 2**N_POOLS
        if modality == "visual":
            h, w = self.slice_hw
            return c * (h // shrink) * (w // shrink)
        if modality == "volume":
            d, h, w = self.volume_dhw
            return c * (d // shrink) * (h // shrink) * (w // shrink)
        raise ConfigError(f"{modality!r} has no convolutional branch")

    def branch_width(self, modality):
        if modality == "tabular":
            return self.dense_width
        if self.is_single_conv_baseline():
            return self.dense_width
        return self.flatten_width(modality)

    def fusion_width(self):
        return sum(self.branch_width(m) for m in self.modalities)


@dataclass
class ModelWeights:
    """Ordered (name, tensor) pairs, batch-norm running statistics included."""

    entries: list[tuple[str, np.ndarray]] = field(default_factory=list)

    def names(self):
        return [n for n, _ in self.entries]

    def as_dict(self):
        return dict(self.entries)

    def copy(self):
        return ModelWeights([(n, a.copy()) for n, a in self.entries])

    def astype(self, dtype):
        return ModelWeights([(n, a.astype(dtype)) for n, a in self.entries])

    def allclose(self, other, rtol=0.0, atol=0.0):
        if self.names() != other.names():
            return False
        return all(
            np.allclose(a, b, rtol=rtol, atol=atol)
            for (_, a), (_, b) in zip(self.entries, other.entries)
        )

    def __eq__(self, other):
        if not isinstance(other, ModelWeights):
            return NotImplemented
        if self.names() != other.names():
            return False
        return all(
            a.dtype == b.dtype and a.shape == b.shape and np.array_equal(a, b)
            for (_, a), (_, b) in zip(self.entries, other.entries)
        )


def is_buffer_name(name):
    """Batch-norm running statistics bypass optimizers during aggregation."""
    return ".running_" in name


class MultimodalNet:
    """Branches fused by concatenation into one output layer."""

    def __init__(self, spec: NetworkSpec, branches, head):
        self.spec = spec
        self.branches = branches  # modality -> Sequential
        self.concat = Concat("fusion.concat")
        self.head = head

    # -- forward / backward ------------------------------------------------

    def forward(self, inputs, mode="train", rng=None):
        outs = []
        caches = {}
        for m in self.spec.modalities:
            out, cache = self.branches[m].forward(inputs[m], mode=mode, rng=rng)
            outs.append(out)
            caches[m] = cache
        fused, concat_cache = self.concat.forward(outs)
        logits, head_cache = self.head.forward(fused)
        return logits, (caches, concat_cache, head_cache)

    def backward(self, dlogits, cache):
        caches, concat_cache, head_cache = cache
        dfused, grads = self.head.backward(dlogits, head_cache)
        parts, _ = self.concat.backward(dfused, concat_cache)
        for m, dpart in zip(self.spec.modalities, parts):
            _, branch_grads = self.branches[m].backward(dpart, caches[m])
            grads.update(branch_grads)
        return grads

    def loss_and_grads(self, inputs, labels, mode="train", rng=None):
        logits, cache = self.forward(inputs, mode=mode, rng=rng)
        loss, dlogits, probs = softmax_cross_entropy(logits, labels)
        grads = self.backward(dlogits, cache)
        return loss, grads, probs

    # -- weight transport ----------------------------------------------------

    def _layers_in_order(self):
        for m in self.spec.modalities:
            yield from self.branches[m].layers
        yield from self.head.layers

    def named_params(self):
        out = {}
        for layer in self._layers_in_order():
            for key, arr in layer.params.items():
                out[f"{layer.name}.{key}"] = arr
        return out

    def get_weights(self):
        entries = []
        for layer in self._layers_in_order():
            for key, arr in layer.params.items():
                entries.append((f"{layer.name}.{key}", arr.copy()))
            for key, arr in layer.buffers.items():
                entries.append((f"{layer.name}.{key}", arr.copy()))
        return ModelWeights(entries)

    def set_weights(self, weights: ModelWeights):
        expected = self.get_weights().names()
        if weights.names() != expected:
            raise ConfigError(
                "weight entries do not match network layout: "
                f"got {len(weights.entries)} entries, expected {len(expected)}"
            )
        incoming = weights.as_dict()
        for layer in self._layers_in_order():
            for key in layer.params:
                src = incoming[f"{layer.name}.{key}"]
                layer.params[key] = src.astype(layer.params[key].dtype, copy=True)
            for key in layer.buffers:
                src = incoming[f"{layer.name}.{key}"]
                layer.buffers[key] = src.astype(layer.buffers[key].dtype, copy=True)

    def param_count(self):
        return sum(a.size for _, a in self.get_weights().entries)

    # -- taps ----------------------------------------------------------------

    def tap_points(self):
        taps = []
        if "tabular" in self.spec.modalities:
            taps.append("tabular_out")
        if any(m in self.spec.modalities for m in ("visual", "volume")):
            taps.append("conv_out")
        taps.append("fusion_hidden")
        return taps

    def forward_tapped(self, inputs, tap, mode="infer", rng=None):
        """Activation matrix at a named tap point."""
        if tap not in self.tap_points():
            raise ConfigError(f"tap point {tap!r} not present; have {self.tap_points()}")
        conv_mods = [m for m in self.spec.modalities if m != "tabular"]
        if tap == "conv_out" and len(conv_mods) != 1:
            raise ConfigError(f"conv_out tap is ambiguous with branches {conv_mods}")
        outs = []
        for m in self.spec.modalities:
            x = inputs[m]
            for layer in self.branches[m].layers:
                x, _ = layer.forward(x, mode=mode, rng=rng)
                if tap == "conv_out" and m in conv_mods and isinstance(layer, Flatten):
                    return x
            if tap == "tabular_out" and m == "tabular":
                return x
            outs.append(x)
        return outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)


def _conv_branch(prefix, conv_cls, channels, dropout_rate, pool_window, dtype):
    layers = []
    in_ch = 1
    for i, out_ch in enumerate(channels, start=1):
        base = f"{prefix}.block{i}"
        layers.append(conv_cls(f"{base}.conv", in_ch, out_ch, dtype=dtype))
        layers.append(BatchNorm(f"{base}.bn", out_ch, dtype=dtype))
        layers.append(Relu(f"{base}.relu"))
        layers.append(MaxPool(f"{base}.pool", pool_window))
        layers.append(Dropout(f"{base}.drop", dropout_rate))
        in_ch = out_ch
    layers.append(Flatten(f"{prefix}.flatten"))
    return layers


def build_network(spec: NetworkSpec, init_seed=0, dtype=np.float32):
    """Build the network for ``spec`` with He-uniform weights from ``init_seed``."""
    branches = {}
    for m in spec.modalities:
        if m == "tabular":
            w = spec.dense_width
            layers = [
                Dense("tabular.fc1", spec.tabular_dim, w, dtype=dtype),
                Relu("tabular.relu1"),
                Dense("tabular.fc2", w, w, dtype=dtype),
                Relu("tabular.relu2"),
            ]
        elif m == "visual":
            layers = _conv_branch(
                "visual", Conv2D, spec.conv_channels, spec.dropout_rate, (2, 2), dtype
            )
        else:
            layers = _conv_branch(
                "volume", Conv3D, spec.conv_channels, spec.dropout_rate, (2, 2, 2), dtype
            )
        if m != "tabular" and spec.is_single_conv_baseline():
            layers.append(
                Dense(f"{m}.fc", spec.flatten_width(m), spec.dense_width, dtype=dtype)
            )
            layers.append(Relu(f"{m}.relu"))
        branches[m] = Sequential(layers)

    head = Sequential([Dense("head.out", spec.fusion_width(), spec.n_classes, dtype=dtype)])
    net = MultimodalNet(spec, branches, head)
    _init_weights(net, init_seed)
    return net


def _init_weights(net, init_seed):
    """He-uniform for weight matrices/kernels, zeros for biases, unit gamma."""
    rng = np.random.default_rng(init_seed)
    for layer in net._layers_in_order():
        if "w" not in layer.params:
            continue
        w = layer.params["w"]
        fan_in = w.shape[0] if w.ndim == 2 else int(np.prod(w.shape[1:]))
        limit = math.sqrt(6.0 / fan_in)
        layer.params["w"] = rng.uniform(-limit, limit, size=w.shape).astype(w.dtype)


class Adam:
    """Standard Adam with bias correction, applied in place to named params."""

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            mhat = m / bias1
            vhat = v / bias2
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


def make_batch(records, spec: NetworkSpec):
    """Stack records into per-modality input arrays plus a label vector."""
    inputs = {}
    if "tabular" in spec.modalities:
        inputs["tabular"] = np.stack([r.tabular for r in records]).astype(np.float32)
    if "visual" in spec.modalities:
        sl = np.stack([r.slice2d for r in records]).astype(np.float32)
        if sl.shape[1:] != tuple(spec.slice_hw):
            raise ConfigError(
                f"record slice dims {sl.shape[1:]} do not match spec {spec.slice_hw}"
            )
        inputs["visual"] = sl[:, None]
    if "volume" in spec.modalities:
        vol = np.stack([r.volume3d for r in records]).astype(np.float32)
        if vol.shape[1:] != tuple(spec.volume_dhw):
            raise ConfigError(
                f"record volume dims {vol.shape[1:]} do not match spec {spec.volume_dhw}"
            )
        inputs["volume"] = vol[:, None]
    labels = np.array([r.label for r in records], dtype=np.int64)
    return inputs, labels


def _batch_indices(n, batch_size, order):
    """Contiguous chunks of the shuffled order; a trailing singleton is merged
    into the previous batch so batch normalization always sees >= 2 samples."""
    chunks = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def train_local_epoch(weights, shard_train, spec, epoch_seed, lr=0.01, batch_size=16):
    """One seed-shuffled pass over ``shard_train`` with a fresh Adam state.

    Returns the updated weights and the mean per-batch loss.  Deterministic in
    (weights, shard order, epoch_seed).
    """
    if not shard_train:
        raise ValueError("cannot train on an empty shard")
    net = build_network(spec, init_seed=0)
    net.set_weights(weights)
    order = np.random.default_rng(epoch_seed).permutation(len(shard_train))
    opt = Adam(net.named_params(), lr=lr)
    losses = []
    for bi, idx in enumerate(_batch_indices(len(shard_train), batch_size, order)):
        batch = [shard_train[i] for i in idx]
        inputs, labels = make_batch(batch, spec)
        rng = np.random.default_rng([epoch_seed & 0x7FFFFFFF, bi])
        loss, grads, _ = net.loss_and_grads(inputs, labels, mode="train", rng=rng)
        opt.step(grads)
        losses.append(loss)
    return net.get_weights(), float(np.mean(losses))


def evaluate(weights, records, spec, batch_size=32):
    """Inference-mode categorical accuracy and mean loss over ``records``.

    Argmax ties break toward the lowest class index; accuracy is therefore
    exactly invariant to record order.
    """
    if not records:
        raise ValueError("cannot evaluate on empty records")
    net = build_network(spec, init_seed=0)
    net.set_weights(weights)
    correct = 0
    loss_sum = 0.0
    for i in range(0, len(records), batch_size):
        batch = records[i : i + batch_size]
        inputs, labels = make_batch(batch, spec)
        logits, _ = net.forward(inputs, mode="infer")
        loss, _, probs = softmax_cross_entropy(logits, labels)
        loss_sum += loss * len(batch)
        correct += int((probs.argmax(axis=1) == labels).sum())
    n = len(records)
    return correct / n, loss_sum / n, n


def save_weights(weights: ModelWeights, path):
    """Order-preserving .npz dump (keys carry a position prefix)."""
    arrays = {f"{i:04d}|{name}": arr for i, (name, arr) in enumerate(weights.entries)}
    np.savez(path, **arrays)


def load_weights(path) -> ModelWeights:
    with np.load(path) as data:
        keyed = sorted(data.files)
        return ModelWeights([(k.split("|", 1)[1], data[k]) for k in keyed])


def layer_activations(weights, records, spec, tap, batch_size=32):
    """Inference-mode activations at ``tap``, one row per record."""
    if not records:
        raise ValueError("no records to run through the network")
    net = build_network(spec, init_seed=0)
    net.set_weights(weights)
    rows = []
    for i in range(0, len(records), batch_size):
        inputs, _ = make_batch(records[i : i + batch_size], spec)
        rows.append(net.forward_tapped(inputs, tap, mode="infer"))
    return np.concatenate(rows, axis=0)
