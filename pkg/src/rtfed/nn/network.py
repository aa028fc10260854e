"""Sequential layer stack with named parameters."""

from __future__ import annotations

from .loss import softmax_cross_entropy


class Sequential:
    """A chain of layers sharing the (out, cache) / backward contract.

    Parameter and buffer names are ``"<layer name>.<key>"``; their order is
    the layer order, which is the canonical ordering used for weight
    transport and aggregation.
    """

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, mode="train", rng=None):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, mode=mode, rng=rng)
            caches.append(cache)
        return x, caches

    def backward(self, dout, caches):
        grads = {}
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dout, layer_grads = layer.backward(dout, cache)
            for key, g in layer_grads.items():
                grads[f"{layer.name}.{key}"] = g
        return dout, grads

    def named_params(self):
        out = {}
        for layer in self.layers:
            for key, arr in layer.params.items():
                out[f"{layer.name}.{key}"] = arr
        return out

    def named_buffers(self):
        out = {}
        for layer in self.layers:
            for key, arr in layer.buffers.items():
                out[f"{layer.name}.{key}"] = arr
        return out

    def set_param(self, name, value):
        layer_name, key = name.rsplit(".", 1)
        for layer in self.layers:
            if layer.name == layer_name:
                target = layer.params if key in layer.params else layer.buffers
                target[key] = value
                return
        raise KeyError(name)

    def loss_and_grads(self, x, labels, mode="train", rng=None):
        logits, caches = self.forward(x, mode=mode, rng=rng)
        loss, dlogits, probs = softmax_cross_entropy(logits, labels)
        _, grads = self.backward(dlogits, caches)
        return loss, grads, probs
