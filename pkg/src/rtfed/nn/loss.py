"""Categorical cross-entropy over softmax logits."""

from __future__ import annotations

import numpy as np


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer ``labels`` under softmax(``logits``).

    Returns ``(loss, grad, probs)`` where ``grad`` is the gradient of the mean
    loss w.r.t. the logits, i.e. ``(probs - onehot) / batch``.  The softmax is
    computed with per-row max subtraction for numerical stability.
    """
    if logits.ndim != 2:
        raise ValueError(f"logits must be (batch, classes), got {logits.shape}")
    labels = np.asarray(labels)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range [0, {k})")

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(b), labels].mean()

    grad = probs.copy()
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    return float(loss), grad.astype(logits.dtype), probs
