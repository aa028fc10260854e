"""Central-difference verification of analytic gradients.

Runs on the float64 path with deterministic inputs; dropout must be disabled
(rate 0) or its mask frozen via a fixed rng, otherwise finite differences see
a different network than the analytic pass did.
"""

from __future__ import annotations

import numpy as np

# Relative-error denominator floor: guards elements whose true gradient is
# essentially zero, where central differences return only rounding noise.
_DENOM_FLOOR = 1e-4


def grad_check(net, x, labels, eps=1e-5, rng_factory=None):
    """Max relative error between analytic and central-difference gradients.

    ``net`` needs ``loss_and_grads(x, labels, mode, rng)`` and
    ``named_params()``; every parameter element is perturbed by ``+-eps``.
    ``rng_factory`` (if given) must return a freshly seeded rng per call so
    stochastic layers see identical masks on every evaluation.
    """

    def make_rng():
        return rng_factory() if rng_factory is not None else None

    loss, grads, _ = net.loss_and_grads(x, labels, mode="train", rng=make_rng())
    del loss

    worst = 0.0
    for name, param in net.named_params().items():
        analytic = grads[name]
        flat = param.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _, _ = net.loss_and_grads(x, labels, mode="train", rng=make_rng())
            flat[i] = orig - eps
            lm, _, _ = net.loss_and_grads(x, labels, mode="train", rng=make_rng())
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            a = float(analytic.reshape(-1)[i])
            denom = max(abs(a), abs(numeric), _DENOM_FLOOR)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
