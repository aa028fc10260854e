"""Aggregation strategies over client weight updates.

All arithmetic runs in float64 in centre-id-sorted order, so results are
deterministic and independent of response arrival order; the output is cast
back to the incoming dtype.  Batch-norm running statistics are not optimizer
state and are always combined by the plain weighted mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..models import ModelWeights, is_buffer_name

STRATEGIES = ("fedavg", "fedopt", "fedadam", "fedyogi")


class StrategyError(ValueError):
    pass


@dataclass
class ClientUpdate:
    centre_id: str
    weights: ModelWeights
    n_samples: int


@dataclass
class ServerOptState:
    """First/second moments of the pseudo-gradient; v starts at tau^2."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    round: int = 0


def init_server_state(weights: ModelWeights, tau: float) -> ServerOptState:
    m = {}
    v = {}
    for name, arr in weights.entries:
        if is_buffer_name(name):
            continue
        m[name] = np.zeros(arr.shape, dtype=np.float64)
        v[name] = np.full(arr.shape, tau * tau, dtype=np.float64)
    return ServerOptState(m=m, v=v, round=0)


def _check_shapes(updates):
    if not updates:
        raise StrategyError("no client updates to aggregate")
    ref = updates[0].weights
    ref_layout = [(n, a.shape) for n, a in ref.entries]
    for u in updates[1:]:
        layout = [(n, a.shape) for n, a in u.weights.entries]
        if layout != ref_layout:
            raise StrategyError(
                f"client {u.centre_id!r} weight layout does not match "
                f"client {updates[0].centre_id!r}"
            )


def _weighted_mean(updates, weighting):
    """Float64 elementwise mean over updates in centre-id-sorted order."""
    ordered = sorted(updates, key=lambda u: str(u.centre_id))
    if weighting == "by_samples":
        total = float(sum(u.n_samples for u in ordered))
        if total <= 0:
            raise StrategyError("by_samples weighting needs positive sample counts")
        alphas = [u.n_samples / total for u in ordered]
    elif weighting == "uniform":
        alphas = [1.0 / len(ordered)] * len(ordered)
    else:
        raise StrategyError(f"unknown client weighting {weighting!r}")
    names = ordered[0].weights.names()
    acc = {n: np.zeros(a.shape, dtype=np.float64) for n, a in ordered[0].weights.entries}
    for alpha, u in zip(alphas, ordered):
        for name, arr in u.weights.entries:
            acc[name] += alpha * arr.astype(np.float64)
    return names, acc


def aggregate_fedavg(updates, weighting="by_samples"):
    """Sample-weighted elementwise mean of client weights."""
    _check_shapes(updates)
    names, mean = _weighted_mean(updates, weighting)
    dtypes = dict((n, a.dtype) for n, a in updates[0].weights.entries)
    return ModelWeights([(n, mean[n].astype(dtypes[n])) for n in names])


def aggregate_adaptive(
    strategy,
    state: ServerOptState,
    current: ModelWeights,
    updates,
    server_lr=0.1,
    beta1=0.9,
    beta2=0.99,
    tau=1e-3,
    weighting="by_samples",
):
    """Server-optimizer step on the pseudo-gradient mean(clients) - current.

    fedopt:  w <- w + lr * delta
    fedadam: m <- b1 m + (1-b1) delta;  v <- b2 v + (1-b2) delta^2
    fedyogi: same m;  v <- v - (1-b2) delta^2 sign(v - delta^2)
    then     w <- w + lr * m / (sqrt(v) + tau)          (no bias correction)

    Batch-norm buffers bypass the optimizer and take the weighted mean.
    """
    if strategy not in ("fedopt", "fedadam", "fedyogi"):
        raise StrategyError(f"not an adaptive strategy: {strategy!r}")
    _check_shapes(updates)
    names, mean = _weighted_mean(updates, weighting)
    if current.names() != names:
        raise StrategyError("current weights do not match client weight layout")
    cur = current.as_dict()
    dtypes = {n: a.dtype for n, a in current.entries}

    out = []
    for name in names:
        if is_buffer_name(name):
            out.append((name, mean[name].astype(dtypes[name])))
            continue
        w = cur[name].astype(np.float64)
        delta = mean[name] - w
        if strategy == "fedopt":
            new_w = w + server_lr * delta
        else:
            m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * delta
            d2 = delta * delta
            if strategy == "fedadam":
                state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * d2
            else:
                state.v[name] = state.v[name] - (1.0 - beta2) * d2 * np.sign(
                    state.v[name] - d2
                )
            new_w = w + server_lr * m / (np.sqrt(state.v[name]) + tau)
        out.append((name, new_w.astype(dtypes[name])))
    state.round += 1
    return ModelWeights(out), state


def combine_metrics(per_centre):
    """Sample-weighted mean of (accuracy, loss, n) triples.

    Sorted before summation, so the result is exactly invariant to the
    order centres report in.
    """
    rows = sorted(per_centre, key=lambda t: (t[2], t[0], t[1]))
    total = sum(n for _, _, n in rows)
    if total <= 0:
        raise StrategyError("no evaluation samples across centres")
    acc = sum(a * n for a, _, n in rows) / total
    loss = sum(l * n for _, l, n in rows) / total
    return acc, loss
