"""Exact O(n^2) t-SNE for inspecting layer representations.

Per-point bandwidths are found by binary search on the precision so every
conditional distribution hits the target perplexity; the embedding is
optimized by momentum gradient descent with early exaggeration.
"""

from __future__ import annotations

import numpy as np

from ..models import layer_activations


def _pairwise_sq_dists(x):
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _row_entropy_and_p(d2_row, beta):
    """Shannon entropy (nats) and probabilities for one row at precision beta."""
    p = np.exp(-d2_row * beta)
    sum_p = p.sum()
    if sum_p <= 0.0:
        return 0.0, np.zeros_like(p)
    h = np.log(sum_p) + beta * float((d2_row * p).sum()) / sum_p
    return h, p / sum_p


def conditional_probabilities(d2, perplexity, tol=1e-7, max_iter=50):
    """Row-stochastic P with each row's perplexity matched by binary search.

    ``tol`` bounds |H - log(perplexity)| in nats, which bounds the perplexity
    mismatch by roughly perplexity * tol.
    """
    n = d2.shape[0]
    target = np.log(perplexity)
    p_cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        h, p = _row_entropy_and_p(row, beta)
        for _ in range(max_iter):
            if abs(h - target) < tol:
                break
            if h > target:  # too entropic: raise precision
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            h, p = _row_entropy_and_p(row, beta)
        p_cond[i] = np.insert(p, i, 0.0)
    return p_cond


def perplexity_profile(p_cond):
    """Per-row achieved perplexity 2^H (bits) of a row-stochastic matrix."""
    logp = np.where(p_cond > 0, np.log2(p_cond, where=p_cond > 0), 0.0)
    h_bits = -(p_cond * logp).sum(axis=1)
    return 2.0**h_bits


def tsne(
    points,
    perplexity=30.0,
    iters=1000,
    seed=0,
    learning_rate=200.0,
    early_exaggeration=12.0,
    exaggeration_iters=250,
    momentum=(0.5, 0.8),
    kl_every=50,
):
    """Embed ``points`` (n x d) into 2-D; returns (embedding, kl_history).

    ``kl_history`` maps iteration -> KL divergence against the true (not
    exaggerated) joint distribution, recorded every ``kl_every`` iterations.
    """
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if n < 4:
        raise ValueError("need at least 4 points")
    d2 = _pairwise_sq_dists(x)
    off_diag = d2[~np.eye(n, dtype=bool)]
    if off_diag.max() <= 0.0:
        raise ValueError("degenerate input: all points identical")
    if perplexity >= n - 1:
        raise ValueError(f"perplexity {perplexity} too large for n={n}")

    p_cond = conditional_probabilities(d2, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    np.maximum(p, 1e-12, out=p)

    rng = np.random.default_rng(seed)
    y = 1e-4 * rng.standard_normal((n, 2))
    velocity = np.zeros_like(y)
    kl_history = {}

    def kl_divergence(q):
        return float((p * (np.log(p) - np.log(q))).sum())

    for it in range(1, iters + 1):
        exag = early_exaggeration if it <= exaggeration_iters else 1.0
        d2_low = _pairwise_sq_dists(y)
        q_num = 1.0 / (1.0 + d2_low)
        np.fill_diagonal(q_num, 0.0)
        q = q_num / q_num.sum()
        np.maximum(q, 1e-12, out=q)

        pq = (exag * p - q) * q_num
        grad = 4.0 * ((np.diag(pq.sum(axis=1)) - pq) @ y)

        mom = momentum[0] if it <= exaggeration_iters else momentum[1]
        velocity = mom * velocity - learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0)

        if it % kl_every == 0 or it == iters:
            kl_history[it] = kl_divergence(q)
    return y, kl_history


TAP_POINTS = ("tabular_out", "conv_out", "fusion_hidden")


def analyze_layers(weights, records, spec, perplexity=30.0, iters=1000, seed=0, taps=None):
    """t-SNE embeddings of the standard tap points.

    Returns {tap: (embedding n x 2, labels)} for the taps present in the
    architecture (a tabular-only model has no conv_out, for instance).
    """
    from ..models import build_network

    available = build_network(spec, init_seed=0).tap_points()
    wanted = TAP_POINTS if taps is None else taps
    labels = np.array([r.label for r in records])
    out = {}
    for tap in wanted:
        if tap not in available:
            if taps is not None:
                raise ValueError(f"tap {tap!r} not present; have {available}")
            continue
        acts = layer_activations(weights, records, spec, tap)
        emb, _ = tsne(acts, perplexity=perplexity, iters=iters, seed=seed)
        out[tap] = (emb, labels)
    return out
