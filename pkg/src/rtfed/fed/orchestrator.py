"""Round-driving orchestrator: broadcast, barrier, aggregate, evaluate.

Cross-silo semantics: every configured training centre must answer every
round; a missing or failing centre aborts the run with the history gathered
so far.  Aggregation happens on the orchestrator thread only, after the
round barrier.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..models import build_network
from .protocol import Message, MsgType
from .strategies import (
    ClientUpdate,
    aggregate_adaptive,
    aggregate_fedavg,
    combine_metrics,
    init_server_state,
    STRATEGIES,
)
from .transport import TransportTimeout


class FederationError(Exception):
    """Run aborted; ``history`` holds the rounds completed before the abort."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class TimeoutAbort(FederationError):
    pass


class ProtocolViolation(FederationError):
    pass


@dataclass
class FedConfig:
    training_centres: list
    evaluation_centres: list = None
    strategy: str = "fedavg"
    rounds: int = 100
    server_lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.99
    tau: float = 1e-3
    client_weighting: str = "by_samples"
    timeout_secs: float = 600.0
    checkpoint: str = "best"  # "best" validation accuracy or "last"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; pick from {STRATEGIES}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.server_lr <= 0:
            raise ValueError("server learning rate must be > 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if not self.training_centres:
            raise ValueError("training_centres must be non-empty")
        if self.evaluation_centres is None:
            self.evaluation_centres = list(self.training_centres)
        if self.checkpoint not in ("best", "last"):
            raise ValueError("checkpoint policy must be 'best' or 'last'")


@dataclass
class RoundRecord:
    round: int
    val_accuracy: float
    val_loss: float
    train_losses: dict = field(default_factory=dict)  # centre -> mean loss
    wall_time: float = 0.0


def _gather(endpoints, centres, round_, expected_type, timeout, history):
    """Barrier: one response per centre or abort; round numbers must echo."""
    deadline = time.monotonic() + timeout
    responses = {}
    for cid in sorted(centres, key=str):
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TimeoutAbort(f"round {round_}: centre {cid!r} never answered", history)
        try:
            msg = endpoints[cid].recv(timeout=remaining)
        except TransportTimeout:
            raise TimeoutAbort(
                f"round {round_}: timed out waiting for centre {cid!r}", history
            ) from None
        if msg.msg_type == MsgType.ERROR:
            raise FederationError(
                f"round {round_}: centre {cid!r} reported: {msg.error}", history
            )
        if msg.msg_type != expected_type:
            raise ProtocolViolation(
                f"round {round_}: centre {cid!r} sent {msg.msg_type.name}, "
                f"expected {expected_type.name}",
                history,
            )
        if msg.round != round_:
            raise ProtocolViolation(
                f"centre {cid!r} answered round {msg.round}, expected {round_}", history
            )
        responses[cid] = msg
    return responses


def orchestrator_run(config: FedConfig, spec, transport, initial_weights=None, init_seed=0):
    """Run ``config.rounds`` federated rounds; return (weights, history).

    The returned weights are the checkpoint with the best aggregated
    validation accuracy (ties -> earliest round) under the default policy.
    """
    endpoints = transport.endpoints
    roster = set(config.training_centres) | set(config.evaluation_centres)
    missing = roster - set(endpoints)
    if missing:
        raise FederationError(f"centres not connected: {sorted(missing, key=str)}")

    weights = initial_weights if initial_weights is not None else build_network(
        spec, init_seed=init_seed
    ).get_weights()
    state = init_server_state(weights, config.tau) if config.strategy != "fedavg" else None

    history = []
    best = None  # (accuracy, round, weights)
    try:
        for round_ in range(1, config.rounds + 1):
            t0 = time.monotonic()
            for cid in sorted(config.training_centres, key=str):
                endpoints[cid].send(
                    Message(MsgType.TRAIN_REQUEST, round=round_, weights=weights)
                )
            responses = _gather(
                endpoints,
                config.training_centres,
                round_,
                MsgType.TRAIN_RESPONSE,
                config.timeout_secs,
                history,
            )
            updates = [
                ClientUpdate(centre_id=str(cid), weights=m.weights, n_samples=m.n)
                for cid, m in responses.items()
            ]
            try:
                if config.strategy == "fedavg":
                    weights = aggregate_fedavg(updates, weighting=config.client_weighting)
                else:
                    weights, state = aggregate_adaptive(
                        config.strategy,
                        state,
                        weights,
                        updates,
                        server_lr=config.server_lr,
                        beta1=config.beta1,
                        beta2=config.beta2,
                        tau=config.tau,
                        weighting=config.client_weighting,
                    )
            except Exception as exc:
                raise ProtocolViolation(f"round {round_} aborted: {exc}", history) from exc

            for cid in sorted(config.evaluation_centres, key=str):
                endpoints[cid].send(
                    Message(MsgType.EVAL_REQUEST, round=round_, weights=weights)
                )
            evals = _gather(
                endpoints,
                config.evaluation_centres,
                round_,
                MsgType.EVAL_RESPONSE,
                config.timeout_secs,
                history,
            )
            val_acc, val_loss = combine_metrics(
                [(m.accuracy, m.loss, m.n) for m in evals.values()]
            )
            history.append(
                RoundRecord(
                    round=round_,
                    val_accuracy=val_acc,
                    val_loss=val_loss,
                    train_losses={str(c): m.loss for c, m in responses.items()},
                    wall_time=time.monotonic() - t0,
                )
            )
            if best is None or val_acc > best[0]:
                best = (val_acc, round_, weights.copy())
    finally:
        for cid in sorted(endpoints, key=str):
            try:
                endpoints[cid].send(Message(MsgType.SHUTDOWN))
            except Exception:
                pass

    if config.checkpoint == "best" and best is not None:
        return best[2], history
    return weights, history


def federated_evaluate(per_centre_metrics):
    """Aggregate per-centre (accuracy, loss, n) into federated metrics."""
    return combine_metrics(per_centre_metrics)
