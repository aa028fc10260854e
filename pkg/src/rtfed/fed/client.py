"""Data-centre client loop: stateless between rounds, sequential handling."""

from __future__ import annotations

from ..models import evaluate, train_local_epoch
from .protocol import Message, MsgType, ProtocolError
from .transport import TransportClosed


def client_serve(shard, spec, endpoint, client_seed, lr=0.01):
    """Answer orchestrator requests until Shutdown.

    TrainRequest: one local epoch (batch 16, fresh Adam) on the shard's train
    records, shuffle seeded by client_seed XOR round, so identical requests
    yield identical responses.  EvalRequest: metrics on the local validation
    records.  Malformed frames produce an Error response instead of a crash.
    """
    while True:
        try:
            msg = endpoint.recv(timeout=None)
        except ProtocolError as exc:
            endpoint.send(Message(MsgType.ERROR, error=f"bad frame: {exc}"))
            continue
        except TransportClosed:
            return

        if msg.msg_type == MsgType.SHUTDOWN:
            return

        try:
            if msg.msg_type == MsgType.TRAIN_REQUEST:
                if not shard.train:
                    raise ValueError("centre has no training records")
                epoch_seed = int(client_seed) ^ int(msg.round)
                new_weights, mean_loss = train_local_epoch(
                    msg.weights, shard.train, spec, epoch_seed, lr=lr
                )
                endpoint.send(
                    Message(
                        MsgType.TRAIN_RESPONSE,
                        round=msg.round,
                        weights=new_weights,
                        n=len(shard.train),
                        loss=mean_loss,
                    )
                )
            elif msg.msg_type == MsgType.EVAL_REQUEST:
                if not shard.validation:
                    raise ValueError("centre has no validation records")
                acc, loss, n = evaluate(msg.weights, shard.validation, spec)
                endpoint.send(
                    Message(
                        MsgType.EVAL_RESPONSE,
                        round=msg.round,
                        n=n,
                        accuracy=acc,
                        loss=loss,
                    )
                )
            else:
                raise ValueError(f"unexpected message type {msg.msg_type.name}")
        except Exception as exc:
            endpoint.send(Message(MsgType.ERROR, round=msg.round, error=str(exc)))
