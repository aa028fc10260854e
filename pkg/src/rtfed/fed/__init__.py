from .protocol import (
    MsgType,
    Message,
    ProtocolError,
    BadMagicError,
    BadVersionError,
    BadTypeError,
    CrcMismatchError,
    TruncatedFrameError,
    PayloadError,
    serialize_message,
    deserialize_message,
)
from .strategies import (
    ClientUpdate,
    ServerOptState,
    StrategyError,
    aggregate_fedavg,
    aggregate_adaptive,
    init_server_state,
    combine_metrics,
)
from .transport import InProcessTransport, TcpServer, tcp_connect
from .orchestrator import (
    FedConfig,
    RoundRecord,
    FederationError,
    TimeoutAbort,
    ProtocolViolation,
    orchestrator_run,
    federated_evaluate,
)
from .client import client_serve

__all__ = [
    "MsgType",
    "Message",
    "ProtocolError",
    "BadMagicError",
    "BadVersionError",
    "BadTypeError",
    "CrcMismatchError",
    "TruncatedFrameError",
    "PayloadError",
    "serialize_message",
    "deserialize_message",
    "ClientUpdate",
    "ServerOptState",
    "StrategyError",
    "aggregate_fedavg",
    "aggregate_adaptive",
    "init_server_state",
    "combine_metrics",
    "InProcessTransport",
    "TcpServer",
    "tcp_connect",
    "FedConfig",
    "RoundRecord",
    "FederationError",
    "TimeoutAbort",
    "ProtocolViolation",
    "orchestrator_run",
    "federated_evaluate",
    "client_serve",
]
