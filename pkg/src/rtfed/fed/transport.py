"""Message transports: in-process queues (simulation) and TCP sockets.

Both sides exchange fully serialized frames, never shared objects, so the
in-process transport exercises the same encode/decode path as TCP.
"""

from __future__ import annotations

import queue
import socket
import threading

from .protocol import (
    Message,
    MsgType,
    ProtocolError,
    deserialize_message,
    read_frame,
    serialize_message,
)


class TransportTimeout(Exception):
    pass


class TransportClosed(Exception):
    pass


class QueueEndpoint:
    """One side of an in-process duplex channel carrying frames."""

    def __init__(self, inbox, outbox):
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False

    def send(self, msg: Message):
        if self._closed:
            raise TransportClosed("endpoint is closed")
        self._outbox.put(serialize_message(msg))

    def send_raw(self, frame: bytes):
        self._outbox.put(frame)

    def recv(self, timeout=None) -> Message:
        try:
            frame = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportTimeout(f"no frame within {timeout} s") from None
        if frame is None:
            raise TransportClosed("peer closed the channel")
        return deserialize_message(frame)

    def close(self):
        if not self._closed:
            self._closed = True
            self._outbox.put(None)


class InProcessTransport:
    """Server-side registry of queue channels, one per centre."""

    def __init__(self):
        self.endpoints = {}
        self._lock = threading.Lock()

    def connect(self, centre_id) -> QueueEndpoint:
        """Create the channel for ``centre_id`` and return the client side."""
        to_client = queue.Queue()
        to_server = queue.Queue()
        server_side = QueueEndpoint(inbox=to_server, outbox=to_client)
        client_side = QueueEndpoint(inbox=to_client, outbox=to_server)
        with self._lock:
            if centre_id in self.endpoints:
                raise ValueError(f"centre {centre_id!r} already connected")
            self.endpoints[centre_id] = server_side
        return client_side

    def close(self):
        for ep in self.endpoints.values():
            ep.close()


class SocketEndpoint:
    def __init__(self, sock):
        self._sock = sock

    def _read_exactly(self, n):
        chunks = []
        remaining = n
        while remaining:
            data = self._sock.recv(remaining)
            if not data:
                break
            chunks.append(data)
            remaining -= len(data)
        return b"".join(chunks)

    def send(self, msg: Message):
        self._sock.sendall(serialize_message(msg))

    def recv(self, timeout=None) -> Message:
        self._sock.settimeout(timeout)
        try:
            frame = read_frame(self._read_exactly)
        except socket.timeout:
            raise TransportTimeout(f"no frame within {timeout} s") from None
        except OSError as exc:
            raise TransportClosed(str(exc)) from exc
        return deserialize_message(frame)

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


class TcpServer:
    """Orchestrator-side listener; clients register with a Configure frame."""

    def __init__(self, host="127.0.0.1", port=0):
        self._listener = socket.create_server((host, port))
        self.port = self._listener.getsockname()[1]
        self.endpoints = {}
        self.rosters = {}  # centre_id -> (n_train, n_val)

    def wait_for_centres(self, expected, timeout=600.0):
        """Accept connections until every expected centre has handshaken."""
        import time

        deadline = time.monotonic() + timeout
        expected = set(expected)
        while set(self.endpoints) < expected:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                missing = expected - set(self.endpoints)
                raise TransportTimeout(f"centres never connected: {sorted(missing)}")
            self._listener.settimeout(remaining)
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            ep = SocketEndpoint(sock)
            hello = ep.recv(timeout=remaining)
            if hello.msg_type != MsgType.CONFIGURE or hello.centre_id is None:
                ep.send(Message(MsgType.ERROR, error="expected Configure handshake"))
                ep.close()
                continue
            self.endpoints[hello.centre_id] = ep
            self.rosters[hello.centre_id] = (hello.n_train, hello.n_val)

    def close(self):
        for ep in self.endpoints.values():
            ep.close()
        self._listener.close()


def tcp_connect(host, port, centre_id, n_train=0, n_val=0, timeout=600.0):
    """Client side: connect and send the Configure handshake.

    Centre ids travel as strings on the wire; the server registers the
    endpoint under the exact string it receives.
    """
    sock = socket.create_connection((host, port), timeout=timeout)
    ep = SocketEndpoint(sock)
    ep.send(
        Message(
            MsgType.CONFIGURE, centre_id=str(centre_id), n_train=n_train, n_val=n_val
        )
    )
    return ep


__all__ = [
    "InProcessTransport",
    "QueueEndpoint",
    "SocketEndpoint",
    "TcpServer",
    "TransportClosed",
    "TransportTimeout",
    "tcp_connect",
    "ProtocolError",
]
