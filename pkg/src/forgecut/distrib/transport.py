"""Byte-stream transports: in-process loopback, TCP, and transcript replay.

Loopback pushes the same encoded newline-delimited bytes through a queue
pair that TCP pushes through a socket, so the two are byte-equivalent and
results cannot depend on the transport.
"""

from __future__ import annotations

import os
import queue
import socket

from .messages import MessageError, decode_line, encode_message

DEFAULT_TIMEOUT = 30.0
ENV_BIND = "FORGECUT_BIND"


class TransportError(RuntimeError):
    """Peer unreachable, closed, or timed out."""


class LoopbackTransport:
    """One end of an in-process channel; bytes go through queues like a socket."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float = DEFAULT_TIMEOUT):
        self._inbox = inbox
        self._outbox = outbox
        self.timeout = timeout
        self._closed = False

    def send(self, message: dict) -> bytes:
        if self._closed:
            raise TransportError("loopback channel closed")
        data = encode_message(message)
        self._outbox.put(data)
        return data

    def recv(self) -> tuple[dict, bytes]:
        try:
            data = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise TransportError("loopback recv timed out") from None
        if data is None:
            raise TransportError("peer closed the loopback channel")
        return decode_line(data), data

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(None)


def loopback_pair(timeout: float = DEFAULT_TIMEOUT) -> tuple[LoopbackTransport, LoopbackTransport]:
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return (LoopbackTransport(b_to_a, a_to_b, timeout),
            LoopbackTransport(a_to_b, b_to_a, timeout))


class TcpTransport:
    """Newline-delimited JSON over a connected socket."""

    def __init__(self, sock: socket.socket, timeout: float = DEFAULT_TIMEOUT):
        self._sock = sock
        self._sock.settimeout(timeout)
        self._reader = sock.makefile("rb")
        self.timeout = timeout

    def send(self, message: dict) -> bytes:
        data = encode_message(message)
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from None
        return data

    def recv(self) -> tuple[dict, bytes]:
        try:
            data = self._reader.readline()
        except OSError as exc:
            raise TransportError(f"recv failed: {exc}") from None
        if not data:
            raise TransportError("peer closed the connection")
        return decode_line(data), data

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass


def parse_bind(spec: str | None = None) -> tuple[str, int]:
    spec = spec or os.environ.get(ENV_BIND, "127.0.0.1:0")
    host, _, port = spec.rpartition(":")
    if not host:
        raise TransportError(f"bind spec {spec!r} must be host:port")
    return host, int(port)


def connect_tcp(address: str, timeout: float = DEFAULT_TIMEOUT) -> TcpTransport:
    host, port = parse_bind(address)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {address}: {exc}") from None
    return TcpTransport(sock, timeout)


class ReplayTransport:
    """Serves a recorded conversation back to the coordinator.

    Outgoing messages must match the recording byte-for-byte (proving the
    coordinator is a deterministic function of seed and responses); incoming
    messages are replayed from the record.
    """

    def __init__(self, entries: list[dict]):
        self._entries = list(entries)
        self._cursor = 0

    def _next(self, direction: str) -> dict:
        if self._cursor >= len(self._entries):
            raise TransportError("replay exhausted: coordinator asked for more traffic")
        entry = self._entries[self._cursor]
        if entry["dir"] != direction:
            raise TransportError(
                f"replay divergence at entry {self._cursor}: expected {entry['dir']}, got {direction}")
        self._cursor += 1
        return entry

    def send(self, message: dict) -> bytes:
        entry = self._next("send")
        data = encode_message(message)
        recorded = encode_message(entry["message"])
        if data != recorded:
            raise TransportError(
                f"replay divergence at entry {self._cursor - 1}: message differs from record")
        return data

    def recv(self) -> tuple[dict, bytes]:
        entry = self._next("recv")
        data = encode_message(entry["message"])
        return decode_line(data), data

    def close(self) -> None:
        pass
