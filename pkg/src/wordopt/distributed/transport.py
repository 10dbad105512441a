"""Transports between a master hub and its workers.

A hub addresses workers by endpoint name; each worker sees a single
channel back to the hub. Two implementations share the contract: queues
inside one process, and framed messages over TCP stream sockets.
"""

from __future__ import annotations

import queue
import socket
import threading
from typing import Optional

from .wire import Kind, Message, TransportError, encode_frame, format_address, parse_address, read_message

_CLOSED = object()


class Channel:
    """Worker side: one bidirectional link to the hub."""

    def send(self, msg: Message) -> None:
        raise NotImplementedError

    def recv(self, timeout: Optional[float] = None) -> Optional[Message]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class Hub:
    """Master side: named endpoints, per-endpoint send, fan-in receive."""

    def endpoints(self) -> list:
        raise NotImplementedError

    def send(self, endpoint: str, msg: Message) -> None:
        raise NotImplementedError

    def recv(self, timeout: Optional[float] = None) -> Optional[Message]:
        """Next message from any worker (``sender`` set), or None on timeout."""
        raise NotImplementedError

    def broadcast(self, msg: Message) -> None:
        for ep in self.endpoints():
            self.send(ep, msg)

    def ping_all(self, timeout: float = 5.0) -> set:
        """Endpoints that answer a HEARTBEAT within ``timeout``."""
        self.broadcast(Message(Kind.HEARTBEAT, 0))
        alive = set()
        want = set(self.endpoints())
        while alive != want:
            msg = self.recv(timeout)
            if msg is None:
                break
            if msg.kind == Kind.HEARTBEAT:
                alive.add(msg.sender)
        return alive

    def shutdown_workers(self) -> None:
        for ep in self.endpoints():
            try:
                self.send(ep, Message(Kind.SHUTDOWN, 0))
            except TransportError:
                pass

    def close(self) -> None:
        pass


class _QueueChannel(Channel):
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, name: str):
        self.inbox = inbox
        self.outbox = outbox
        self.name = name

    def send(self, msg):
        self.outbox.put(Message(msg.kind, msg.job_id, bytes(msg.payload), self.name))

    def recv(self, timeout=None):
        try:
            msg = self.inbox.get(timeout=timeout)
        except queue.Empty:
            return None
        if msg is _CLOSED:
            raise TransportError("channel closed")
        return msg


class InProcessHub(Hub):
    """Workers are threads in this process, linked by queues."""

    def __init__(self):
        self._fanin = queue.Queue()
        self._inboxes = {}
        self._threads = []

    def add_endpoint(self, name: str) -> Channel:
        inbox = queue.Queue()
        self._inboxes[name] = inbox
        return _QueueChannel(inbox, self._fanin, name)

    def start_workers(self, count: int, handlers=None, prefix: str = "w") -> "InProcessHub":
        from .master import worker_loop

        for i in range(count):
            ch = self.add_endpoint(f"{prefix}{i}")
            t = threading.Thread(target=worker_loop, args=(ch, handlers), daemon=True, name=f"worker-{prefix}{i}")
            t.start()
            self._threads.append(t)
        return self

    def endpoints(self):
        return list(self._inboxes)

    def send(self, endpoint, msg):
        try:
            box = self._inboxes[endpoint]
        except KeyError:
            raise TransportError(f"unknown endpoint {endpoint!r}") from None
        box.put(Message(msg.kind, msg.job_id, bytes(msg.payload), "master"))

    def recv(self, timeout=None):
        try:
            return self._fanin.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self):
        self.shutdown_workers()
        for t in self._threads:
            t.join(timeout=5)
        for box in self._inboxes.values():
            box.put(_CLOSED)


class SocketChannel(Channel):
    def __init__(self, sock: socket.socket, name: str = ""):
        self.sock = sock
        self.name = name
        self._lock = threading.Lock()

    @classmethod
    def connect(cls, addr: str, name: str = "", timeout: float = 10.0) -> "SocketChannel":
        sock = socket.create_connection(parse_address(addr), timeout=timeout)
        sock.settimeout(None)
        return cls(sock, name)

    def send(self, msg):
        data = encode_frame(msg)
        with self._lock:
            try:
                self.sock.sendall(data)
            except OSError as exc:
                raise TransportError(f"send failed: {exc}") from exc

    def recv(self, timeout=None):
        self.sock.settimeout(timeout)
        try:
            return read_message(self.sock, self.name)
        except socket.timeout:
            return None
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        finally:
            try:
                self.sock.settimeout(None)
            except OSError:
                pass

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class SocketHub(Hub):
    """Listens on a TCP address; workers connect in and announce a name with a HEARTBEAT."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._server = socket.create_server((host, port))
        self.address = format_address(self._server.getsockname()[:2])
        self._fanin = queue.Queue()
        self._conns = {}
        self._readers = []

    def accept(self, count: int, timeout: float = 30.0) -> "SocketHub":
        self._server.settimeout(timeout)
        for _ in range(count):
            try:
                sock, _ = self._server.accept()
            except socket.timeout:
                raise TransportError(f"only {len(self._conns)} of {count} workers connected") from None
            sock.settimeout(timeout)
            hello = read_message(sock)
            sock.settimeout(None)
            if hello.kind != Kind.HEARTBEAT:
                sock.close()
                raise TransportError(f"expected HEARTBEAT hello, got {hello.kind.name}")
            name = hello.payload.decode() or f"w{len(self._conns)}"
            ch = SocketChannel(sock, name)
            self._conns[name] = ch
            t = threading.Thread(target=self._pump, args=(ch,), daemon=True)
            t.start()
            self._readers.append(t)
        return self

    def _pump(self, ch: SocketChannel):
        while True:
            try:
                msg = read_message(ch.sock, ch.name)
            except (TransportError, OSError) as exc:
                self._fanin.put(Message(Kind.ERROR, 0, f"transport: {exc}".encode(), ch.name))
                return
            self._fanin.put(msg)

    def endpoints(self):
        return sorted(self._conns)

    def send(self, endpoint, msg):
        try:
            ch = self._conns[endpoint]
        except KeyError:
            raise TransportError(f"unknown endpoint {endpoint!r}") from None
        ch.send(msg)

    def recv(self, timeout=None):
        try:
            return self._fanin.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self):
        self.shutdown_workers()
        for ch in self._conns.values():
            ch.close()
        self._server.close()


def join(addr: str, name: str, handlers=None) -> int:
    """Connect to a hub at ``addr`` and serve tasks until SHUTDOWN."""
    from .master import worker_loop

    ch = SocketChannel.connect(addr, name)
    ch.send(Message(Kind.HEARTBEAT, 0, name.encode()))
    try:
        return worker_loop(ch, handlers)
    finally:
        ch.close()
