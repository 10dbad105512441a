"""Worker-pool factory: a standalone service spawning and reaping worker processes.

Control messages use the task-farm wire format on a socket:

* SPAWN, payload ``{"workers": k, "join": "host:port"}`` starts k processes
  running ``wordopt worker join host:port``; the reply is a RESULT carrying
  the pool handle as JSON, or an ERROR.
* HEARTBEAT, payload ``pool_id`` (or empty) refreshes that pool's lease and
  replies with the registry status.
* SHUTDOWN, payload ``pool_id`` releases that pool; an empty payload stops
  the factory after reaping everything.

Pools whose lease is not refreshed within ``ttl`` seconds are reaped.
"""

from __future__ import annotations

import contextlib
import json
import socket
import subprocess
import sys
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from typing import Optional

from ..logs import get_logger
from .transport import SocketChannel
from .wire import Kind, Message, TransportError, format_address, parse_address, read_message, encode_frame

log = get_logger("factory")

DEFAULT_TTL = 60.0


@dataclass
class PoolHandle:
    pool_id: str
    worker_count: int
    endpoints: list
    pids: list
    join: str
    status: str = "running"

    @classmethod
    def from_json(cls, data: bytes) -> "PoolHandle":
        return cls(**json.loads(data.decode("utf-8")))


@dataclass
class _Pool:
    handle: PoolHandle
    procs: list
    lease: float = field(default_factory=time.monotonic)


def worker_command(join: str, name: str) -> list:
    return [sys.executable, "-m", "wordopt", "worker", "join", join, "--name", name]


class FactoryServer:
    def __init__(self, addr: str = "127.0.0.1:0", ttl: float = DEFAULT_TTL, reap_interval: float = 1.0,
                 grace: float = 5.0):
        self._server = socket.create_server(parse_address(addr))
        self.address = format_address(self._server.getsockname()[:2])
        self.ttl = ttl
        self.reap_interval = reap_interval
        self.grace = grace
        self.pools = {}
        self._lock = threading.Lock()  # serializes SPAWN and registry changes
        self._stop = threading.Event()
        self._threads = []

    # registry

    def spawn(self, workers: int, join: str) -> PoolHandle:
        if workers < 1:
            raise ValueError("a pool needs at least one worker")
        parse_address(join)
        with self._lock:
            pool_id = uuid.uuid4().hex[:8]
            names = [f"{pool_id}-{i}" for i in range(workers)]
            procs = []
            try:
                for name in names:
                    procs.append(subprocess.Popen(worker_command(join, name), stdin=subprocess.DEVNULL))
            except OSError:
                for p in procs:
                    _terminate(p, self.grace)
                raise
            handle = PoolHandle(pool_id, workers, names, [p.pid for p in procs], join)
            self.pools[pool_id] = _Pool(handle, procs)
        log.info("spawned pool %s: %d workers joining %s", pool_id, workers, join)
        return handle

    def release(self, pool_id: str) -> bool:
        with self._lock:
            pool = self.pools.pop(pool_id, None)
        if pool is None:
            return False
        for p in pool.procs:
            _terminate(p, self.grace)
        pool.handle.status = "released"
        log.info("released pool %s", pool_id)
        return True

    def heartbeat(self, pool_id: str = "") -> dict:
        with self._lock:
            if pool_id in self.pools:
                self.pools[pool_id].lease = time.monotonic()
            return self.status()

    def status(self) -> dict:
        out = {}
        for pid, pool in self.pools.items():
            live = sum(p.poll() is None for p in pool.procs)
            out[pid] = {"workers": pool.handle.worker_count, "live": live}
        return {"address": self.address, "pools": out}

    def reap(self) -> list:
        """Release pools whose lease expired or whose workers have all exited."""
        now = time.monotonic()
        with self._lock:
            doomed = [pid for pid, pool in self.pools.items()
                      if now - pool.lease > self.ttl or all(p.poll() is not None for p in pool.procs)]
        for pid in doomed:
            self.release(pid)
        return doomed

    # service

    def start(self) -> "FactoryServer":
        for target in (self._accept_loop, self._reaper):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        log.info("factory listening on %s", self.address)
        return self

    def serve_forever(self) -> None:
        self.start()
        try:
            self._stop.wait()
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        try:
            self._server.close()
        except OSError:
            pass
        for pid in list(self.pools):
            self.release(pid)

    def _reaper(self):
        while not self._stop.wait(self.reap_interval):
            self.reap()

    def _accept_loop(self):
        self._server.settimeout(0.5)
        while not self._stop.is_set():
            try:
                sock, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.settimeout(None)
            threading.Thread(target=self._serve_client, args=(sock,), daemon=True).start()

    def _serve_client(self, sock):
        with sock:
            while not self._stop.is_set():
                try:
                    msg = read_message(sock)
                except (TransportError, OSError):
                    return
                reply = self.handle(msg)
                try:
                    sock.sendall(encode_frame(reply))
                except OSError:
                    return

    def handle(self, msg: Message) -> Message:
        try:
            if msg.kind == Kind.SPAWN:
                req = json.loads(msg.payload.decode("utf-8"))
                handle = self.spawn(int(req["workers"]), str(req["join"]))
                return Message(Kind.RESULT, msg.job_id, json.dumps(asdict(handle)).encode())
            if msg.kind == Kind.HEARTBEAT:
                return Message(Kind.HEARTBEAT, msg.job_id, json.dumps(self.heartbeat(msg.payload.decode())).encode())
            if msg.kind == Kind.SHUTDOWN:
                pool_id = msg.payload.decode()
                if pool_id:
                    ok = self.release(pool_id)
                    return Message(Kind.RESULT, msg.job_id, json.dumps({"released": ok}).encode())
                threading.Thread(target=self.stop, daemon=True).start()
                return Message(Kind.RESULT, msg.job_id, b'{"stopping": true}')
            return Message(Kind.ERROR, msg.job_id, f"factory does not handle {msg.kind.name}".encode())
        except Exception as exc:
            log.error("request failed: %s", exc, extra={"job_id": msg.job_id})
            return Message(Kind.ERROR, msg.job_id, f"{type(exc).__name__}: {exc}".encode())


def _terminate(proc, grace: float) -> None:
    if proc.poll() is not None:
        return
    proc.terminate()
    try:
        proc.wait(grace)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()


class FactoryClient:
    """Control-channel client; one request/reply at a time."""

    def __init__(self, addr: str, timeout: float = 30.0):
        self.channel = SocketChannel.connect(addr, "factory", timeout)
        self.timeout = timeout
        self._lock = threading.Lock()

    def _call(self, msg: Message) -> Message:
        with self._lock:
            self.channel.send(msg)
            reply = self.channel.recv(self.timeout)
        if reply is None:
            raise TransportError("factory did not answer")
        if reply.kind == Kind.ERROR:
            raise TransportError(f"factory error: {reply.payload.decode(errors='replace')}")
        return reply

    def spawn(self, workers: int, join: str) -> PoolHandle:
        reply = self._call(Message(Kind.SPAWN, 0, json.dumps({"workers": workers, "join": join}).encode()))
        return PoolHandle.from_json(reply.payload)

    def heartbeat(self, pool_id: str = "") -> dict:
        return json.loads(self._call(Message(Kind.HEARTBEAT, 0, pool_id.encode())).payload)

    def release(self, pool_id: str) -> bool:
        return json.loads(self._call(Message(Kind.SHUTDOWN, 0, pool_id.encode())).payload)["released"]

    def stop_factory(self) -> None:
        self._call(Message(Kind.SHUTDOWN, 0, b""))

    def close(self) -> None:
        self.channel.close()


@contextlib.contextmanager
def remote_pool(factory_addr: str, workers: int, host: str = "127.0.0.1", accept_timeout: float = 60.0,
                keepalive: Optional[float] = 10.0):
    """Open a SocketHub, have the factory spawn ``workers`` into it, yield the hub.

    The pool lease is refreshed every ``keepalive`` seconds and the pool is
    released on exit.
    """
    from .transport import SocketHub

    hub = SocketHub(host)
    client = FactoryClient(factory_addr)
    handle = None
    stop = threading.Event()
    try:
        handle = client.spawn(workers, hub.address)
        hub.accept(workers, timeout=accept_timeout)
        if keepalive:
            def beat():
                while not stop.wait(keepalive):
                    try:
                        client.heartbeat(handle.pool_id)
                    except TransportError:
                        return
            threading.Thread(target=beat, daemon=True).start()
        yield hub
    finally:
        stop.set()
        hub.close()
        if handle is not None:
            try:
                client.release(handle.pool_id)
            except TransportError as exc:
                log.warning("release of %s failed: %s", handle.pool_id, exc)
        client.close()
