"""Wiring between the simulator's E2 nodes and the RIC.

The simulator runs in lockstep with the RIC: after sending a window's KPM
indications, each node reads until the RIC's ``WINDOW_DONE`` ack. The same
bytes flow whether the RIC is embedded (in-memory streams) or remote (TCP).
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass, field

from .e2lite import (
    AckStatus, ControlAck, E2Error, E2Message, EndpointBinding, KpmIndication, RicControl,
    StreamReassembler, SubscriptionAck, SubscriptionRequest, encode_message, validate_bindings,
    wall_timestamp_ms,
)
from .ric.service import RicService
from .sim.world import SimError, World, advance_window, collect_reports, execute_handover

log = logging.getLogger("ts_sandbox.runner")


class TransportError(RuntimeError):
    pass


class EmbeddedTransport:
    """In-memory byte streams straight into a :class:`RicService`."""

    def __init__(self, ric: RicService):
        self.ric = ric
        self._ric_rx: dict[int, StreamReassembler] = {}
        self._inbox: dict[int, bytearray] = {}

    def connect(self, node_id: int) -> None:
        self._ric_rx[node_id] = StreamReassembler()
        self._inbox[node_id] = bytearray()
        self._deliver(self.ric.connect(node_id))

    def _deliver(self, out) -> None:
        for node_id, msg in out:
            self._inbox[node_id] += encode_message(msg)

    def send(self, node_id: int, data: bytes) -> None:
        for msg in self._ric_rx[node_id].feed(data):
            self._deliver(self.ric.handle(node_id, msg))

    def recv(self, node_id: int) -> bytes:
        data = bytes(self._inbox[node_id])
        if not data:
            raise TransportError(f"node {node_id} waits for data the RIC never sent")
        self._inbox[node_id].clear()
        return data

    def close(self) -> None:
        pass


class TcpTransport:
    """One TCP connection per node, each from the node's own bound local port."""

    def __init__(self, ric_host: str, ric_port: int, bindings: list[EndpointBinding],
                 timeout_s: float = 60.0):
        validate_bindings(bindings)
        self.ric_addr = (ric_host, ric_port)
        self.bindings = {b.node_id: b for b in bindings}
        self.timeout_s = timeout_s
        self._socks: dict[int, socket.socket] = {}

    def connect(self, node_id: int) -> None:
        b = self.bindings[node_id]
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        s.settimeout(self.timeout_s)
        try:
            s.bind((b.address, b.port))
            s.connect(self.ric_addr)
        except OSError as exc:
            s.close()
            raise TransportError(f"node {node_id} cannot connect from port {b.port} to "
                                 f"{self.ric_addr[0]}:{self.ric_addr[1]}: {exc}") from exc
        self._socks[node_id] = s

    def send(self, node_id: int, data: bytes) -> None:
        self._socks[node_id].sendall(data)

    def recv(self, node_id: int) -> bytes:
        data = self._socks[node_id].recv(1 << 16)
        if not data:
            raise TransportError(f"RIC closed the connection of node {node_id}")
        return data

    def close(self) -> None:
        for s in self._socks.values():
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
        self._socks.clear()


@dataclass
class _Node:
    node_id: int
    rx: StreamReassembler = field(default_factory=StreamReassembler)
    subscribed: bool = False
    sent: bytearray = field(default_factory=bytearray)
    received: bytearray = field(default_factory=bytearray)


class SimDriver:
    """Runs a :class:`World` behind one E2 endpoint per cell."""

    def __init__(self, world: World, transport, base_unix_ms: int | None = None,
                 capture: bool = False):
        self.world = world
        self.transport = transport
        self.base_unix_ms = int(time.time() * 1000) if base_unix_ms is None else base_unix_ms
        self.capture = capture
        self.nodes = {cid: _Node(cid) for cid in sorted(world.cell_index)}
        self.controls_executed = 0
        self.controls_rejected = 0
        self.last_timestamp: dict[int, int] = {}

    def _now(self) -> int:
        return wall_timestamp_ms(self.base_unix_ms, self.world.time_ms)

    def _send(self, node: _Node, payload) -> None:
        ts = self._now()
        if ts < self.last_timestamp.get(node.node_id, 0):
            raise TransportError("endpoint timestamps went backwards")
        self.last_timestamp[node.node_id] = ts
        data = encode_message(E2Message(node.node_id, ts, payload))
        if self.capture:
            node.sent += data
        self.transport.send(node.node_id, data)

    def _recv(self, node: _Node) -> list[E2Message]:
        data = self.transport.recv(node.node_id)
        if self.capture:
            node.received += data
        return node.rx.feed(data)

    def _handle(self, node: _Node, msg: E2Message) -> bool:
        """Process one inbound message; True when it closes the current window."""
        p = msg.payload
        if isinstance(p, SubscriptionRequest):
            node.subscribed = True
            self._send(node, SubscriptionAck())
        elif isinstance(p, RicControl):
            self._execute(node, p)
        elif isinstance(p, ControlAck) and p.status is AckStatus.WINDOW_DONE:
            return True
        else:
            log.warning("node %d ignoring %s", node.node_id, type(p).__name__)
        return False

    def _execute(self, node: _Node, ctl: RicControl) -> None:
        status = AckStatus.EXECUTED
        try:
            ue = self.world.ue(ctl.ue_id)
            if ue.serving_nr_cell != node.node_id:
                raise SimError(f"UE {ctl.ue_id} is not served by node {node.node_id}")
            execute_handover(self.world, ctl.ue_id, ctl.target_cell_id)
        except SimError as exc:
            log.warning("rejecting control %s: %s", ctl, exc)
            status = AckStatus.REJECTED
            self.controls_rejected += 1
        else:
            self.controls_executed += 1
        self._send(node, ControlAck(ctl.ue_id, ctl.target_cell_id, status))

    def start(self) -> None:
        for node in self.nodes.values():
            self.transport.connect(node.node_id)
        for node in self.nodes.values():
            while not node.subscribed:
                for msg in self._recv(node):
                    self._handle(node, msg)

    def run_window(self) -> None:
        advance_window(self.world)
        reports = {r.node_id: r for r in collect_reports(self.world)}
        active = [n for n in self.nodes.values() if n.subscribed]
        for node in active:
            self._send(node, KpmIndication(reports[node.node_id]))
        for node in active:
            done = False
            while not done:
                for msg in self._recv(node):
                    done = self._handle(node, msg) or done

    def run(self) -> World:
        self.start()
        try:
            while not self.world.duration_done:
                self.run_window()
        finally:
            self.transport.close()
        return self.world


class RicServer:
    """TCP front end of a :class:`RicService`; nodes are identified by source port."""

    def __init__(self, ric: RicService, host: str, port: int, bindings: list[EndpointBinding]):
        self.ric = ric
        self.by_port = validate_bindings(bindings)
        self._lock = threading.Lock()
        self._conns: dict[int, socket.socket] = {}
        self._threads: list[threading.Thread] = []
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(len(self.by_port) + 4)
        self.host, self.port = self._sock.getsockname()[:2]
        self._closed = threading.Event()
        self._active = 0
        self._seen = 0
        self.errors: list[str] = []

    def serve_forever(self, until_idle: bool = True) -> None:
        """Accept nodes; with ``until_idle`` return once every connected node has left."""
        self._sock.settimeout(0.2)
        try:
            while not self._closed.is_set():
                try:
                    conn, peer = self._sock.accept()
                except socket.timeout:
                    with self._lock:
                        if until_idle and self._seen and not self._active:
                            return
                    continue
                self._accept(conn, peer)
        finally:
            self._sock.close()
            for t in self._threads:
                t.join(timeout=5)

    def start_background(self, until_idle: bool = True) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, args=(until_idle,), daemon=True)
        t.start()
        return t

    def shutdown(self) -> None:
        self._closed.set()

    def _accept(self, conn: socket.socket, peer) -> None:
        binding = self.by_port.get(peer[1])
        if binding is None:
            log.warning("rejecting connection from unbound port %s", peer[1])
            conn.close()
            return
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn.settimeout(None)
        with self._lock:
            self._conns[binding.node_id] = conn
            self._active += 1
            self._seen += 1
            self._send(self.ric.connect(binding.node_id))
        t = threading.Thread(target=self._serve_conn, args=(binding.node_id, conn), daemon=True)
        self._threads.append(t)
        t.start()

    def _send(self, out) -> None:
        for node_id, msg in out:
            conn = self._conns.get(node_id)
            if conn is None:
                log.warning("no connection for node %d; dropping %s", node_id, msg.msg_type.name)
                continue
            conn.sendall(encode_message(msg))

    def _serve_conn(self, node_id: int, conn: socket.socket) -> None:
        rx = StreamReassembler()
        try:
            while True:
                data = conn.recv(1 << 16)
                if not data:
                    break
                for msg in rx.feed(data):
                    with self._lock:
                        self._send(self.ric.handle(node_id, msg))
        except (OSError, E2Error) as exc:
            self.errors.append(f"node {node_id}: {exc!r}")
            log.warning("connection of node %d failed: %r", node_id, exc)
        finally:
            conn.close()
            with self._lock:
                self._conns.pop(node_id, None)
                self._active -= 1
