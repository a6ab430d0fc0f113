import socket

import pytest

from ts_sandbox.e2lite import RicControl, StreamReassembler, default_bindings
from ts_sandbox.experiment import make_ric
from ts_sandbox.policies import resolve_policy
from ts_sandbox.runner import (
    EmbeddedTransport, RicServer, SimDriver, TcpTransport, TransportError,
)
from ts_sandbox.sim import Band, SimConfig, World

BASE = 1_700_000_000_000


def cfg(**kw):
    base = dict(n_ues=10, sim_duration_ms=2000, seed=8)
    base.update(kw)
    return SimConfig.for_band(Band.LOW850, **base)


def embedded(config, policy="rrm"):
    w = World(config)
    ric = make_ric(resolve_policy(policy, config.seed), w)
    d = SimDriver(w, EmbeddedTransport(ric), BASE, capture=True)
    d.run()
    return d, ric


def free_port_block(n):
    for base in range(42000, 60000, 97):
        socks = []
        try:
            for i in range(n):
                s = socket.socket()
                s.bind(("127.0.0.1", base + i))
                socks.append(s)
            return base
        except OSError:
            continue
        finally:
            for s in socks:
                s.close()
    raise RuntimeError("no free port block")


def test_embedded_and_tcp_identical_bytes():
    c = cfg()
    d1, _ = embedded(c)
    w2 = World(c)
    ric2 = make_ric(resolve_policy("rrm", c.seed), w2)
    bindings = default_bindings(sorted(w2.cell_index), free_port_block(8))
    srv = RicServer(ric2, "127.0.0.1", 0, bindings)
    th = srv.start_background()
    d2 = SimDriver(w2, TcpTransport("127.0.0.1", srv.port, bindings), BASE, capture=True)
    d2.run()
    th.join(10)
    assert not th.is_alive() and srv.errors == []
    for n in d1.nodes:
        assert d1.nodes[n].sent == d2.nodes[n].sent
        assert d1.nodes[n].received == d2.nodes[n].received
    assert d1.world.state_digest() == w2.state_digest()
    assert d1.controls_executed == d2.controls_executed > 0


def test_timestamps_nondecreasing_per_endpoint():
    d, _ = embedded(cfg())
    for node in d.nodes.values():
        msgs = StreamReassembler().feed(bytes(node.sent))
        ts = [m.timestamp_ms for m in msgs]
        assert ts == sorted(ts) and ts[0] >= BASE
        assert all(m.node_id == node.node_id for m in msgs)


def test_controls_only_to_serving_node_and_all_executed():
    d, ric = embedded(cfg())
    assert d.controls_rejected == 0
    assert d.controls_executed == ric.stats.controls
    hos = [e for e in d.world.events if e[2] == "handover"]
    assert len(hos) == d.controls_executed
    for node in d.nodes.values():
        for m in StreamReassembler().feed(bytes(node.received)):
            assert m.node_id == node.node_id
            if isinstance(m.payload, RicControl):
                assert node.node_id != 0


def test_control_latency_bounded():
    _, ric = embedded(cfg())
    assert ric.stats.latencies_s
    assert ric.stats.max_latency_s < 0.1  # well inside the 100 ms loop


def test_embedded_recv_without_data_raises():
    w = World(cfg())
    t = EmbeddedTransport(make_ric(resolve_policy("rrm"), w))
    t.connect(1)
    t.recv(1)  # the pending subscription request
    with pytest.raises(TransportError):
        t.recv(1)


def test_tcp_port_conflict_reported():
    base = free_port_block(8)
    blocker = socket.socket()
    blocker.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    blocker.bind(("127.0.0.1", base + 1))
    blocker.listen()
    try:
        w = World(cfg())
        srv = RicServer(make_ric(resolve_policy("rrm"), w), "127.0.0.1", 0,
                        default_bindings(sorted(w.cell_index), base))
        th = srv.start_background()
        t = TcpTransport("127.0.0.1", srv.port, default_bindings(sorted(w.cell_index), base),
                         timeout_s=5)
        with pytest.raises((TransportError, OSError)):
            for n in sorted(w.cell_index):
                t.connect(n)
        t.close()
        srv.shutdown()
        th.join(5)
    finally:
        blocker.close()
