"""Broker behavior: matching, ACL soundness, latency accounting, load, threads."""

import threading

import numpy as np
import pytest

from petfabric.fabric import (
    AclDeniedError,
    AclTable,
    Broker,
    Envelope,
    LatencyModel,
    MalformedTopicError,
    RunRecord,
    Scheme,
    UnknownClientError,
    LATENCY_PRESETS,
    PUBLISH,
    SUBSCRIBE,
    topic_matches,
    validate_filter,
    validate_topic,
)


def env_for(topic, value=1, sensor="s1", seq=0):
    return Envelope(
        topic=topic, sensor_id=sensor, sequence=seq, scheme=Scheme.RAW, value=value
    )


# -- topic grammar -----------------------------------------------------------

@pytest.mark.parametrize(
    "pattern,topic,expected",
    [
        ("cabin/seat/+/weight", "cabin/seat/12A/weight", True),
        ("cabin/seat/+/weight", "cabin/seat/12A/temp", False),
        ("cabin/seat/+/weight", "cabin/seat/weight", False),
        ("cabin/#", "cabin/seat/12A/weight", True),
        ("cabin/#", "cabin", True),  # '#' also covers the parent level
        ("cabin/#", "galley/oven", False),
        ("#", "anything/at/all", True),
        ("a/+", "a/b", True),
        ("a/+", "a", False),
        ("a/+", "a/", True),  # '+' matches an empty level
        ("a/b", "a/b", True),
        ("a/b", "a/b/c", False),
        ("+/+", "a/b", True),
    ],
)
def test_topic_matching(pattern, topic, expected):
    assert topic_matches(pattern, topic) is expected


def test_topic_validation():
    validate_topic("cabin/seat/12A/weight")
    for bad in ["", "cabin/+/x", "cabin/#", "with\x00nul"]:
        with pytest.raises(MalformedTopicError):
            validate_topic(bad)
    validate_filter("cabin/+/weight")
    validate_filter("cabin/#")
    validate_filter("#")
    for bad in ["", "cabin/#/x", "cabin/a#", "cabin/a+b", "x\x00"]:
        with pytest.raises(MalformedTopicError):
            validate_filter(bad)


# -- ACL ----------------------------------------------------------------------

def test_acl_deny_by_default():
    broker = Broker(acl=AclTable(), latency=LatencyModel(1.0))
    broker.register_client("pub")
    broker.register_client("sub")
    with pytest.raises(AclDeniedError):
        broker.subscribe("sub", "cabin/#")
    with pytest.raises(AclDeniedError):
        broker.publish("pub", env_for("cabin/a/b/c"))
    events = [r.event for r in broker.audit_log]
    assert "subscribe-denied" in events and "publish-denied" in events


def test_acl_grants_and_wildcard_client():
    acl = AclTable()
    acl.allow("pub", "cabin/data/#", PUBLISH)
    acl.allow("*", "cabin/#", SUBSCRIBE)
    broker = Broker(acl=acl, latency=LatencyModel(1.0))
    for c in ("pub", "anyone"):
        broker.register_client(c)
    sub = broker.subscribe("anyone", "cabin/data/+")
    receipt = broker.publish("pub", env_for("cabin/data/x"))
    assert [d.subscriber for d in receipt.deliveries] == ["anyone"]
    assert sub.messages[0].envelope.value == 1
    with pytest.raises(AclDeniedError):
        broker.publish("pub", env_for("galley/data/x"))


def test_unknown_client():
    broker = Broker(acl=AclTable.permissive())
    with pytest.raises(UnknownClientError):
        broker.publish("ghost", env_for("a/b"))
    with pytest.raises(UnknownClientError):
        broker.subscribe("ghost", "a/#")


def test_delivery_rechecks_acl_per_topic():
    # the subscribe-time grant is necessary but not sufficient: if the table
    # later stops covering a topic, delivery is refused and audited
    acl = AclTable.permissive()
    broker = Broker(acl=acl, latency=LatencyModel(1.0))
    broker.register_client("pub")
    broker.register_client("sub")
    sub = broker.subscribe("sub", "#")
    broker.acl = AclTable()  # revoke everything
    broker.acl.allow("pub", "#", PUBLISH)
    receipt = broker.publish("pub", env_for("cabin/x"))
    assert receipt.deliveries == ()
    assert sub.messages == []
    assert "deliver-denied" in [r.event for r in broker.audit_log]


def test_audit_soundness_every_delivery_was_permitted():
    acl = AclTable()
    acl.allow("p", "cabin/#", PUBLISH)
    acl.allow("c1", "cabin/a/#", SUBSCRIBE)
    acl.allow("c2", "cabin/#", SUBSCRIBE)
    broker = Broker(acl=acl, latency=LatencyModel(1.0))
    for c in ("p", "c1", "c2"):
        broker.register_client(c)
    broker.subscribe("c1", "cabin/a/#")
    broker.subscribe("c2", "cabin/#")
    rng = np.random.default_rng(5)
    for i in range(50):
        topic = f"cabin/{'a' if rng.random() < 0.5 else 'b'}/t{i}"
        broker.publish("p", env_for(topic, seq=i))
    deliveries = [r for r in broker.audit_log if r.event == "deliver"]
    assert deliveries
    for rec in deliveries:
        assert broker.acl.permits_subscribe_topic(rec.client_id, rec.topic)


# -- latency accounting --------------------------------------------------------

def test_two_hop_constant_delay():
    broker = Broker(acl=AclTable.permissive(), latency=LatencyModel(2.0))
    broker.register_client("p")
    broker.register_client("c")
    broker.subscribe("c", "t/#")
    receipt = broker.publish("p", env_for("t/x"))
    assert receipt.publish_delay_ms == 2.0
    assert receipt.deliveries[0].path_ms == 4.0  # 2 hops x 2 ms


def test_relay_chain_totals_twelve_hops():
    # five relays re-publishing: 1 publish + 5 x (deliver + publish) + 1 deliver
    d = 3.88
    broker = Broker(acl=AclTable.permissive(), latency=LatencyModel(d))
    names = ["source"] + [f"relay{i}" for i in range(1, 6)] + ["sink"]
    for n in names:
        broker.register_client(n)
    subs = [broker.subscribe(f"relay{i}", f"chain/leg{i-1}") for i in range(1, 6)]
    sink = broker.subscribe("sink", "chain/leg5")

    legs = []
    receipt = broker.publish("source", env_for("chain/leg0"))
    for i in range(1, 6):
        legs.extend([receipt.publish_delay_ms, receipt.deliveries[0].delivery_delay_ms])
        inbound = subs[i - 1].pop_all()[0].envelope
        forward = Envelope(
            topic=f"chain/leg{i}",
            sensor_id=inbound.sensor_id,
            sequence=inbound.sequence,
            scheme=inbound.scheme,
            value=inbound.value,
            timestamp_us=inbound.timestamp_us,
        )
        receipt = broker.publish(f"relay{i}", forward)
    legs.extend([receipt.publish_delay_ms, receipt.deliveries[0].delivery_delay_ms])

    assert len(legs) == 12
    assert sum(legs) == pytest.approx(12 * d)
    assert len(sink.messages) == 1


def test_per_publisher_fifo_order():
    broker = Broker(acl=AclTable.permissive(), latency=LatencyModel(0.5))
    for c in ("a", "b", "sub"):
        broker.register_client(c)
    sub = broker.subscribe("sub", "t/#")
    for i in range(20):
        broker.publish("a", env_for("t/a", sensor="a", seq=i))
        broker.publish("b", env_for("t/b", sensor="b", seq=i))
    for sensor in ("a", "b"):
        seqs = [d.envelope.sequence for d in sub.messages if d.envelope.sensor_id == sensor]
        assert seqs == sorted(seqs) == list(range(20))


def test_no_delivery_on_non_matching_topic():
    broker = Broker(acl=AclTable.permissive(), latency=LatencyModel(1.0))
    broker.register_client("p")
    broker.register_client("c")
    sub = broker.subscribe("c", "cabin/seat/+/weight")
    receipt = broker.publish("p", env_for("cabin/galley/oven/temp"))
    assert receipt.deliveries == () and sub.messages == []


def test_gaussian_hops_never_negative():
    model = LatencyModel(0.1, 5.0, "gaussian")  # mostly negative raw draws
    rng = np.random.default_rng(11)
    draws = [model.sample_hop_ms(rng) for _ in range(2000)]
    assert min(draws) >= 0.0


def test_latency_model_validation():
    with pytest.raises(ValueError):
        LatencyModel(-1.0)
    with pytest.raises(ValueError):
        LatencyModel(1.0, -0.5, "gaussian")
    with pytest.raises(ValueError):
        LatencyModel(1.0, 0.5, "constant")  # constant cannot carry jitter
    with pytest.raises(ValueError):
        LatencyModel(1.0, 0.0, "pareto")
    assert set(LATENCY_PRESETS) == {"default", "testbed", "wifi-no-powersave", "eth"}
    assert LATENCY_PRESETS["default"].per_hop_mean_ms == 3.88


def test_run_record_additivity():
    rec = RunRecord(
        scenario="x", message_id=0, compute_ms=0.3, hop_delays_ms=(1.0, 2.0), hop_count=2
    )
    assert rec.end_to_end_ms == 0.3 + 1.0 + 2.0


# -- background load ------------------------------------------------------------

def test_inject_load_counts():
    broker = Broker(acl=AclTable(), latency=LatencyModel(1.0))
    report = broker.inject_load(400.0, 10.0)
    assert report.published == 4000
    assert abs(report.delivered - 4000) <= 40  # within 1%
    assert report.delivered == 4000  # the simulated broker loses nothing


def test_inject_load_zero_rate_is_noop():
    broker = Broker(acl=AclTable(), latency=LatencyModel(1.0))
    report = broker.inject_load(0.0, 10.0)
    assert report.published == report.delivered == 0
    assert broker.audit_log == ()


def test_inject_load_rejects_negative():
    broker = Broker(acl=AclTable())
    with pytest.raises(ValueError):
        broker.inject_load(-1.0, 1.0)


# -- concurrency (best-effort wall-clock mode) -----------------------------------

def test_concurrent_publishers_are_serialized():
    broker = Broker(
        acl=AclTable.permissive(),
        latency=LatencyModel(0.2, 0.05, "gaussian"),
        rng=np.random.default_rng(3),
    )
    publishers = [f"p{i}" for i in range(4)]
    for p in publishers + ["sub"]:
        broker.register_client(p)
    sub = broker.subscribe("sub", "load/#")

    def worker(name):
        for i in range(100):
            broker.publish(name, env_for(f"load/{name}", sensor=name, seq=i))

    threads = [threading.Thread(target=worker, args=(p,)) for p in publishers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(sub.messages) == 400
    for p in publishers:
        seqs = [d.envelope.sequence for d in sub.messages if d.envelope.sensor_id == p]
        assert seqs == list(range(100))  # per-publisher FIFO survives contention


def test_wall_clock_mode_timestamps_advance():
    from petfabric.fabric import WallClock

    broker = Broker(acl=AclTable.permissive(), latency=LatencyModel(0.1), clock=WallClock())
    broker.register_client("p")
    broker.register_client("c")
    broker.subscribe("c", "#")
    broker.publish("p", env_for("t/1"))
    broker.publish("p", env_for("t/2"))
    stamps = [r.timestamp_us for r in broker.audit_log]
    assert stamps == sorted(stamps) and stamps[0] > 0


def test_audit_log_dump(tmp_path):
    broker = Broker(acl=AclTable.permissive(), latency=LatencyModel(1.0))
    broker.register_client("p")
    broker.register_client("c")
    broker.subscribe("c", "#")
    broker.publish("p", env_for("t/x"))
    path = tmp_path / "audit.log"
    broker.write_audit_log(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3  # subscribe, publish, deliver
    assert lines[1].split("\t")[:3] == ["publish", "p", "t/x"]
