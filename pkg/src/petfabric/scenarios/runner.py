"""Executes scenario message flows on the simulated fabric.

Each repetition is fully independent: it gets its own broker, clients and
seeded generator (seed = master_seed + repetition index), so repetitions can
be sharded across workers and merged by index without changing a single
sampled value. Within a repetition the draw order is fixed: background
filler first (when configured), then sensor data, then loss injection, then
per-sensor privacy randomness and transport legs in (sensor, channel) order.

Latency bookkeeping is additive by construction: a RunRecord's end-to-end
time is its compute time plus the sampled delays of the hops on the
critical path. Structural hop counts per topology:

    on-device (raw/ldp/krr/gdp)   2 hops   (publish + delivery)
    on-device ass                 2m hops  (m sequential share round trips)
    virtualized (raw/gdp)         4 hops   (in via broker, out via broker)
    virtualized ass               2 + 2m hops
    relay-chain(depth)            2 + 2*depth hops
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import ass, dp
from ..codec import decode, decode_sum, encode
from ..fabric import (
    AclTable,
    Broker,
    Envelope,
    PublishReceipt,
    RunRecord,
    Scheme,
    VirtualClock,
    PUBLISH,
    SUBSCRIBE,
)
from .config import (
    ON_DEVICE,
    PET_ASS,
    PET_GDP,
    PET_KRR,
    PET_LDP,
    RELAY_CHAIN,
    VIRTUALIZED,
    ScenarioSpec,
)

DATA_TOPIC = "cabin/sim/{sensor}/value"
DATA_FILTER = "cabin/sim/+/value"
SHARE_TOPIC = "cabin/ass/{channel}/value"
SHARE_FILTER = "cabin/ass/+/value"
OUT_TOPIC = "cabin/out/value"
RELAY_TOPIC = "relay/leg{i}"


@dataclass(frozen=True)
class RepOutcome:
    """One repetition's latency record plus what the consumer computed."""

    record: RunRecord
    result: Optional[float]  # consumer-side decoded aggregate
    truth: Optional[float]  # exact real-valued reference for the same quantity
    encoded_result: Optional[int] = None  # ass: reconstructed encoded sum
    encoded_truth: Optional[int] = None  # ass: exact encoded sum
    error: Optional[ass.MissingShareError] = None
    injected_drop: Optional[tuple[str, int]] = None


def expected_hops(spec: ScenarioSpec) -> int:
    """Structural hop count of a scenario's topology."""
    kind = spec.topology.kind
    if kind == RELAY_CHAIN:
        return 2 + 2 * spec.topology.depth
    if kind == ON_DEVICE:
        return 2 * spec.pet.m if spec.pet.kind == PET_ASS else 2
    if spec.pet.kind == PET_ASS:
        return 2 + 2 * spec.pet.m
    return 4


def _draw_values(spec: ScenarioSpec, rng: np.random.Generator) -> list[float]:
    gen = spec.sensors.generator
    n = spec.sensors.count
    if gen.kind == "constant":
        return [float(gen.value)] * n
    lo = gen.low if gen.low is not None else spec.encoding.x_lo
    hi = gen.high if gen.high is not None else spec.encoding.x_hi
    return [float(v) for v in rng.uniform(lo, hi, n)]


def _leg(receipt: PublishReceipt, subscriber: str) -> tuple[float, float]:
    for d in receipt.deliveries:
        if d.subscriber == subscriber:
            return receipt.publish_delay_ms, d.delivery_delay_ms
    raise RuntimeError(f"wiring error: no delivery to {subscriber!r} on {receipt.topic!r}")


def _build_broker(spec: ScenarioSpec, rng: np.random.Generator, rep: int) -> Broker:
    # 1 s of virtual time per repetition keeps audit timestamps distinct
    clock = VirtualClock(start_us=rep * 1_000_000)
    return Broker(acl=AclTable(), latency=spec.latency, rng=rng, clock=clock)


def _run_once(
    spec: ScenarioSpec,
    rep: int,
    rng: np.random.Generator,
    filler_rate: float,
    filler_window_s: float,
) -> RepOutcome:
    broker = _build_broker(spec, rng, rep)
    if filler_rate > 0:
        broker.inject_load(filler_rate, filler_window_s)
    values = _draw_values(spec, rng)
    params = spec.encoding
    encoded = [encode(v, params) for v in values]
    compute = spec.compute_ms + spec.overhead_ms
    kind = spec.topology.kind
    pet = spec.pet

    if kind == RELAY_CHAIN:
        return _run_relay_chain(spec, rep, rng, broker, values[0], encoded[0], compute)
    if pet.kind == PET_ASS:
        return _run_ass(spec, rep, rng, broker, values, encoded, compute)
    if pet.kind == PET_GDP:
        return _run_gdp(spec, rep, rng, broker, values, encoded, compute)
    return _run_plain(spec, rep, rng, broker, values, encoded, compute)


def _run_plain(spec, rep, rng, broker, values, encoded, compute) -> RepOutcome:
    """Raw, ldp or krr flows: every sensor publishes one value."""
    params = spec.encoding
    n = len(values)
    pet = spec.pet
    broker.register_client("consumer")
    for i in range(n):
        broker.register_client(f"s{i}")
        broker.acl.allow(f"s{i}", DATA_TOPIC.format(sensor=f"s{i}"), PUBLISH)
    broker.acl.allow("consumer", DATA_FILTER, SUBSCRIBE)
    if spec.topology.kind == VIRTUALIZED:
        broker.register_client("vnode")
        broker.acl.allow("vnode", DATA_FILTER, SUBSCRIBE)
        broker.acl.allow("vnode", OUT_TOPIC, PUBLISH)
        broker.acl.allow("consumer", OUT_TOPIC, SUBSCRIBE)
        vnode_sub = broker.subscribe("vnode", DATA_FILTER)
    consumer_filter = OUT_TOPIC if spec.topology.kind == VIRTUALIZED else DATA_FILTER
    consumer_sub = broker.subscribe("consumer", consumer_filter)

    if pet.kind == PET_LDP:
        budget = dp.PrivacyBudget.for_sum(pet.epsilon, params.q)
        wire = [dp.ldp_perturb(x, budget, rng) for x in encoded]
        scheme, eps = Scheme.LDP, pet.epsilon
    elif pet.kind == PET_KRR:
        wire = [dp.krr_perturb(x, pet.epsilon, params, rng) for x in encoded]
        scheme, eps = Scheme.KRR, pet.epsilon
    else:
        wire = list(encoded)
        scheme, eps = Scheme.RAW, None

    broker.clock.advance_ms(compute)
    in_legs = []
    for i, value in enumerate(wire):
        env = Envelope(
            topic=DATA_TOPIC.format(sensor=f"s{i}"),
            sensor_id=f"s{i}",
            sequence=rep,
            scheme=scheme,
            value=int(value),
            epsilon=eps,
            timestamp_us=broker.clock.now_us,
        )
        receipt = broker.publish(f"s{i}", env)
        target = "vnode" if spec.topology.kind == VIRTUALIZED else "consumer"
        in_legs.append(_leg(receipt, target))
    critical = max(range(len(in_legs)), key=lambda i: sum(in_legs[i]))
    hop_delays = list(in_legs[critical])
    broker.clock.advance_ms(sum(hop_delays))

    if spec.topology.kind == VIRTUALIZED:
        received = [d.envelope for d in vnode_sub.pop_all()]
        forward = Envelope(
            topic=OUT_TOPIC,
            sensor_id="vnode",
            sequence=rep,
            scheme=scheme,
            value=received[critical].value,
            epsilon=eps,
            timestamp_us=received[critical].timestamp_us,
        )
        receipt = broker.publish("vnode", forward)
        hop_delays.extend(_leg(receipt, "consumer"))
        broker.clock.advance_ms(sum(hop_delays[-2:]))

    consumer_values = [d.envelope.value for d in consumer_sub.pop_all()]
    record = RunRecord(
        scenario=spec.name,
        message_id=rep,
        compute_ms=compute,
        hop_delays_ms=tuple(hop_delays),
        hop_count=expected_hops(spec),
    )
    return RepOutcome(
        record=record,
        result=decode_sum(sum(consumer_values), len(consumer_values), params),
        truth=float(sum(values)),
    )


def _run_gdp(spec, rep, rng, broker, values, encoded, compute) -> RepOutcome:
    params = spec.encoding
    n = len(values)
    pet = spec.pet
    if pet.aggregator == "mean":
        budget = dp.PrivacyBudget.for_mean(pet.epsilon, params.q, n)
        truth = float(sum(values)) / n
    else:
        budget = dp.PrivacyBudget.for_sum(pet.epsilon, params.q)
        truth = float(sum(values))

    broker.register_client("consumer")
    hop_delays: list[float] = []

    if spec.topology.kind == ON_DEVICE:
        # a zonal aggregator collects nearby sensors locally (no hops),
        # privatizes, and publishes the single result
        broker.register_client("aggregator")
        broker.acl.allow("aggregator", OUT_TOPIC, PUBLISH)
        broker.acl.allow("consumer", OUT_TOPIC, SUBSCRIBE)
        consumer_sub = broker.subscribe("consumer", OUT_TOPIC)
        noisy = dp.gdp_aggregate(encoded, budget, pet.aggregator, rng)
        broker.clock.advance_ms(compute)
        env = Envelope(
            topic=OUT_TOPIC,
            sensor_id="aggregator",
            sequence=rep,
            scheme=Scheme.GDP,
            value=round(noisy.value),
            epsilon=pet.epsilon,
            timestamp_us=broker.clock.now_us,
        )
        receipt = broker.publish("aggregator", env)
        hop_delays.extend(_leg(receipt, "consumer"))
    else:
        broker.register_client("vnode")
        for i in range(n):
            broker.register_client(f"s{i}")
            broker.acl.allow(f"s{i}", DATA_TOPIC.format(sensor=f"s{i}"), PUBLISH)
        broker.acl.allow("vnode", DATA_FILTER, SUBSCRIBE)
        broker.acl.allow("vnode", OUT_TOPIC, PUBLISH)
        broker.acl.allow("consumer", OUT_TOPIC, SUBSCRIBE)
        vnode_sub = broker.subscribe("vnode", DATA_FILTER)
        consumer_sub = broker.subscribe("consumer", OUT_TOPIC)
        in_legs = []
        for i, x in enumerate(encoded):
            env = Envelope(
                topic=DATA_TOPIC.format(sensor=f"s{i}"),
                sensor_id=f"s{i}",
                sequence=rep,
                scheme=Scheme.RAW,
                value=x,
                timestamp_us=broker.clock.now_us,
            )
            in_legs.append(_leg(broker.publish(f"s{i}", env), "vnode"))
        critical = max(range(n), key=lambda i: sum(in_legs[i]))
        hop_delays.extend(in_legs[critical])
        broker.clock.advance_ms(sum(hop_delays))
        received = [d.envelope.value for d in vnode_sub.pop_all()]
        noisy = dp.gdp_aggregate(received, budget, pet.aggregator, rng)
        broker.clock.advance_ms(compute)
        env = Envelope(
            topic=OUT_TOPIC,
            sensor_id="vnode",
            sequence=rep,
            scheme=Scheme.GDP,
            value=round(noisy.value),
            epsilon=pet.epsilon,
            timestamp_us=broker.clock.now_us,
        )
        receipt = broker.publish("vnode", env)
        hop_delays.extend(_leg(receipt, "consumer"))

    wire_value = consumer_sub.pop_all()[0].envelope.value
    if pet.aggregator == "mean":
        result = decode(wire_value, params)
    else:
        result = decode_sum(wire_value, n, params)
    record = RunRecord(
        scenario=spec.name,
        message_id=rep,
        compute_ms=compute,
        hop_delays_ms=tuple(hop_delays),
        hop_count=expected_hops(spec),
    )
    return RepOutcome(record=record, result=result, truth=truth)


def _publish_shares(
    rep, broker, publisher, bundle, drop
) -> tuple[list[tuple[float, float]], list[Envelope]]:
    """Publish one bundle's shares to their channels; returns per-channel legs
    and the envelopes that actually reached the consumer."""
    legs = []
    arrived = []
    for ch, share in enumerate(bundle.shares, start=1):
        env = Envelope(
            topic=SHARE_TOPIC.format(channel=ch),
            sensor_id=bundle.sensor_id,
            sequence=rep,
            scheme=Scheme.ASS_SHARE,
            value=share,
            share_index=ch,
            timestamp_us=broker.clock.now_us,
        )
        receipt = broker.publish(publisher, env)
        legs.append(_leg(receipt, "consumer"))
        if drop == (bundle.sensor_id, ch):
            continue  # lost between broker and subscriber
        arrived.append(env)
    return legs, arrived


def _collect_bundles(envelopes, sensor_ids, m, modulus) -> list[ass.ShareBundle]:
    by_sensor: dict[str, list[Optional[int]]] = {sid: [None] * m for sid in sensor_ids}
    for env in envelopes:
        by_sensor[env.sensor_id][env.share_index - 1] = env.value
    return [
        ass.ShareBundle(sensor_id=sid, shares=tuple(by_sensor[sid]), modulus=modulus)
        for sid in sensor_ids
    ]


def _run_ass(spec, rep, rng, broker, values, encoded, compute) -> RepOutcome:
    params = spec.encoding
    n = len(values)
    m = spec.pet.m
    fp = ass.choose_modulus(n, params.q)
    virtualized = spec.topology.kind == VIRTUALIZED

    broker.register_client("consumer")
    broker.acl.allow("consumer", SHARE_FILTER, SUBSCRIBE)
    consumer_sub = broker.subscribe("consumer", SHARE_FILTER)

    drop = None
    if spec.pet.drop_one_share:
        drop = (f"s{int(rng.integers(0, n))}", int(rng.integers(1, m + 1)))

    hop_delays: list[float] = []
    sensor_ids = [f"s{i}" for i in range(n)]
    received: list[Envelope] = []

    if virtualized:
        # one source publishes raw; a virtual node does the splitting
        broker.register_client("s0")
        broker.register_client("vnode")
        broker.acl.allow("s0", DATA_TOPIC.format(sensor="s0"), PUBLISH)
        broker.acl.allow("vnode", DATA_FILTER, SUBSCRIBE)
        broker.acl.allow("vnode", SHARE_FILTER, PUBLISH)
        vnode_sub = broker.subscribe("vnode", DATA_FILTER)
        env = Envelope(
            topic=DATA_TOPIC.format(sensor="s0"),
            sensor_id="s0",
            sequence=rep,
            scheme=Scheme.RAW,
            value=encoded[0],
            timestamp_us=broker.clock.now_us,
        )
        receipt = broker.publish("s0", env)
        hop_delays.extend(_leg(receipt, "vnode"))
        broker.clock.advance_ms(sum(hop_delays) + compute)
        secret = vnode_sub.pop_all()[0].envelope.value
        bundle = ass.split(secret, m, fp, rng, sensor_id="s0")
        legs, arrived = _publish_shares(rep, broker, "vnode", bundle, drop)
        received.extend(arrived)
        if spec.pet.parallel_shares:
            best = max(range(m), key=lambda j: sum(legs[j]))
            hop_delays.extend(legs[best])
        else:
            for leg in legs:
                hop_delays.extend(leg)
    else:
        for sid in sensor_ids:
            broker.register_client(sid)
            broker.acl.allow(sid, SHARE_FILTER, PUBLISH)
        broker.clock.advance_ms(compute)
        per_sensor_legs = []
        for i, sid in enumerate(sensor_ids):
            bundle = ass.split(encoded[i], m, fp, rng, sensor_id=sid)
            legs, arrived = _publish_shares(rep, broker, sid, bundle, drop)
            received.extend(arrived)
            per_sensor_legs.append(legs)
        if spec.pet.parallel_shares:
            totals = [max(sum(leg) for leg in legs) for legs in per_sensor_legs]
            critical = max(range(n), key=totals.__getitem__)
            legs = per_sensor_legs[critical]
            best = max(range(m), key=lambda j: sum(legs[j]))
            hop_delays.extend(legs[best])
        else:
            totals = [sum(sum(leg) for leg in legs) for legs in per_sensor_legs]
            critical = max(range(n), key=totals.__getitem__)
            for leg in per_sensor_legs[critical]:
                hop_delays.extend(leg)

    record = RunRecord(
        scenario=spec.name,
        message_id=rep,
        compute_ms=compute,
        hop_delays_ms=tuple(hop_delays),
        hop_count=expected_hops(spec),
    )
    bundle_sensors = ["s0"] if virtualized else sensor_ids
    bundles = _collect_bundles(received, bundle_sensors, m, fp.modulus)
    encoded_truth = sum(encoded[: len(bundle_sensors)])
    try:
        total = ass.reconstruct_sum(bundles, fp)
    except ass.MissingShareError as exc:
        return RepOutcome(
            record=record,
            result=None,
            truth=None,
            encoded_truth=encoded_truth,
            error=exc,
            injected_drop=drop,
        )
    return RepOutcome(
        record=record,
        result=decode_sum(total, len(bundles), params),
        truth=float(sum(values[: len(bundle_sensors)])),
        encoded_result=total,
        encoded_truth=encoded_truth,
        injected_drop=drop,
    )


def _run_relay_chain(spec, rep, rng, broker, value, encoded_value, compute) -> RepOutcome:
    depth = spec.topology.depth
    broker.register_client("source")
    broker.register_client("consumer")
    broker.acl.allow("source", RELAY_TOPIC.format(i=0), PUBLISH)
    relay_subs = []
    for i in range(1, depth + 1):
        relay = f"relay{i}"
        broker.register_client(relay)
        broker.acl.allow(relay, RELAY_TOPIC.format(i=i - 1), SUBSCRIBE)
        broker.acl.allow(relay, RELAY_TOPIC.format(i=i), PUBLISH)
        relay_subs.append(broker.subscribe(relay, RELAY_TOPIC.format(i=i - 1)))
    broker.acl.allow("consumer", RELAY_TOPIC.format(i=depth), SUBSCRIBE)
    consumer_sub = broker.subscribe("consumer", RELAY_TOPIC.format(i=depth))

    broker.clock.advance_ms(compute)
    env = Envelope(
        topic=RELAY_TOPIC.format(i=0),
        sensor_id="source",
        sequence=rep,
        scheme=Scheme.RAW,
        value=encoded_value,
        timestamp_us=broker.clock.now_us,
    )
    hop_delays: list[float] = []
    receipt = broker.publish("source", env)
    for i in range(1, depth + 1):
        relay = f"relay{i}"
        hop_delays.extend(_leg(receipt, relay))
        broker.clock.advance_ms(sum(hop_delays[-2:]))
        inbound = relay_subs[i - 1].pop_all()[0].envelope
        # relays add no processing time; they immediately forward
        forward = Envelope(
            topic=RELAY_TOPIC.format(i=i),
            sensor_id=inbound.sensor_id,
            sequence=inbound.sequence,
            scheme=inbound.scheme,
            value=inbound.value,
            timestamp_us=inbound.timestamp_us,
        )
        receipt = broker.publish(relay, forward)
    hop_delays.extend(_leg(receipt, "consumer"))

    wire_value = consumer_sub.pop_all()[0].envelope.value
    record = RunRecord(
        scenario=spec.name,
        message_id=rep,
        compute_ms=compute,
        hop_delays_ms=tuple(hop_delays),
        hop_count=expected_hops(spec),
    )
    return RepOutcome(
        record=record,
        result=decode(wire_value, spec.encoding),
        truth=value,
    )


def _outcomes_for_range(
    spec: ScenarioSpec,
    start: int,
    stop: int,
    filler_rate: float,
    filler_window_s: float,
) -> list[RepOutcome]:
    out = []
    for rep in range(start, stop):
        rng = np.random.default_rng(spec.seed + rep)
        out.append(_run_once(spec, rep, rng, filler_rate, filler_window_s))
    return out


def run_scenario_outcomes(
    spec: ScenarioSpec,
    filler_rate: float = 0.0,
    filler_window_s: float = 0.05,
    workers: int = 1,
) -> list[RepOutcome]:
    """Run every repetition, capturing per-repetition results and errors.

    workers > 1 shards repetitions across processes; outcomes are merged by
    repetition index and are bit-identical to a single-worker run because
    each repetition is independently seeded.
    """
    reps = spec.repetitions
    if workers <= 1 or reps == 1:
        return _outcomes_for_range(spec, 0, reps, filler_rate, filler_window_s)
    workers = min(workers, reps)
    bounds = np.linspace(0, reps, workers + 1).astype(int)
    chunks = [(int(bounds[i]), int(bounds[i + 1])) for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_outcomes_for_range, spec, start, stop, filler_rate, filler_window_s)
            for start, stop in chunks
        ]
        merged: list[RepOutcome] = []
        for fut in futures:
            merged.extend(fut.result())
    return merged


def run_scenario(spec: ScenarioSpec, workers: int = 1) -> list[RunRecord]:
    """Run a validated scenario; one RunRecord per repetition.

    An ass repetition that lost a share aborts the run by raising
    MissingShareError -- (m, m) sharing has nothing to fall back on.
    """
    outcomes = run_scenario_outcomes(spec, workers=workers)
    for outcome in outcomes:
        if outcome.error is not None:
            raise outcome.error
    return [o.record for o in outcomes]
