import io
import json

import numpy as np
import pytest

import builders
from afdo.simnet import (
    DEFAULT_NODES,
    PROCESSING_TIME,
    ExecutionMode,
    LatencyModel,
    NodeSpec,
    VirtualClock,
    assign_nodes,
    compare_snapshots,
    create_object,
    evolve_snapshots,
    first_difference,
    overhead,
    run_workload,
    timing_report,
    write_timing_csv,
)
from afdo.trust import AuditLog

WITH_LATENCY = ExecutionMode.DISTRIBUTED_WITH_LATENCY


def workload():
    return builders.small_corpus()[:100]


def test_latency_distribution():
    model = LatencyModel()
    samples = model.sample(model.generator(), size=10000)
    assert samples.min() >= 0.0
    assert abs(samples.mean() - 0.144) <= 0.002
    assert abs(samples.std() - 0.055) <= 0.002


def test_latency_is_seeded():
    first = LatencyModel(seed=7)
    second = LatencyModel(seed=7)
    assert np.array_equal(first.sample(first.generator(), 50), second.sample(second.generator(), 50))
    with pytest.raises(ValueError):
        LatencyModel(mean_rtt=-1)


def test_virtual_clock():
    clock = VirtualClock()
    assert clock.advance_to(1.5) == 1.5
    assert clock.advance_to(1.5) == 1.5
    with pytest.raises(RuntimeError):
        clock.advance_to(1.0)


def test_round_robin_nodes():
    assert assign_nodes(7, DEFAULT_NODES) == ["node-1", "node-2", "node-3", "node-4", "node-5", "node-1", "node-2"]
    assert {node.region.value for node in DEFAULT_NODES} == {"Europe", "US-East", "US-West", "China"}
    with pytest.raises(ValueError):
        assign_nodes(3, [])
    with pytest.raises(ValueError):
        NodeSpec("node-9", "Mars")


def test_created_object():
    record = workload()[0]
    snapshot = create_object(record, created_at=2.0)
    assert snapshot.pid == "afdo/" + record.target_id
    assert snapshot.state == "created"
    assert snapshot.trust_score == 0.5
    data = snapshot.to_dict(masked=("created_at",))
    assert data["created_at"] is None
    assert data["updated_at"] == 2.0
    assert data["metadata"]["variantId"] == record.target_id


def test_modes_produce_equivalent_snapshots():
    rows, results, reports = timing_report(workload())
    assert set(results) == set(ExecutionMode)
    for mode, report in reports.items():
        assert report.equal, mode
        assert report.first_divergence() is None
        assert report.to_dict()["records"] == 100
    assert all(len(result.snapshots) == 100 for result in results.values())


def test_timestamps_differ_but_are_masked():
    central = run_workload(workload()[:5], ExecutionMode.CENTRALISED)
    remote = run_workload(workload()[:5], WITH_LATENCY)
    assert central.snapshots[1].created_at != remote.snapshots[1].created_at
    assert not compare_snapshots(central.snapshots, remote.snapshots, masked=()).equal
    assert compare_snapshots(central.snapshots, remote.snapshots).equal


def test_latency_overhead_ordering():
    rows, _, _ = timing_report(workload())
    clocks = {row.mode: row.virtual_wall_clock for row in rows}
    assert clocks["centralised"] == pytest.approx(100 * PROCESSING_TIME)
    assert clocks["centralised"] < clocks["distributed-no-latency"] < clocks["distributed-with-latency"]
    assert overhead(rows, WITH_LATENCY) > overhead(rows, ExecutionMode.DISTRIBUTED_NO_LATENCY) > 1.0
    p95 = {row.mode: row.p95_per_record for row in rows}
    assert p95["distributed-with-latency"] > p95["distributed-no-latency"]


def test_timing_csv():
    rows, _, _ = timing_report(workload()[:10])
    stream = io.StringIO()
    write_timing_csv(rows, stream)
    lines = stream.getvalue().splitlines()
    assert lines[0] == "mode,records,virtual_wall_clock,p95_per_record"
    assert [line.split(",")[0] for line in lines[1:]] == [mode.value for mode in ExecutionMode]


def test_runs_are_reproducible():
    first = run_workload(workload()[:20], WITH_LATENCY, seed=3)
    second = run_workload(workload()[:20], WITH_LATENCY, seed=3)
    assert first.trace == second.trace
    assert first.snapshots == second.snapshots


def test_workers_do_not_change_snapshots():
    serial = run_workload(workload()[:30], WITH_LATENCY)
    threaded = run_workload(workload()[:30], WITH_LATENCY, workers=4)
    assert serial.snapshots == threaded.snapshots


def test_trace():
    result = run_workload(workload()[:6], ExecutionMode.DISTRIBUTED_NO_LATENCY)
    times = [event.time for event in result.trace]
    assert times == sorted(times)
    kinds = [event.kind for event in result.node_trace("node-1")]
    assert kinds == ["receive", "created", "receive", "created"]
    assert [event.kind for event in result.node_trace("client")].count("ack") == 6
    stream = io.StringIO()
    result.trace_csv(stream)
    assert stream.getvalue().splitlines()[0] == "time,node,kind,pid"


def test_first_difference():
    assert first_difference(b"abc", b"abc") is None
    assert first_difference(b"abc", b"abd") == 2
    assert first_difference(b"ab", b"abc") == 2


def test_count_mismatch():
    snapshots = run_workload(workload()[:3], ExecutionMode.CENTRALISED).snapshots
    report = compare_snapshots(snapshots, snapshots[:2])
    assert report.count_mismatch
    assert not report.equal


def test_divergence_is_located():
    snapshots = run_workload(workload()[:3], ExecutionMode.CENTRALISED).snapshots
    altered = list(snapshots)
    altered[1] = altered[1].__class__(**dict(vars(altered[1]), state="tampered"))
    report = compare_snapshots(snapshots, altered)
    divergence = report.first_divergence()
    assert divergence.index == 1
    assert divergence.pid == snapshots[1].pid
    assert divergence.offset > 0


def test_evolution_pass():
    records = workload()[:10]
    snapshots = run_workload(records, ExecutionMode.CENTRALISED).snapshots
    audit = AuditLog()
    evolved = evolve_snapshots(snapshots, records, audit=audit)
    assert len(audit) == 10
    for snapshot in evolved:
        assert snapshot.state == "reconciled"
        assert snapshot.trust_score in (pytest.approx(0.8), pytest.approx(0.1))
        assert json.loads(snapshot.to_bytes())["metadata"]["classification"]
    with pytest.raises(ValueError):
        evolve_snapshots(snapshots, records[:5])


def test_evolution_reinforces_shared_patterns():
    # 25 objects over at most 20 (class, bucket) pairs share at least one.
    records = workload()[:25]
    snapshots = run_workload(records, ExecutionMode.CENTRALISED).snapshots
    audit = AuditLog()
    evolved = evolve_snapshots(snapshots, records, audit=audit, reinforce_similar=True)
    scores = [round(snapshot.trust_score, 6) for snapshot in evolved]
    assert set(scores) <= {0.8, 0.1, 0.9, 0.2}
    reinforced = sum(1 for score in scores if score in (0.9, 0.2))
    assert reinforced >= 2
    assert len(audit) == 25 + reinforced
    kinds = [record.inputs[0] for record in audit.records]
    assert kinds.count("SimilarPatternFound") == reinforced


def test_evolution_applies_time_decay():
    records = workload()[:10]
    snapshots = run_workload(records, ExecutionMode.CENTRALISED).snapshots
    audit = AuditLog()
    evolved = evolve_snapshots(snapshots, records, audit=audit, elapsed_years=2.0)
    assert len(audit) == 20
    for snapshot in evolved:
        assert snapshot.trust_score in (pytest.approx(0.7), pytest.approx(0.0))
    with pytest.raises(ValueError):
        evolve_snapshots(snapshots, records, elapsed_years=-1.0)


def test_empty_workload():
    with pytest.raises(ValueError):
        run_workload([], ExecutionMode.CENTRALISED)
