# The MIT License (MIT)
#
# Copyright (c) 2026 The afdo developers
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in
# all copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN
# THE SOFTWARE.
"""
`afdo.simnet`
================================================================================

Virtual-time execution of the object-creation workload on one node or on a
multi-region cluster, the snapshot equivalence checker, the centralised
evolution post-process, and the per-mode timing report.

Implementation Notes
--------------------

The loop is a ``heapq`` of ``(time, sequence, action)`` entries over a
virtual clock; nothing reads the wall clock. A client submits records one at
a time. In the distributed modes each creation is a request to the node the
record is assigned to (round-robin) and an acknowledgement back; with
latency, each message takes half a round-trip sampled from
``Normal(mean_rtt, sd_rtt)`` clamped at zero.

Object creation is a pure function of the record, so the snapshots of every
mode agree byte for byte once the time fields are masked.
"""

from __future__ import annotations

import csv
import enum
import heapq
import itertools
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from afdo.consensus import ConsensusConfig, aggregate
from afdo.core_model import ConflictRecord, canonical_json, default_registry
from afdo.trust import (
    AuditLog,
    TrustEvent,
    TrustEventKind,
    TrustParameters,
    TrustState,
    apply_trust_event,
)

logger = logging.getLogger(__name__)

OBJECT_TYPE = "GeneticVariantInterpretation"
PID_PREFIX = "afdo/"
TIME_FIELDS = ("created_at", "updated_at")
PROCESSING_TIME = 0.005
MESSAGE_COST = 0.002

TIMING_COLUMNS = ("mode", "records", "virtual_wall_clock", "p95_per_record")


class Region(enum.Enum):
    """Modelled server regions."""

    EUROPE = "Europe"
    US_EAST = "US-East"
    US_WEST = "US-West"
    CHINA = "China"


@dataclass(frozen=True)
class NodeSpec:
    """A server of the simulated stack."""

    node_id: str
    region: Region

    def __post_init__(self):
        object.__setattr__(self, "region", Region(self.region))


DEFAULT_NODES = (
    NodeSpec("node-1", Region.EUROPE),
    NodeSpec("node-2", Region.EUROPE),
    NodeSpec("node-3", Region.US_EAST),
    NodeSpec("node-4", Region.US_WEST),
    NodeSpec("node-5", Region.CHINA),
)


@dataclass(frozen=True)
class LatencyModel:
    """Round-trip times in seconds, Normal(mean_rtt, sd_rtt) clamped at 0."""

    mean_rtt: float = 0.144
    sd_rtt: float = 0.055
    seed: int = 42

    def __post_init__(self):
        if self.mean_rtt < 0 or self.sd_rtt < 0:
            raise ValueError("Latency parameters must be non-negative")

    def generator(self) -> np.random.Generator:
        """Fresh generator for this model's seed."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(3,)))

    def sample(self, rng: np.random.Generator, size=None):
        """Round-trip sample(s) drawn from ``rng``."""
        values = np.maximum(rng.normal(self.mean_rtt, self.sd_rtt, size=size), 0.0)
        return float(values) if size is None else values


class ExecutionMode(enum.Enum):
    """How the workload is executed."""

    CENTRALISED = "centralised"
    DISTRIBUTED_NO_LATENCY = "distributed-no-latency"
    DISTRIBUTED_WITH_LATENCY = "distributed-with-latency"

    @property
    def distributed(self) -> bool:
        """True for the multi-node modes."""
        return self is not ExecutionMode.CENTRALISED


class VirtualClock:
    """Monotonic simulated time."""

    def __init__(self, start: float = 0.0):
        self.time = start

    def now(self) -> float:
        """Current virtual time."""
        return self.time

    def advance_to(self, time: float) -> float:
        """Move forward to ``time``; moving backwards is an error."""
        if time < self.time:
            raise RuntimeError("Virtual time cannot go backwards (%r < %r)" % (time, self.time))
        self.time = time
        return self.time


@dataclass(frozen=True)
class RecordSnapshot:
    """State of one created object."""

    pid: str
    fdo_type: str
    state: str
    trust_score: float
    operations: tuple
    metadata: tuple
    created_at: float = 0.0
    updated_at: float = 0.0

    def to_dict(self, masked: Sequence[str] = ()) -> dict:
        """Serialisable form; masked fields are replaced with ``None``."""
        data = {
            "pid": self.pid,
            "type": self.fdo_type,
            "state": self.state,
            "trust_score": self.trust_score,
            "operations": list(self.operations),
            "metadata": {key: value for key, value in self.metadata},
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }
        for name in masked:
            if name in data:
                data[name] = None
        return data

    def to_bytes(self, masked: Sequence[str] = ()) -> bytes:
        """Canonical bytes used for comparison."""
        return canonical_json(self.to_dict(masked)).encode("utf-8")


def create_object(record: ConflictRecord, created_at: float = 0.0) -> RecordSnapshot:
    """Creation handler: the object a node builds for ``record``."""
    definition = default_registry().resolve(OBJECT_TYPE)
    metadata = (
        ("variantId", record.target_id),
        ("bucket", record.bucket.value),
        ("submissions", len(record.submissions)),
        ("operations", sorted(definition.operations)),
    )
    return RecordSnapshot(
        pid=PID_PREFIX + record.target_id,
        fdo_type=OBJECT_TYPE,
        state="created",
        trust_score=TrustState().score,
        operations=("Create",),
        metadata=metadata,
        created_at=created_at,
        updated_at=created_at,
    )


@dataclass(frozen=True)
class TraceEvent:
    """One step of the simulated execution."""

    time: float
    node_id: str
    kind: str
    pid: str


@dataclass
class WorkloadResult:
    """Snapshots, trace and timing of one run."""

    mode: ExecutionMode
    snapshots: list
    trace: list
    per_record: list = field(default_factory=list)

    @property
    def wall_clock(self) -> float:
        """Virtual time at which the last record was acknowledged."""
        return self.trace[-1].time if self.trace else 0.0

    @property
    def p95_per_record(self) -> float:
        """95th percentile of request-to-acknowledgement time."""
        return float(np.percentile(self.per_record, 95)) if self.per_record else 0.0

    def node_trace(self, node_id: str) -> list:
        """Trace entries of one node."""
        return [event for event in self.trace if event.node_id == node_id]

    def trace_csv(self, stream) -> None:
        """Write the trace as CSV."""
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(("time", "node", "kind", "pid"))
        for event in self.trace:
            writer.writerow(("%.6f" % event.time, event.node_id, event.kind, event.pid))


def assign_nodes(count: int, nodes: Sequence[NodeSpec]) -> list:
    """Round-robin node per record index."""
    if not nodes:
        raise ValueError("At least one node is required")
    return [nodes[i % len(nodes)].node_id for i in range(count)]


def run_workload(
    records: Sequence[ConflictRecord],
    mode: ExecutionMode,
    nodes: Sequence[NodeSpec] = DEFAULT_NODES,
    latency: Optional[LatencyModel] = None,
    seed: int = 42,
    workers: int = 0,
) -> WorkloadResult:
    """Create one object per record under ``mode``.

    :param int workers: build snapshots on a thread pool; the result is the
        same as the single-threaded run
    """
    records = list(records)
    if not records:
        raise ValueError("run_workload needs at least one record")
    mode = ExecutionMode(mode)
    if mode is ExecutionMode.DISTRIBUTED_WITH_LATENCY:
        latency = latency if latency is not None else LatencyModel(seed=seed)
    else:
        latency = None
    rng = latency.generator() if latency is not None else None
    coordinator = "client"
    assigned = assign_nodes(len(records), nodes) if mode.distributed else ["central"] * len(records)

    clock = VirtualClock()
    queue = []
    sequence = itertools.count()
    trace = []
    created = [0.0] * len(records)
    started = [0.0] * len(records)
    finished = [0.0] * len(records)

    def one_way() -> float:
        return latency.sample(rng) / 2.0 if latency is not None else 0.0

    def schedule(time, action, index):
        heapq.heappush(queue, (time, next(sequence), action, index))

    def submit(index):
        pid = PID_PREFIX + records[index].target_id
        started[index] = clock.now()
        if mode.distributed:
            trace.append(TraceEvent(clock.now(), coordinator, "send", pid))
            schedule(clock.now() + MESSAGE_COST + one_way(), "create", index)
        else:
            schedule(clock.now(), "create", index)

    schedule(0.0, "submit", 0)
    while queue:
        time, _, action, index = heapq.heappop(queue)
        clock.advance_to(time)
        pid = PID_PREFIX + records[index].target_id
        node = assigned[index]
        if action == "submit":
            submit(index)
        elif action == "create":
            trace.append(TraceEvent(clock.now(), node, "receive", pid))
            done = clock.now() + PROCESSING_TIME
            created[index] = done
            if mode.distributed:
                schedule(done, "reply", index)
            else:
                schedule(done, "ack", index)
        elif action == "reply":
            trace.append(TraceEvent(clock.now(), node, "created", pid))
            schedule(clock.now() + MESSAGE_COST + one_way(), "ack", index)
        elif action == "ack":
            finished[index] = clock.now()
            trace.append(TraceEvent(clock.now(), coordinator if mode.distributed else node, "ack", pid))
            if index + 1 < len(records):
                schedule(clock.now(), "submit", index + 1)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            snapshots = list(pool.map(create_object, records, created))
    else:
        snapshots = [create_object(record, at) for record, at in zip(records, created)]
    per_record = [end - begin for begin, end in zip(started, finished)]
    logger.info("%s: %d records in %.3f virtual s", mode.value, len(records), clock.now())
    return WorkloadResult(mode, snapshots, trace, per_record)


@dataclass(frozen=True)
class RecordComparison:
    """Outcome for one position of two snapshot sequences."""

    index: int
    pid: str
    equal: bool
    offset: Optional[int] = None


@dataclass(frozen=True)
class EquivalenceReport:
    """Result of `compare_snapshots`."""

    records: tuple
    count_mismatch: bool = False

    @property
    def equal(self) -> bool:
        """Same count and every record equal."""
        return not self.count_mismatch and all(item.equal for item in self.records)

    @property
    def unequal(self) -> list:
        """Records that differ."""
        return [item for item in self.records if not item.equal]

    def first_divergence(self) -> Optional[RecordComparison]:
        """Earliest differing record."""
        differing = self.unequal
        return differing[0] if differing else None

    def to_dict(self) -> dict:
        """JSON-shaped summary."""
        first = self.first_divergence()
        return {
            "equal": self.equal,
            "count_mismatch": self.count_mismatch,
            "records": len(self.records),
            "unequal": len(self.unequal),
            "first_divergence": None if first is None else {"pid": first.pid, "offset": first.offset},
        }


def first_difference(a: bytes, b: bytes) -> Optional[int]:
    """Offset of the first differing byte, or None when equal."""
    for offset, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return offset
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


def _as_bytes(item, masked) -> bytes:
    if isinstance(item, (bytes, bytearray)):
        return bytes(item)
    return item.to_bytes(masked)


def compare_snapshots(a: Sequence, b: Sequence, masked: Sequence[str] = TIME_FIELDS) -> EquivalenceReport:
    """Byte comparison of two snapshot sequences with ``masked`` fields
    blanked. Items may also be raw bytes, compared as they are."""
    comparisons = []
    for index, (left, right) in enumerate(zip(a, b)):
        offset = first_difference(_as_bytes(left, masked), _as_bytes(right, masked))
        pid = getattr(left, "pid", str(index))
        comparisons.append(RecordComparison(index, pid, offset is None, offset))
    return EquivalenceReport(tuple(comparisons), count_mismatch=len(a) != len(b))


def evolve_snapshots(
    snapshots: Sequence[RecordSnapshot],
    records: Sequence[ConflictRecord],
    config: ConsensusConfig = ConsensusConfig(),
    params: TrustParameters = TrustParameters(),
    audit: AuditLog = None,
    reinforce_similar: bool = False,
    elapsed_years: float = 0.0,
) -> list:
    """Centralised evolution pass: one consensus round per object, then a
    confirmed or refuted validation against the held-out adjudication.

    With ``reinforce_similar``, an object whose consensus class and bucket are
    shared by another object of the pass also receives a similar-pattern
    event. A positive ``elapsed_years`` ends each object with a time-decay
    event over that interval. Every applied event is audited.
    """
    if len(snapshots) != len(records):
        raise ValueError("snapshots and records differ in length")
    if elapsed_years < 0:
        raise ValueError("elapsed_years must be >= 0")
    audit = audit if audit is not None else AuditLog()
    outcomes = [aggregate(record.submissions, config) for record in records]
    patterns = Counter((outcome.consensus_class, record.bucket) for outcome, record in zip(outcomes, records))
    evolved = []
    for snapshot, record, outcome in zip(snapshots, records, outcomes):
        kind = (
            TrustEventKind.VALIDATION_CONFIRMED
            if outcome.consensus_class is record.ground_truth.classification
            else TrustEventKind.VALIDATION_REFUTED
        )
        events = [TrustEvent(kind, source=record.ground_truth.submitter_id)]
        if reinforce_similar and patterns[(outcome.consensus_class, record.bucket)] > 1:
            events.append(TrustEvent(TrustEventKind.SIMILAR_PATTERN_FOUND, source="evolution"))
        if elapsed_years > 0:
            events.append(TrustEvent(TrustEventKind.TIME_DECAY, source="evolution", delta_years=elapsed_years))
        state = TrustState(score=snapshot.trust_score)
        for event in events:
            state = apply_trust_event(
                state, event, params, audit=audit, timestamp=snapshot.updated_at, agent=snapshot.pid
            )
        evolved.append(
            replace(
                snapshot,
                state="reconciled",
                trust_score=state.score,
                operations=snapshot.operations + ("negotiateClassification", "UPDATETRUST"),
                metadata=snapshot.metadata + (("classification", outcome.consensus_class.label),),
            )
        )
    return evolved


@dataclass(frozen=True)
class TimingRow:
    """Timing of one mode."""

    mode: str
    records: int
    virtual_wall_clock: float
    p95_per_record: float

    def row(self) -> tuple:
        """Values in `TIMING_COLUMNS` order."""
        return (self.mode, self.records, "%.6f" % self.virtual_wall_clock, "%.6f" % self.p95_per_record)


def timing_report(
    records: Sequence[ConflictRecord],
    nodes: Sequence[NodeSpec] = DEFAULT_NODES,
    latency: Optional[LatencyModel] = None,
    seed: int = 42,
):
    """Run every mode; returns the timing rows, the results by mode, and the
    equivalence report of each distributed mode against the centralised one."""
    results = {mode: run_workload(records, mode, nodes, latency, seed) for mode in ExecutionMode}
    rows = [
        TimingRow(mode.value, len(records), result.wall_clock, result.p95_per_record)
        for mode, result in results.items()
    ]
    central = results[ExecutionMode.CENTRALISED].snapshots
    reports = {
        mode: compare_snapshots(central, result.snapshots)
        for mode, result in results.items()
        if mode.distributed
    }
    return rows, results, reports


def overhead(rows: Sequence[TimingRow], mode: ExecutionMode) -> float:
    """Wall-clock ratio of ``mode`` to the centralised run."""
    by_mode = {row.mode: row for row in rows}
    base = by_mode[ExecutionMode.CENTRALISED.value].virtual_wall_clock
    return by_mode[ExecutionMode(mode).value].virtual_wall_clock / base if base else 0.0


def write_timing_csv(rows: Sequence[TimingRow], stream) -> None:
    """Timing rows as CSV with a header."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TIMING_COLUMNS)
    for row in rows:
        writer.writerow(row.row())
