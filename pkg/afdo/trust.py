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
`afdo.trust`
================================================================================

Trust evolution, the append-only audit log, the trust register, and the
discrete-event simulator used for trust-parameter sensitivity.

Implementation Notes
--------------------

Scores are clamped to [0, 1] after every update. The simulator draws its
event stream in blocks from a seeded ``numpy`` generator independently of
the parameters, so two parameter settings run with one seed see the same
events. Distances between final-trust distributions use
``scipy.stats.ks_2samp``.
"""

from __future__ import annotations

import csv
import enum
import logging
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from afdo.core_model import AFDOError, canonical_json

logger = logging.getLogger(__name__)

RECOVERY_CAP = 10000
SENSITIVITY_ALPHAS = (0.10, 0.30, 0.50)
SENSITIVITY_BETAS = (0.01, 0.05, 0.10)
SENSITIVITY_GAMMAS = (0.10, 0.20, 0.30)


class UnknownTrustEvent(AFDOError, ValueError):
    """Raised for an event kind the update rule does not know."""


class TrustEventKind(enum.Enum):
    """Observable events that move a trust score."""

    VALIDATION_CONFIRMED = "ValidationConfirmed"
    VALIDATION_REFUTED = "ValidationRefuted"
    VALIDATION_UNCERTAIN = "ValidationUncertain"
    SIMILAR_PATTERN_FOUND = "SimilarPatternFound"
    TIME_DECAY = "TimeDecay"
    INSTITUTIONAL_CLOSURE = "InstitutionalClosure"


@dataclass(frozen=True)
class TrustParameters:
    """Coefficients of the update rule."""

    alpha: float = 0.30
    beta: float = 0.05
    gamma: float = 0.20
    rho: float = 0.40
    delta: float = 0.10

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "rho", "delta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError("%s out of [0, 1]: %r" % (name, value))

    def perturbed(self, name: str, factor: float) -> "TrustParameters":
        """Copy with one coefficient multiplied by ``factor``."""
        return replace(self, **{name: min(1.0, getattr(self, name) * factor)})


@dataclass(frozen=True)
class TrustEvent:
    """A typed trust event; only TimeDecay uses ``delta_years``."""

    kind: TrustEventKind
    source: str = ""
    delta_years: float = 0.0

    def __post_init__(self):
        if self.delta_years < 0:
            raise ValueError("delta_years must be >= 0")


@dataclass(frozen=True)
class AuditRecord:
    """Provenance entry: what was done, with which entities, by whom, when."""

    record_id: str
    activity: str
    inputs: tuple
    outputs: tuple
    agent: str
    policy_version: str
    timestamp: float
    detail: tuple = ()

    def to_dict(self) -> dict:
        """JSON-shaped form."""
        return {
            "id": self.record_id,
            "activity": self.activity,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "agent": self.agent,
            "policy_version": self.policy_version,
            "timestamp": self.timestamp,
            "detail": {key: value for key, value in self.detail},
        }


class AuditLog:
    """Append-only store of audit records."""

    def __init__(self, prefix: str = "audit"):
        self._prefix = prefix
        self._records = []
        self._lock = threading.Lock()

    def emit(
        self,
        activity: str,
        inputs: Iterable = (),
        outputs: Iterable = (),
        agent: str = "",
        policy_version: str = "",
        timestamp: float = 0.0,
        detail: Iterable = (),
    ) -> AuditRecord:
        """Append a record and return it."""
        with self._lock:
            record = AuditRecord(
                record_id="%s-%06d" % (self._prefix, len(self._records) + 1),
                activity=activity,
                inputs=tuple(inputs),
                outputs=tuple(outputs),
                agent=agent,
                policy_version=policy_version,
                timestamp=timestamp,
                detail=tuple(detail),
            )
            self._records.append(record)
        return record

    @property
    def records(self) -> tuple:
        """Snapshot of all records in emission order."""
        return tuple(self._records)

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self.records)

    def export_jsonl(self, stream) -> int:
        """Write every record as one JSON line."""
        for record in self.records:
            stream.write(canonical_json(record.to_dict()))
            stream.write("\n")
        return len(self._records)


@dataclass(frozen=True)
class HistoryEntry:
    """One applied trust event."""

    event: TrustEvent
    pre: float
    post: float
    audit_record_id: Optional[str] = None


@dataclass(frozen=True)
class TrustState:
    """Trust score with its append-only update history."""

    score: float = 0.5
    last_update: float = 0.0
    history: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("trust score out of [0, 1]: %r" % self.score)


def _clamp(value: float) -> float:
    return min(1.0, max(0.0, value))


def next_score(score: float, event: TrustEvent, params: TrustParameters) -> float:
    """Score after one event."""
    kind = event.kind
    if kind is TrustEventKind.VALIDATION_CONFIRMED:
        return _clamp(score + params.alpha)
    if kind is TrustEventKind.VALIDATION_REFUTED:
        return _clamp(score - params.rho)
    if kind is TrustEventKind.VALIDATION_UNCERTAIN:
        return _clamp(score - params.beta)
    if kind is TrustEventKind.SIMILAR_PATTERN_FOUND:
        return _clamp(score + params.delta)
    if kind is TrustEventKind.TIME_DECAY:
        return _clamp(score - params.beta * event.delta_years)
    if kind is TrustEventKind.INSTITUTIONAL_CLOSURE:
        return _clamp(score * (1.0 - params.gamma))
    raise UnknownTrustEvent("Unknown trust event kind: %r" % (kind,))


def apply_trust_event(
    state: TrustState,
    event: TrustEvent,
    params: TrustParameters = TrustParameters(),
    audit: AuditLog = None,
    timestamp: float = None,
    agent: str = "",
) -> TrustState:
    """Apply one event and return the new state with the event appended to
    its history. An audit record is emitted when ``audit`` is given."""
    post = next_score(state.score, event, params)
    when = state.last_update if timestamp is None else timestamp
    record_id = None
    if audit is not None:
        record = audit.emit(
            activity="trust-update",
            inputs=[event.kind.value, event.source],
            outputs=[repr(post)],
            agent=agent,
            policy_version="trust/a=%s,b=%s,g=%s,r=%s,d=%s"
            % (params.alpha, params.beta, params.gamma, params.rho, params.delta),
            timestamp=when,
            detail=(("pre", repr(state.score)),),
        )
        record_id = record.record_id
    entry = HistoryEntry(event, state.score, post, record_id)
    return TrustState(score=post, last_update=when, history=state.history + (entry,))


def simulate_trust_trajectory(
    initial: TrustState,
    schedule: Sequence[TrustEvent],
    params: TrustParameters = TrustParameters(),
) -> list:
    """Scores before and after each scheduled event."""
    trajectory = [initial.score]
    state = initial
    for event in schedule:
        state = apply_trust_event(state, event, params)
        trajectory.append(state.score)
    return trajectory


class TrustRegister:
    """Trust state per pid with a shared audit log."""

    def __init__(self, params: TrustParameters = None, audit: AuditLog = None):
        self.params = params or TrustParameters()
        self.audit = audit if audit is not None else AuditLog()
        self._states = {}
        self._lock = threading.Lock()

    def register(self, pid: str, state: TrustState = None) -> TrustState:
        """Track ``pid`` starting from ``state`` (score 0.5 by default)."""
        with self._lock:
            self._states[pid] = state or TrustState()
            return self._states[pid]

    def state(self, pid: str) -> TrustState:
        """Current state of ``pid``."""
        return self._states[pid]

    def apply(self, pid: str, event: TrustEvent, timestamp: float = None) -> TrustState:
        """Apply an event to ``pid`` and record it."""
        with self._lock:
            current = self._states.get(pid) or TrustState()
            updated = apply_trust_event(
                current, event, self.params, self.audit, timestamp, agent=pid
            )
            self._states[pid] = updated
        logger.debug("%s: trust %.3f -> %.3f (%s)", pid, current.score, updated.score, event.kind.value)
        return updated

    def pids(self) -> list:
        """Tracked pids, sorted."""
        return sorted(self._states)


# Mix used when a run does not name one; chosen so trajectories move.
DEFAULT_MIX = {
    TrustEventKind.VALIDATION_CONFIRMED: 0.30,
    TrustEventKind.VALIDATION_REFUTED: 0.10,
    TrustEventKind.VALIDATION_UNCERTAIN: 0.40,
    TrustEventKind.SIMILAR_PATTERN_FOUND: 0.20,
}


def _mix_arrays(mix: Mapping):
    kinds = sorted(mix, key=lambda kind: kind.value)
    probs = np.array([mix[kind] for kind in kinds], dtype=float)
    if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
        raise ValueError("Event mix probabilities must be >= 0 and sum to 1")
    events = [TrustEvent(kind, source="simulator") for kind in kinds]
    return events, probs / probs.sum()


class _EventStream:
    """Seeded, parameter-independent stream of events drawn from a mix."""

    block = 256

    def __init__(self, mix: Mapping, seed):
        self._events, self._probs = _mix_arrays(mix)
        self._rng = np.random.default_rng(seed)
        self._buffer = []

    def next(self) -> TrustEvent:
        if not self._buffer:
            draws = self._rng.choice(len(self._events), size=self.block, p=self._probs)
            self._buffer = list(reversed(draws.tolist()))
        return self._events[self._buffer.pop()]


@dataclass(frozen=True)
class RecoveryResult:
    """Events drawn until the pre-closure score was reached again."""

    events: int
    censored: bool
    final_score: float


def recovery_time(
    initial: TrustState,
    mix: Mapping = None,
    params: TrustParameters = TrustParameters(),
    seed=42,
    cap: int = RECOVERY_CAP,
    horizon: int = 0,
) -> RecoveryResult:
    """Inject an institutional closure, then draw events from ``mix`` until the
    score is back at its pre-closure value.

    Reaching ``cap`` is reported as censored. When ``horizon`` is positive,
    drawing continues up to that many events so `final_score` is taken at a
    fixed point of the stream.
    """
    stream = _EventStream(mix or DEFAULT_MIX, seed)
    target = initial.score
    closure = TrustEvent(TrustEventKind.INSTITUTIONAL_CLOSURE, source="simulator")
    score = next_score(target, closure, params)
    recovered_at = 0 if score >= target else None
    drawn = 0
    limit = max(cap, horizon)
    while drawn < limit and (recovered_at is None and drawn < cap or drawn < horizon):
        score = next_score(score, stream.next(), params)
        drawn += 1
        if recovered_at is None and score >= target:
            recovered_at = drawn
    if recovered_at is None:
        logger.debug("Recovery censored at %d events", cap)
        return RecoveryResult(cap, True, score)
    return RecoveryResult(recovered_at, False, score)


@dataclass(frozen=True)
class SensitivityRow:
    """One cell of the trust-parameter sweep."""

    alpha: float
    beta: float
    gamma: float
    median_recovery: float
    ks_distance: float
    censored: int = 0


def ks_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    return float(stats.ks_2samp(a, b).statistic)


def _replicate_seeds(seed, replicates: int) -> list:
    return np.random.SeedSequence(seed).spawn(replicates)


def _replicate_initials(seed, replicates: int, params: TrustParameters, mix) -> list:
    """Pre-closure states: warm-up trajectories of varying length from 0.5."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC105,)))
    initials = []
    for i in range(replicates):
        warmup = int(rng.integers(0, 20))
        stream = _EventStream(mix, np.random.SeedSequence(seed, spawn_key=(0xC105, i)))
        score = 0.5
        for _ in range(warmup):
            score = next_score(score, stream.next(), params)
        initials.append(TrustState(score=score))
    return initials


def _cell(params, mix, seed, replicates, cap, horizon):
    seeds = _replicate_seeds(seed, replicates)
    # Pre-closure states come from the default parameters so every cell
    # starts from the same scores.
    initials = _replicate_initials(seed, replicates, TrustParameters(), mix)
    results = [
        recovery_time(initial, mix, params, child, cap, horizon)
        for initial, child in zip(initials, seeds)
    ]
    recoveries = [result.events for result in results]
    finals = [result.final_score for result in results]
    censored = sum(1 for result in results if result.censored)
    return recoveries, finals, censored


def sensitivity_sweep(
    alphas: Sequence[float] = SENSITIVITY_ALPHAS,
    betas: Sequence[float] = SENSITIVITY_BETAS,
    gammas: Sequence[float] = SENSITIVITY_GAMMAS,
    mix: Mapping = None,
    replicates: int = 30,
    seed=42,
    base: TrustParameters = TrustParameters(),
    cap: int = RECOVERY_CAP,
    horizon: int = 100,
) -> list:
    """Median recovery time and KS distance of final trust vs. ``base`` for
    every (alpha, beta, gamma) cell of the grid."""
    if not (alphas and betas and gammas):
        raise ValueError("Parameter grid must be non-empty")
    mix = mix or DEFAULT_MIX
    _, reference, _ = _cell(base, mix, seed, replicates, cap, horizon)
    rows = []
    for alpha in alphas:
        for beta in betas:
            for gamma in gammas:
                params = replace(base, alpha=alpha, beta=beta, gamma=gamma)
                recoveries, finals, censored = _cell(params, mix, seed, replicates, cap, horizon)
                median = float(np.median(recoveries))
                rows.append(
                    SensitivityRow(
                        alpha, beta, gamma, median, ks_distance(finals, reference), censored
                    )
                )
                logger.info("trust cell a=%s b=%s g=%s median=%s", alpha, beta, gamma, median)
    return rows


@dataclass(frozen=True)
class PerturbationRow:
    """Effect of a +/- perturbation of one coefficient around the defaults."""

    parameter: str
    low: float
    high: float
    recovery_change_pct: float
    ks_distance: float


def perturbation_summary(
    fraction: float = 0.20,
    mix: Mapping = None,
    replicates: int = 30,
    seed=42,
    base: TrustParameters = TrustParameters(),
    cap: int = RECOVERY_CAP,
    horizon: int = 100,
) -> list:
    """Relative change of mean recovery between the low and high perturbation
    of each coefficient, and the larger KS distance of the two perturbed
    final-trust samples from the defaults. Every cell replays the same event
    streams, so the change isolates the coefficient."""
    mix = mix or DEFAULT_MIX
    base_recoveries, reference, _ = _cell(base, mix, seed, replicates, cap, horizon)
    base_mean = float(np.mean(base_recoveries))
    rows = []
    for name in ("alpha", "beta", "gamma"):
        low = base.perturbed(name, 1.0 - fraction)
        high = base.perturbed(name, 1.0 + fraction)
        low_recoveries, low_finals, _ = _cell(low, mix, seed, replicates, cap, horizon)
        high_recoveries, high_finals, _ = _cell(high, mix, seed, replicates, cap, horizon)
        change = 0.0
        if base_mean > 0:
            change = 100.0 * abs(np.mean(low_recoveries) - np.mean(high_recoveries)) / base_mean
        distance = max(ks_distance(low_finals, reference), ks_distance(high_finals, reference))
        rows.append(
            PerturbationRow(name, getattr(low, name), getattr(high, name), float(change), distance)
        )
    return rows


SENSITIVITY_COLUMNS = ("alpha", "beta", "gamma", "median_recovery", "ks_distance")


def write_sensitivity_csv(rows: Iterable[SensitivityRow], stream) -> None:
    """CSV with the columns of `SENSITIVITY_COLUMNS`."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SENSITIVITY_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                repr(row.alpha),
                repr(row.beta),
                repr(row.gamma),
                repr(row.median_recovery),
                repr(row.ks_distance),
            ]
        )
