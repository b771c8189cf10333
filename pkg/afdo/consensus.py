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
`afdo.consensus`
================================================================================

The agreement protocol: conflict detection, trimmed weighted-mean
aggregation, the simple-majority and first-wins alternatives, and
single-round agreement with a virtual-time deadline.

Implementation Notes
--------------------

Submissions are put in a total order by (score, weight, submitter id, arrival
index) before trimming, so every peer observing the same submission set trims
the same elements. The weighted mean is computed exactly over the rational
values of the binary inputs and rounded once, which makes outcomes bitwise
identical across runs and peers.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from afdo.core_model import (
    AFDOError,
    Classification,
    Submission,
    canonical_json,
    score_to_classification,
)

logger = logging.getLogger(__name__)


class EmptyRound(AFDOError, ValueError):
    """Raised when an aggregation receives no submissions."""


class DuplicateOrderIndex(AFDOError, ValueError):
    """Raised when first-wins cannot tell which submission came first."""


class RoundClosed(AFDOError, RuntimeError):
    """Raised when a submission is offered to a closed round."""


class Strategy(enum.Enum):
    """Aggregation strategy applied at the close of a round."""

    TRIMMED_WEIGHTED_MEAN = "twm"
    SIMPLE_MAJORITY = "sm"
    FIRST_WINS = "fw"


@dataclass(frozen=True)
class ConsensusConfig:
    """Protocol parameters; `version` identifies them in audit records."""

    theta: float = 0.20
    strategy: Strategy = Strategy.TRIMMED_WEIGHTED_MEAN
    round_timeout: float = 60.0
    trim_rounding: str = "floor"
    tie: str = "lower"

    def __post_init__(self):
        if not 0.0 < self.theta < 0.5:
            raise ValueError("theta must be in (0, 0.5): %r" % self.theta)
        if self.round_timeout <= 0:
            raise ValueError("round_timeout must be positive")
        if self.trim_rounding not in ("floor", "ceil"):
            raise ValueError("trim_rounding must be 'floor' or 'ceil'")
        if self.tie not in ("lower", "upper"):
            raise ValueError("tie must be 'lower' or 'upper'")
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    @property
    def version(self) -> str:
        """Identifier of this configuration."""
        return "%s/theta=%s/%s/timeout=%s" % (
            self.strategy.value,
            self.theta,
            self.trim_rounding,
            self.round_timeout,
        )


@dataclass(frozen=True)
class CommunicationInterface:
    """Operations exposed to peers and the agreement protocol used with them."""

    peer_operations: frozenset = frozenset()
    protocol: ConsensusConfig = ConsensusConfig()

    def __post_init__(self):
        object.__setattr__(self, "peer_operations", frozenset(self.peer_operations))


@dataclass(frozen=True)
class Interpretation:
    """A classification asserted about a target."""

    target_id: str
    classification: Classification


@dataclass(frozen=True)
class ConsensusOutcome:
    """Result of one aggregation with everything needed to re-verify it."""

    consensus_score: float
    consensus_class: Classification
    strategy: Strategy
    inputs: tuple
    included: tuple
    trimmed_out: tuple
    weights_used: tuple
    theta: Optional[float] = None
    policy_version: str = ""
    trim_skipped: bool = False
    unweighted_fallback: bool = False
    target_id: str = ""
    audit_record_id: Optional[str] = None

    def to_audit_dict(self) -> dict:
        """JSON-shaped audit form of the outcome."""
        return {
            "target_id": self.target_id,
            "strategy": self.strategy.value,
            "theta": self.theta,
            "policy_version": self.policy_version,
            "consensus_score": self.consensus_score,
            "consensus_class": self.consensus_class.label,
            "inputs": [sub.to_dict() for sub in self.inputs],
            "weights": [[sid, weight] for sid, weight in self.weights_used],
            "included": [sub.submitter_id for sub in self.included],
            "trimmed_out": [sub.submitter_id for sub in self.trimmed_out],
            "trim_skipped": self.trim_skipped,
            "unweighted_fallback": self.unweighted_fallback,
            "audit_record_id": self.audit_record_id,
        }

    def to_json(self) -> str:
        """Canonical one-line JSON audit form."""
        return canonical_json(self.to_audit_dict())


def detect_conflict(a: Interpretation, b: Interpretation) -> bool:
    """True when both interpretations concern one target but disagree."""
    return a.target_id == b.target_id and a.classification != b.classification


def trim_count(n: int, theta: float, rounding: str = "floor") -> int:
    """Elements trimmed from each end; 0 when trimming would leave nothing."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 < theta < 0.5:
        raise ValueError("theta must be in (0, 0.5): %r" % theta)
    exact = Fraction(theta).limit_denominator(1000000) * n
    raw = math.ceil(exact) if rounding == "ceil" else math.floor(exact)
    k = max(1, raw)
    if n - 2 * k < 1:
        return 0
    return k


def sort_key(sub: Submission):
    """Total order used before trimming."""
    return (sub.score, sub.weight, sub.submitter_id, sub.order_index)


def _require(subs) -> tuple:
    subs = tuple(subs)
    if not subs:
        raise EmptyRound("No submissions to aggregate")
    return subs


def trimmed_weighted_mean(
    subs: Sequence[Submission],
    theta: float = 0.20,
    rounding: str = "floor",
    tie: str = "lower",
    policy_version: str = "",
) -> ConsensusOutcome:
    """Trim ``k`` from each end of the ordered scores and average the rest
    weighted by reputation times confidence."""
    subs = _require(subs)
    ordered = sorted(subs, key=sort_key)
    n = len(ordered)
    k = trim_count(n, theta, rounding)
    if k == 0:
        logger.debug("Trim skipped for n=%d, theta=%s", n, theta)
    included = tuple(ordered[k : n - k])
    trimmed_out = tuple(ordered[:k]) + tuple(ordered[n - k :])

    numerator = Fraction(0)
    denominator = Fraction(0)
    for sub in included:
        weight = Fraction(sub.weight)
        numerator += weight * Fraction(sub.score)
        denominator += weight
    fallback = denominator == 0
    if fallback:
        logger.warning("All surviving weights are zero; using unweighted mean")
        numerator = sum((Fraction(sub.score) for sub in included), Fraction(0))
        denominator = Fraction(len(included))
    score = float(numerator / denominator)

    return ConsensusOutcome(
        consensus_score=score,
        consensus_class=score_to_classification(score, tie),
        strategy=Strategy.TRIMMED_WEIGHTED_MEAN,
        inputs=subs,
        included=included,
        trimmed_out=trimmed_out,
        weights_used=tuple((sub.submitter_id, sub.weight) for sub in ordered),
        theta=theta,
        policy_version=policy_version,
        trim_skipped=k == 0,
        unweighted_fallback=fallback,
    )


def simple_majority(
    subs: Sequence[Submission], tie: str = "lower", policy_version: str = ""
) -> ConsensusOutcome:
    """Plurality vote with equal weights; ties go to the lower-score label."""
    subs = _require(subs)
    counts = Counter(sub.classification for sub in subs)
    direction = 1 if tie == "lower" else -1
    winner = max(counts, key=lambda c: (counts[c], -direction * c.value))
    return ConsensusOutcome(
        consensus_score=winner.score,
        consensus_class=winner,
        strategy=Strategy.SIMPLE_MAJORITY,
        inputs=subs,
        included=subs,
        trimmed_out=(),
        weights_used=tuple((sub.submitter_id, 1.0) for sub in subs),
        policy_version=policy_version,
    )


def first_wins(subs: Sequence[Submission], policy_version: str = "") -> ConsensusOutcome:
    """Classification of the earliest submission."""
    subs = _require(subs)
    indices = [sub.order_index for sub in subs]
    if len(set(indices)) != len(indices):
        raise DuplicateOrderIndex("Duplicate order_index among submissions")
    first = min(subs, key=lambda sub: sub.order_index)
    return ConsensusOutcome(
        consensus_score=first.score,
        consensus_class=first.classification,
        strategy=Strategy.FIRST_WINS,
        inputs=subs,
        included=(first,),
        trimmed_out=(),
        weights_used=((first.submitter_id, 1.0),),
        policy_version=policy_version,
    )


def aggregate(subs: Sequence[Submission], config: ConsensusConfig) -> ConsensusOutcome:
    """Apply the configured strategy."""
    if config.strategy is Strategy.SIMPLE_MAJORITY:
        return simple_majority(subs, config.tie, config.version)
    if config.strategy is Strategy.FIRST_WINS:
        return first_wins(subs, config.version)
    return trimmed_weighted_mean(
        subs, config.theta, config.trim_rounding, config.tie, config.version
    )


class AgreementRound:
    """Single-round agreement for one target.

    One owner offers arrivals and closes the round; a closed round is
    read-only. Arrivals later than the deadline are held back for the next
    round of the same target.
    """

    def __init__(self, target_id: str, config: ConsensusConfig = None, start: float = 0.0):
        self.target_id = target_id
        self.config = config or ConsensusConfig()
        self.start = start
        self.deadline = start + self.config.round_timeout
        self.closed = False
        self._received = []
        self._late = []

    @property
    def state(self) -> str:
        """``"Open"`` or ``"Closed"``."""
        return "Closed" if self.closed else "Open"

    def receive(self, submission: Submission, at: float) -> bool:
        """Offer a submission arriving at virtual time ``at``.

        Returns False when it missed the deadline.
        """
        if self.closed:
            raise RoundClosed("Round for %s is closed" % self.target_id)
        if at > self.deadline:
            self._late.append((at, submission))
            logger.debug("%s: late arrival from %s", self.target_id, submission.submitter_id)
            return False
        self._received.append((at, submission))
        return True

    @property
    def received(self) -> tuple:
        """On-time arrivals ordered by time, then submitter id."""
        return tuple(sorted(self._received, key=lambda item: (item[0], item[1].submitter_id)))

    @property
    def late(self) -> tuple:
        """Arrivals that missed the deadline."""
        return tuple(sorted(self._late, key=lambda item: (item[0], item[1].submitter_id)))

    @property
    def n(self) -> int:
        """Number of on-time submissions."""
        return len(self._received)

    @property
    def k(self) -> int:
        """Elements the trim removes per side."""
        if not self._received:
            return 0
        return trim_count(self.n, self.config.theta, self.config.trim_rounding)

    @property
    def f(self) -> int:
        """Adversarial extremes per side the round tolerates."""
        return self.k

    def close(self) -> Optional[ConsensusOutcome]:
        """Close at the deadline; None when the round is void."""
        self.closed = True
        if not self._received:
            logger.warning("Round for %s is void: no on-time submissions", self.target_id)
            return None
        subs = [sub for _, sub in self.received]
        return replace(aggregate(subs, self.config), target_id=self.target_id)

    def carry_over(self) -> "AgreementRound":
        """Next round for the same target, seeded with the late arrivals."""
        if not self.closed:
            raise RuntimeError("Close the round before carrying over")
        successor = AgreementRound(self.target_id, self.config, start=self.deadline)
        for at, sub in self.late:
            successor.receive(sub, at)
        return successor


def run_round(
    target_id: str,
    arrivals: Iterable,
    config: ConsensusConfig = None,
    start: float = 0.0,
    audit=None,
    agent: str = "",
) -> Optional[ConsensusOutcome]:
    """Collect ``(time, submission)`` arrivals, close at the deadline and
    aggregate. Every round, void or not, emits one audit record when an
    audit log is given."""
    config = config or ConsensusConfig()
    agreement = AgreementRound(target_id, config, start)
    for at, sub in arrivals:
        agreement.receive(sub, at)
    outcome = agreement.close()
    if audit is None:
        return outcome
    if outcome is None:
        audit.emit(
            activity="consensus-round-void",
            inputs=[sub.submitter_id for _, sub in agreement.late],
            outputs=[],
            agent=agent or target_id,
            policy_version=config.version,
            timestamp=agreement.deadline,
        )
        return None
    record = audit.emit(
        activity="consensus-round",
        inputs=[sub.submitter_id for sub in outcome.inputs],
        outputs=[outcome.consensus_class.label, repr(outcome.consensus_score)],
        agent=agent or target_id,
        policy_version=config.version,
        timestamp=agreement.deadline,
        detail=(
            ("target_id", target_id),
            ("trimmed_out", ",".join(sub.submitter_id for sub in outcome.trimmed_out)),
        ),
    )
    return replace(outcome, audit_record_id=record.record_id)
