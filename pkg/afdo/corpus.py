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
`afdo.corpus`
================================================================================

Conflict-corpus construction: reputation and confidence assignment, salted
submitter hashing, the four-stage conflict filter over raw rows, and a seeded
generator of synthetic corpora matching the published dataset statistics.

Implementation Notes
--------------------

Raw rows are read from tab-delimited files with the header::

    variant_id  submitter  category  classification  review_status  assertion_criteria

one line per submission. ``assertion_criteria`` is ``missing`` for a variant
flagged as lacking assertion criteria (any of its lines) and ``provided``
otherwise.

Generation is a pure function of the `CorpusSpec`. Per-record randomness comes from
``numpy.random.SeedSequence(seed, spawn_key=(1, index))`` so a record can be
rebuilt on its own. Submission counts are a shifted geometric (minimum two)
drawn by stratified inverse-CDF sampling so the corpus mean lands close to
the target; categories follow a golden-ratio sequence over the global
submission index so their proportions converge to the mix.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from afdo.core_model import (
    GROUP_MEMBERS,
    AFDOError,
    Classification,
    ConflictRecord,
    DisagreementBucket,
    NotAConflict,
    Submission,
    SubmitterCategory,
    classify_bucket,
)

logger = logging.getLogger(__name__)

PROJECT_SALT = "afdo-2026"

REFERENCE_BUCKET_COUNTS = (
    (DisagreementBucket.PLP_VS_VUS, 1744),
    (DisagreementBucket.VUS_VS_LBB, 1918),
    (DisagreementBucket.PLP_VS_LBB, 65),
    (DisagreementBucket.THREE_GROUP_SPAN, 187),
)

DEFAULT_CATEGORY_MIX = (
    (SubmitterCategory.CLINICAL_LAB, 0.422),
    (SubmitterCategory.RESEARCH_LAB, 0.118),
    (SubmitterCategory.INDIVIDUAL, 0.460),
)

REPUTATION = {
    SubmitterCategory.CLINICAL_LAB: 0.85,
    SubmitterCategory.RESEARCH_LAB: 0.70,
    SubmitterCategory.INDIVIDUAL: 0.55,
}

REVIEW_STATUSES = (
    ("criteria_provided_multiple_submitters_no_conflicts", 0.85),
    ("criteria_provided_single_submitter", 0.70),
    ("criteria_provided_conflicting_interpretations", 0.55),
    ("no_assertion_criteria_provided", 0.40),
)

EXPERT_STATUSES = ("reviewed_by_expert_panel", "practice_guideline")

RAW_COLUMNS = (
    "variant_id",
    "submitter",
    "category",
    "classification",
    "review_status",
    "assertion_criteria",
)

FILTER_STAGES = (
    "total",
    "distinct_submitters",
    "expert_panel",
    "non_expert_submissions",
    "major_class_disagreement",
)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class InfeasibleCorpusSpec(AFDOError, ValueError):
    """Raised when no corpus can satisfy the requested statistics."""


def _letters(text: str) -> str:
    return "".join(ch for ch in str(text).lower() if ch.isalpha())


_CONFIDENCE = {_letters(status): value for status, value in REVIEW_STATUSES}
_EXPERT_KEYS = {_letters(status) for status in EXPERT_STATUSES}


def assign_reputation(category) -> float:
    """Initial reputation of a submitter category."""
    category = SubmitterCategory(category)
    if category is SubmitterCategory.EXPERT_PANEL:
        raise ValueError("Expert-panel submissions are ground truth, not consensus inputs")
    return REPUTATION[category]


def assign_confidence(review_status: str) -> float:
    """Confidence of a submission from its review status; spelling is
    normalised so ``criteria provided, single submitter`` and
    ``criteria_provided_single_submitter`` are the same status."""
    try:
        return _CONFIDENCE[_letters(review_status)]
    except KeyError:
        raise ValueError("Unknown review status: %r" % review_status) from None


def is_expert_status(review_status: str) -> bool:
    """True for ``reviewed by expert panel`` and ``practice guideline``."""
    return _letters(review_status) in _EXPERT_KEYS


def hash_submitter(name: str, salt: str = PROJECT_SALT) -> str:
    """First eight hex digits of SHA-256 over ``salt + name``."""
    if not name:
        raise ValueError("Submitter name must be non-empty")
    return hashlib.sha256((salt + name).encode("utf-8")).hexdigest()[:8]


def round_half_up(value) -> int:
    """Nearest integer, halves rounded up, computed exactly."""
    return math.floor(Fraction(value) + Fraction(1, 2))


def scaled_bucket_counts(scale: float, counts=REFERENCE_BUCKET_COUNTS) -> tuple:
    """Bucket counts scaled by cumulative proportional rounding, so the
    scaled counts sum to the rounded scaled total."""
    factor = Fraction(scale).limit_denominator(10**6)
    scaled, cumulative, previous = [], 0, 0
    for bucket, count in counts:
        cumulative += count
        target = round_half_up(factor * cumulative)
        scaled.append((bucket, target - previous))
        previous = target
    return tuple(scaled)


# Raw rows and the filter pipeline


@dataclass(frozen=True)
class RawSubmission:
    """One submission line of the raw dump."""

    submitter: str
    category: str
    classification: str
    review_status: str

    @property
    def is_expert(self) -> bool:
        """Expert-panel adjudication, by status or by category."""
        return is_expert_status(self.review_status) or _letters(self.category) == "expertpanel"


@dataclass(frozen=True)
class RawVariantRow:
    """All raw submissions for one variant."""

    variant_id: str
    submissions: tuple = ()
    lacks_assertion_criteria: bool = False

    @property
    def has_expert_panel(self) -> bool:
        """True when some submission is an expert-panel adjudication."""
        return any(sub.is_expert for sub in self.submissions)


def read_raw_rows(stream) -> list:
    """Group the lines of a tab-delimited raw dump by variant, in file order."""
    reader = csv.DictReader(stream, delimiter="\t")
    missing = [name for name in RAW_COLUMNS if name not in (reader.fieldnames or ())]
    if missing:
        raise ValueError("Raw file is missing columns: %s" % ", ".join(missing))
    grouped, flags = {}, {}
    for line in reader:
        variant = line["variant_id"].strip()
        grouped.setdefault(variant, []).append(
            RawSubmission(
                submitter=line["submitter"].strip(),
                category=line["category"].strip(),
                classification=line["classification"].strip(),
                review_status=line["review_status"].strip(),
            )
        )
        missing_criteria = _letters(line["assertion_criteria"]) == "missing"
        flags[variant] = flags.get(variant, False) or missing_criteria
    return [RawVariantRow(variant, tuple(subs), flags[variant]) for variant, subs in grouped.items()]


def write_raw_rows(rows: Iterable[RawVariantRow], stream) -> None:
    """Inverse of `read_raw_rows`."""
    writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
    writer.writerow(RAW_COLUMNS)
    for row in rows:
        flag = "missing" if row.lacks_assertion_criteria else "provided"
        for sub in row.submissions:
            writer.writerow(
                (row.variant_id, sub.submitter, sub.category, sub.classification, sub.review_status, flag)
            )


def _category(text: str) -> SubmitterCategory:
    key = _letters(text)
    for category in (SubmitterCategory.CLINICAL_LAB, SubmitterCategory.RESEARCH_LAB):
        if _letters(category.value) == key:
            return category
    return SubmitterCategory.INDIVIDUAL


def _major_groups(subs: Iterable[RawSubmission]) -> frozenset:
    return frozenset(Classification.from_label(sub.classification).group for sub in subs)


def to_conflict_record(row: RawVariantRow, salt: str = PROJECT_SALT) -> ConflictRecord:
    """Conflict record of a row that survived the filters."""
    expert = next(sub for sub in row.submissions if sub.is_expert)
    ground_truth = Submission(
        submitter_id=hash_submitter(expert.submitter, salt),
        category=SubmitterCategory.EXPERT_PANEL,
        classification=Classification.from_label(expert.classification),
        reputation=1.0,
        confidence=1.0,
        review_status=expert.review_status,
    )
    submissions = []
    for sub in row.submissions:
        if sub.is_expert:
            continue
        category = _category(sub.category)
        submissions.append(
            Submission(
                submitter_id=hash_submitter(sub.submitter, salt),
                category=category,
                classification=Classification.from_label(sub.classification),
                reputation=assign_reputation(category),
                confidence=assign_confidence(sub.review_status),
                order_index=len(submissions),
                review_status=sub.review_status,
            )
        )
    return ConflictRecord(row.variant_id, ground_truth, tuple(submissions), classify_bucket(submissions))


def filter_pipeline(rows: Sequence[RawVariantRow], salt: str = PROJECT_SALT):
    """Apply the four conflict filters in order.

    Returns the surviving conflict records and the stage counts
    ``[total, distinct submitters, expert panel, non-expert submissions,
    major-class disagreement]``.
    """
    counts = [len(rows)]
    stage = [row for row in rows if len({sub.submitter for sub in row.submissions}) >= 2]
    counts.append(len(stage))
    stage = [row for row in stage if row.has_expert_panel]
    counts.append(len(stage))
    stage = [row for row in stage if sum(1 for sub in row.submissions if not sub.is_expert) >= 2]
    counts.append(len(stage))
    stage = [
        row
        for row in stage
        if not row.lacks_assertion_criteria
        and len(_major_groups(sub for sub in row.submissions if not sub.is_expert)) >= 2
    ]
    counts.append(len(stage))
    logger.info("Filter pipeline: %s", " -> ".join(str(count) for count in counts))
    return [to_conflict_record(row, salt) for row in stage], counts


# Synthetic generation


@dataclass(frozen=True)
class CorpusSpec:
    """Target statistics of a synthetic corpus.

    Each record has a community label that most submitters repeat. It is the
    ground truth except in a ``contested_rate`` share of records, where the
    panel sided with another group of the bucket. ``agreement`` is the
    probability, per submitter category, that a submission beyond the forced
    one-per-group minimum repeats the community label; a dissenting
    submission stays in the community group with probability
    ``sibling_dissent`` when that group has a second label.
    """

    total_records: int
    bucket_counts: tuple
    mean_submissions: float = 8.5
    category_mix: tuple = DEFAULT_CATEGORY_MIX
    seed: int = 42
    max_submissions: Optional[int] = None
    agreement: tuple = (
        (SubmitterCategory.CLINICAL_LAB, 0.90),
        (SubmitterCategory.RESEARCH_LAB, 0.88),
        (SubmitterCategory.INDIVIDUAL, 0.85),
    )
    contested_rate: float = 0.35
    sibling_dissent: float = 0.5

    def __post_init__(self):
        counts = tuple((DisagreementBucket(bucket), int(count)) for bucket, count in dict(self.bucket_counts).items())
        object.__setattr__(self, "bucket_counts", counts)
        mix = tuple((SubmitterCategory(cat), float(p)) for cat, p in dict(self.category_mix).items())
        object.__setattr__(self, "category_mix", mix)
        agreement = tuple((SubmitterCategory(cat), float(p)) for cat, p in dict(self.agreement).items())
        object.__setattr__(self, "agreement", agreement)
        if any(count < 0 for _, count in counts):
            raise ValueError("Bucket counts must be non-negative")
        if sum(count for _, count in counts) != self.total_records:
            raise ValueError("Bucket counts must sum to total_records")
        if abs(sum(p for _, p in mix) - 1.0) > 1e-9:
            raise ValueError("category_mix must sum to 1")
        if any(cat is SubmitterCategory.EXPERT_PANEL for cat, _ in mix):
            raise ValueError("Expert panels are ground truth, not part of the category mix")
        for name, value in (("contested_rate", self.contested_rate), ("sibling_dissent", self.sibling_dissent)):
            if not 0.0 <= value <= 1.0:
                raise ValueError("%s must be in [0, 1]: %r" % (name, value))
        if any(not 0.0 <= p <= 1.0 for _, p in agreement):
            raise ValueError("agreement probabilities must be in [0, 1]")

    @classmethod
    def default(cls, scale: float = 1.0, seed: int = 42, **kwargs) -> "CorpusSpec":
        """Published bucket structure scaled by ``scale``."""
        counts = scaled_bucket_counts(scale)
        return cls(sum(count for _, count in counts), counts, seed=seed, **kwargs)

    def count(self, bucket: DisagreementBucket) -> int:
        """Requested records for ``bucket``."""
        return dict(self.bucket_counts).get(bucket, 0)

    def check_feasible(self) -> None:
        """Raise `InfeasibleCorpusSpec` when the statistics cannot be met."""
        if self.mean_submissions <= 2.0:
            raise InfeasibleCorpusSpec("mean_submissions must exceed the minimum of 2")
        if self.max_submissions is not None:
            needed = max((len(bucket.groups) for bucket, count in self.bucket_counts if count), default=2)
            if self.max_submissions < needed:
                raise InfeasibleCorpusSpec(
                    "max_submissions=%d cannot span %d major groups" % (self.max_submissions, needed)
                )
            if self.max_submissions < self.mean_submissions:
                raise InfeasibleCorpusSpec("max_submissions is below mean_submissions")


def _record_rng(seed, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, index)))


def _submission_counts(spec: CorpusSpec, buckets: Sequence[DisagreementBucket]) -> list:
    """Stratified shifted-geometric counts with mean ``spec.mean_submissions``."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0,)))
    total = len(buckets)
    p = 1.0 / (spec.mean_submissions - 1.0)
    strata = rng.permutation(total)
    jitter = rng.random(total)
    counts = []
    for i, bucket in enumerate(buckets):
        u = (strata[i] + jitter[i]) / total
        draws = 1 if u <= 0.0 else max(1, math.ceil(math.log1p(-u) / math.log1p(-p)))
        n = max(1 + draws, len(bucket.groups))
        if spec.max_submissions is not None:
            n = min(n, spec.max_submissions)
        counts.append(n)
    return counts


def _category_for(phase: float, index: int, cumulative: Sequence) -> SubmitterCategory:
    position = (phase + _GOLDEN * index) % 1.0
    for category, bound in cumulative:
        if position < bound:
            return category
    return cumulative[-1][0]


def _status(rng: np.random.Generator) -> str:
    roll = rng.random()
    if roll < 0.15:
        return REVIEW_STATUSES[0][0]
    if roll < 0.70:
        return REVIEW_STATUSES[1][0]
    if roll < 0.85:
        return REVIEW_STATUSES[2][0]
    return REVIEW_STATUSES[3][0]


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


def _generate_record(spec, index, bucket, n, offset, phase, cumulative) -> ConflictRecord:
    rng = _record_rng(spec.seed, index)
    groups = sorted(bucket.groups, key=lambda g: g.value)
    gt_group = _pick(rng, groups)
    gt_class = _pick(rng, GROUP_MEMBERS[gt_group])
    community = gt_class
    if rng.random() < spec.contested_rate:
        community = _pick(rng, GROUP_MEMBERS[_pick(rng, [g for g in groups if g is not gt_group])])
    home = community.group
    others = [g for g in groups if g is not home]
    siblings = [c for c in GROUP_MEMBERS[home] if c is not community]
    agreement = dict(spec.agreement)

    def dissent():
        if siblings and rng.random() < spec.sibling_dissent:
            return siblings[0]
        return _pick(rng, GROUP_MEMBERS[_pick(rng, others)])

    categories = [_category_for(phase, offset + j, cumulative) for j in range(n)]
    # One submission per group of the bucket, the community label first.
    labels = [community] + [_pick(rng, GROUP_MEMBERS[group]) for group in others]
    for j in range(len(labels), n):
        labels.append(community if rng.random() < agreement.get(categories[j], 0.85) else dissent())
    order = rng.permutation(n)
    names = {}
    for category in SubmitterCategory:
        wanted = sum(1 for c in categories if c is category)
        if wanted:
            names[category] = list(rng.choice(400, size=wanted, replace=False))
    submissions = []
    for j in range(n):
        category = categories[j]
        status = _status(rng)
        submissions.append(
            Submission(
                submitter_id=hash_submitter("%s-%03d" % (category.value, names[category].pop())),
                category=category,
                classification=labels[j],
                reputation=assign_reputation(category),
                confidence=assign_confidence(status),
                order_index=int(order[j]),
                review_status=status,
            )
        )
    ground_truth = Submission(
        submitter_id=hash_submitter("expert-panel-%03d" % int(rng.integers(60))),
        category=SubmitterCategory.EXPERT_PANEL,
        classification=gt_class,
        reputation=1.0,
        confidence=1.0,
        review_status=EXPERT_STATUSES[0],
    )
    ordered = tuple(sorted(submissions, key=lambda sub: sub.order_index))
    record = ConflictRecord("VCV%09d" % (index + 1), ground_truth, ordered, bucket)
    return record.check_conflict()


def generate_corpus(spec: CorpusSpec) -> list:
    """Synthetic conflict records, exactly ``spec.bucket_counts`` per bucket."""
    spec.check_feasible()
    buckets = [bucket for bucket, count in spec.bucket_counts for _ in range(count)]
    counts = _submission_counts(spec, buckets)
    phase = float(np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(2,))).random())
    cumulative, running = [], 0.0
    for category, share in spec.category_mix:
        running += share
        cumulative.append((category, running))
    records, offset = [], 0
    for index, (bucket, n) in enumerate(zip(buckets, counts)):
        records.append(_generate_record(spec, index, bucket, n, offset, phase, cumulative))
        offset += n
    logger.info("Generated %d records (%d submissions)", len(records), offset)
    return records


@dataclass
class CorpusStatistics:
    """Aggregate view of a corpus."""

    records: int = 0
    submissions: int = 0
    bucket_counts: dict = field(default_factory=dict)
    category_counts: dict = field(default_factory=dict)

    @property
    def mean_submissions(self) -> float:
        """Mean submissions per record."""
        return self.submissions / self.records if self.records else 0.0

    def category_share(self, category: SubmitterCategory) -> float:
        """Fraction of submissions from ``category``."""
        if not self.submissions:
            return 0.0
        return self.category_counts.get(category, 0) / self.submissions

    def to_dict(self) -> dict:
        """JSON-shaped summary."""
        return {
            "records": self.records,
            "submissions": self.submissions,
            "mean_submissions": round(self.mean_submissions, 6),
            "buckets": {bucket.value: self.bucket_counts.get(bucket, 0) for bucket in DisagreementBucket},
            "categories": {
                category.value: round(self.category_share(category), 6) for category, _ in DEFAULT_CATEGORY_MIX
            },
        }


def corpus_statistics(records: Iterable[ConflictRecord]) -> CorpusStatistics:
    """Counts by bucket and category."""
    stats = CorpusStatistics()
    for record in records:
        stats.records += 1
        stats.submissions += len(record.submissions)
        stats.bucket_counts[record.bucket] = stats.bucket_counts.get(record.bucket, 0) + 1
        for sub in record.submissions:
            stats.category_counts[sub.category] = stats.category_counts.get(sub.category, 0) + 1
    return stats


def records_to_raw_rows(records: Iterable[ConflictRecord]) -> list:
    """Raw rows equivalent to ``records``; used to push a generated corpus
    back through `filter_pipeline`. Submitter hashes stand in for names."""
    rows = []
    for record in records:
        subs = [
            RawSubmission(
                record.ground_truth.submitter_id,
                SubmitterCategory.EXPERT_PANEL.value,
                record.ground_truth.classification.label,
                record.ground_truth.review_status or EXPERT_STATUSES[0],
            )
        ]
        for sub in sorted(record.submissions, key=lambda s: s.order_index):
            subs.append(RawSubmission(sub.submitter_id, sub.category.value, sub.classification.label, sub.review_status))
        rows.append(RawVariantRow(record.target_id, tuple(subs)))
    return rows


def is_conflict(record: ConflictRecord) -> bool:
    """True when the record satisfies the conflict invariants."""
    try:
        record.check_conflict()
    except NotAConflict:
        return False
    return True

