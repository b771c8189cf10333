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
`afdo.core_model`
================================================================================

Records of the formal object model and the value types shared by every other
module: the classification scale, submissions, conflict records, disagreement
buckets, FDO and aFDO records, and the operation and type registries.

Implementation Notes
--------------------

All records are frozen dataclasses and safe to share between threads.
Conflict records serialise to one JSON object per line using the field names
of the conflict dataset (``variant_id``, ``ground_truth``, ``submissions``,
``submitter_hash``, ``category``, ``classification``, ``review_status``,
``R``, ``conf``).
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence

if TYPE_CHECKING:  # pragma: no cover
    from afdo.consensus import CommunicationInterface
    from afdo.events import EventInterface
    from afdo.policy import Policy
    from afdo.trust import TrustState

logger = logging.getLogger(__name__)

MANDATORY_OPERATIONS = ("Create", "Retrieve", "Update", "Delete")
DOIP_OPERATIONS = MANDATORY_OPERATIONS + ("Search", "ListOperations", "Hello")
DOMAIN_OPERATIONS = (
    "seekClinicalValidation",
    "negotiateClassification",
    "correlateWithGenotype",
    "findSimilarPatterns",
)
BUILTIN_ACTIONS = ("ANNOUNCE", "VALIDATE", "RECONCILE", "UPDATETRUST")


class AFDOError(Exception):
    """Base class for errors raised by this package."""


class UnknownClassification(AFDOError, ValueError):
    """Raised when a label is not on the five-level scale."""


class NotAConflict(AFDOError, ValueError):
    """Raised when submissions span fewer than two major groups."""


class UnknownType(AFDOError, ValueError):
    """Raised when an FDO type is not in the registry."""


class Classification(enum.IntEnum):
    """Five-level pathogenicity scale, ordered from least to most pathogenic."""

    BENIGN = 0
    LIKELY_BENIGN = 1
    VUS = 2
    LIKELY_PATHOGENIC = 3
    PATHOGENIC = 4

    @property
    def score(self) -> float:
        """Fixed scale value of the label."""
        return _SCALE[self]

    @property
    def label(self) -> str:
        """Serialised label."""
        return _LABELS[self]

    @property
    def group(self) -> "MajorGroup":
        """Major group the label belongs to."""
        return _GROUPS[self]

    @classmethod
    def from_label(cls, text: str) -> "Classification":
        """Parse a label, accepting the spellings found in submission data."""
        key = "".join(ch for ch in str(text).lower() if ch.isalpha())
        try:
            return _LABEL_KEYS[key]
        except KeyError:
            raise UnknownClassification("Unknown classification: %r" % text) from None


_SCALE = {
    Classification.BENIGN: 0.0,
    Classification.LIKELY_BENIGN: 0.25,
    Classification.VUS: 0.5,
    Classification.LIKELY_PATHOGENIC: 0.75,
    Classification.PATHOGENIC: 1.0,
}

_LABELS = {
    Classification.BENIGN: "Benign",
    Classification.LIKELY_BENIGN: "Likely Benign",
    Classification.VUS: "VUS",
    Classification.LIKELY_PATHOGENIC: "Likely Pathogenic",
    Classification.PATHOGENIC: "Pathogenic",
}

_LABEL_KEYS = {
    "benign": Classification.BENIGN,
    "likelybenign": Classification.LIKELY_BENIGN,
    "vus": Classification.VUS,
    "uncertainsignificance": Classification.VUS,
    "likelypathogenic": Classification.LIKELY_PATHOGENIC,
    "pathogenic": Classification.PATHOGENIC,
}


class MajorGroup(enum.Enum):
    """Partition of the scale used to define disagreement."""

    PLP = "P/LP"
    VUS = "VUS"
    BLB = "B/LB"


_GROUPS = {
    Classification.BENIGN: MajorGroup.BLB,
    Classification.LIKELY_BENIGN: MajorGroup.BLB,
    Classification.VUS: MajorGroup.VUS,
    Classification.LIKELY_PATHOGENIC: MajorGroup.PLP,
    Classification.PATHOGENIC: MajorGroup.PLP,
}

GROUP_MEMBERS = {
    MajorGroup.PLP: (Classification.LIKELY_PATHOGENIC, Classification.PATHOGENIC),
    MajorGroup.VUS: (Classification.VUS,),
    MajorGroup.BLB: (Classification.BENIGN, Classification.LIKELY_BENIGN),
}


class DisagreementBucket(enum.Enum):
    """Which major groups a conflict spans."""

    PLP_VS_VUS = "PLP_vs_VUS"
    VUS_VS_LBB = "VUS_vs_LBB"
    PLP_VS_LBB = "PLP_vs_LBB"
    THREE_GROUP_SPAN = "ThreeGroupSpan"

    @property
    def groups(self) -> frozenset:
        """Major groups present in a record of this bucket."""
        return _BUCKET_GROUPS[self]


_BUCKET_GROUPS = {
    DisagreementBucket.PLP_VS_VUS: frozenset((MajorGroup.PLP, MajorGroup.VUS)),
    DisagreementBucket.VUS_VS_LBB: frozenset((MajorGroup.VUS, MajorGroup.BLB)),
    DisagreementBucket.PLP_VS_LBB: frozenset((MajorGroup.PLP, MajorGroup.BLB)),
    DisagreementBucket.THREE_GROUP_SPAN: frozenset(MajorGroup),
}


class SubmitterCategory(enum.Enum):
    """Kind of organisation behind a submission."""

    CLINICAL_LAB = "clinical_lab"
    RESEARCH_LAB = "research_lab"
    INDIVIDUAL = "individual"
    EXPERT_PANEL = "expert_panel"


def classification_to_score(c: Classification) -> float:
    """Scale value of a classification (Benign 0.0 ... Pathogenic 1.0)."""
    return Classification(c).score


def score_to_classification(s: float, tie: str = "lower") -> Classification:
    """Nearest label on the scale.

    A score exactly between two labels resolves to the lower label, or to the
    upper one when ``tie="upper"``.
    """
    if tie not in ("lower", "upper"):
        raise ValueError("tie must be 'lower' or 'upper'")
    if not 0.0 <= s <= 1.0:
        raise ValueError("Score out of range [0, 1]: %r" % s)
    direction = 1 if tie == "lower" else -1
    return min(Classification, key=lambda c: (abs(s - c.score), direction * c.value))


def classify_bucket(submissions: Iterable["Submission"]) -> DisagreementBucket:
    """Disagreement bucket determined by the set of major groups present."""
    groups = frozenset(sub.classification.group for sub in submissions)
    for bucket, members in _BUCKET_GROUPS.items():
        if groups == members:
            return bucket
    raise NotAConflict("Submissions span only %d major group(s)" % len(groups))


@dataclass(frozen=True)
class Submission:
    """One participant's classification, the unit of consensus input."""

    submitter_id: str
    category: SubmitterCategory
    classification: Classification
    reputation: float
    confidence: float
    order_index: int = 0
    review_status: str = ""

    def __post_init__(self):
        if not self.submitter_id:
            raise ValueError("submitter_id must be non-empty")
        if not 0.0 <= self.reputation <= 1.0:
            raise ValueError("reputation out of [0, 1]: %r" % self.reputation)
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence out of [0, 1]: %r" % self.confidence)

    @property
    def score(self) -> float:
        """Scale value of the submitted classification."""
        return self.classification.score

    @property
    def weight(self) -> float:
        """Reputation times confidence."""
        return self.reputation * self.confidence

    def to_dict(self, with_weights: bool = True) -> dict:
        """Serialisable form; the ground truth omits ``R`` and ``conf``."""
        data = {
            "submitter_hash": self.submitter_id,
            "category": self.category.value,
            "classification": self.classification.label,
            "review_status": self.review_status,
        }
        if with_weights:
            data["R"] = self.reputation
            data["conf"] = self.confidence
        return data

    @classmethod
    def from_dict(cls, data: Mapping, order_index: int = 0) -> "Submission":
        """Inverse of `to_dict`; missing weights default to 1.0."""
        return cls(
            submitter_id=data["submitter_hash"],
            category=SubmitterCategory(data["category"]),
            classification=Classification.from_label(data["classification"]),
            reputation=float(data.get("R", 1.0)),
            confidence=float(data.get("conf", 1.0)),
            order_index=order_index,
            review_status=data.get("review_status", ""),
        )


@dataclass(frozen=True)
class ConflictRecord:
    """A target with disagreeing submissions and a held-out adjudication.

    Construction checks the structural invariants. The conflict invariants
    (two distinct submitters, two major groups) are checked by
    `check_conflict`, because records perturbed by an attack may collapse to a
    single group while keeping their original bucket.
    """

    target_id: str
    ground_truth: Submission
    submissions: tuple
    bucket: DisagreementBucket
    extras: tuple = ()

    def __post_init__(self):
        if not self.target_id:
            raise ValueError("target_id must be non-empty")
        if not self.submissions:
            raise ValueError("A conflict record needs at least one submission")
        if self.ground_truth.category is not SubmitterCategory.EXPERT_PANEL:
            raise ValueError("Ground truth must come from an expert panel")
        if self.ground_truth in self.submissions:
            raise ValueError("Ground truth must not be a consensus input")

    def check_conflict(self) -> "ConflictRecord":
        """Verify the conflict invariants; returns self for chaining."""
        submitters = {sub.submitter_id for sub in self.submissions}
        if len(submitters) < 2:
            raise NotAConflict("%s: fewer than two distinct submitters" % self.target_id)
        bucket = classify_bucket(self.submissions)
        if bucket is not self.bucket:
            raise NotAConflict(
                "%s: bucket %s does not match submissions (%s)"
                % (self.target_id, self.bucket.value, bucket.value)
            )
        return self

    def with_submissions(self, submissions: Sequence[Submission]) -> "ConflictRecord":
        """Copy with a different submission set; bucket and ground truth kept."""
        return replace(self, submissions=tuple(submissions))

    def to_dict(self) -> dict:
        """Serialisable form in the conflict dataset field layout."""
        data = {"variant_id": self.target_id}
        for key, value in self.extras:
            data[key] = value
        data["ground_truth"] = self.ground_truth.to_dict(with_weights=False)
        ordered = sorted(self.submissions, key=lambda sub: sub.order_index)
        data["submissions"] = [sub.to_dict() for sub in ordered]
        # Stored only when the submissions no longer imply it, as after an attack.
        if self._implied_bucket() is not self.bucket:
            data["bucket"] = self.bucket.value
        return data

    def _implied_bucket(self) -> Optional[DisagreementBucket]:
        try:
            return classify_bucket(self.submissions)
        except NotAConflict:
            return None

    @classmethod
    def from_dict(cls, data: Mapping, strict: bool = True) -> "ConflictRecord":
        """Inverse of `to_dict`. Arrival order is the list position. A stored
        ``bucket`` is taken as is; otherwise it is derived from the submissions."""
        submissions = tuple(
            Submission.from_dict(item, order_index=i)
            for i, item in enumerate(data["submissions"])
        )
        extras = tuple(
            (key, value)
            for key, value in data.items()
            if key not in ("variant_id", "ground_truth", "submissions", "bucket")
        )
        stored = data.get("bucket")
        record = cls(
            target_id=data["variant_id"],
            ground_truth=Submission.from_dict(data["ground_truth"]),
            submissions=submissions,
            bucket=DisagreementBucket(stored) if stored else classify_bucket(submissions),
            extras=extras,
        )
        return record.check_conflict() if strict else record


def canonical_json(data) -> str:
    """Compact JSON with a fixed key order used for every byte comparison."""
    return json.dumps(data, separators=(",", ":"), ensure_ascii=True)


def record_to_json(record: ConflictRecord) -> str:
    """One-line JSON form of a conflict record."""
    return canonical_json(record.to_dict())


def record_from_json(line: str, strict: bool = True) -> ConflictRecord:
    """Parse one line produced by `record_to_json`."""
    return ConflictRecord.from_dict(json.loads(line), strict=strict)


def write_records(records: Iterable[ConflictRecord], stream) -> int:
    """Write records as JSON lines; returns the number written."""
    count = 0
    for record in records:
        stream.write(record_to_json(record))
        stream.write("\n")
        count += 1
    return count


def read_records(stream, strict: bool = True) -> list:
    """Read JSON-lines conflict records, skipping blank lines."""
    return [record_from_json(line, strict=strict) for line in stream if line.strip()]


@dataclass(frozen=True)
class FDOType:
    """Registry entry for an object type."""

    name: str
    operations: frozenset


class TypeRegistry:
    """Resolves type names to their declared operations."""

    def __init__(self, types: Iterable[FDOType] = ()):
        self._types = {}
        for fdo_type in types:
            self.register(fdo_type)

    def register(self, fdo_type: FDOType):
        """Add or replace a type definition."""
        self._types[fdo_type.name] = fdo_type

    def resolve(self, name: str) -> FDOType:
        """The definition registered under ``name``."""
        try:
            return self._types[name]
        except KeyError:
            raise UnknownType("Unknown FDO type: %r" % name) from None

    def __contains__(self, name):
        return name in self._types

    def names(self) -> list:
        """Registered type names, sorted."""
        return sorted(self._types)


def default_registry() -> TypeRegistry:
    """Registry holding the four object types of the rare-disease corpus."""
    base = frozenset(DOIP_OPERATIONS)
    return TypeRegistry(
        [
            FDOType(
                "PatientPhenotypeObservation",
                base | {"seekClinicalValidation", "findSimilarPatterns"},
            ),
            FDOType(
                "GeneticVariantInterpretation",
                base | {"negotiateClassification", "correlateWithGenotype"},
            ),
            FDOType("DiseaseDefinition", base | {"findSimilarPatterns"}),
            FDOType("ClinicalAssessment", base | {"seekClinicalValidation"}),
        ]
    )


@dataclass(frozen=True)
class FDORecord:
    """Persistent-identifier-bound record with type, operations and metadata."""

    pid: str
    fdo_type: str
    operations: frozenset = frozenset(DOIP_OPERATIONS)
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.pid:
            raise ValueError("pid must be non-empty")
        missing = set(MANDATORY_OPERATIONS) - set(self.operations)
        if missing:
            raise ValueError("Missing mandatory operations: %s" % sorted(missing))
        object.__setattr__(self, "operations", frozenset(self.operations))
        object.__setattr__(self, "metadata", dict(self.metadata))

    __hash__ = None

    @classmethod
    def create(
        cls, pid: str, fdo_type: str, metadata=None, registry: TypeRegistry = None
    ) -> "FDORecord":
        """Record whose operations are resolved from the type registry."""
        registry = registry or default_registry()
        definition = registry.resolve(fdo_type)
        return cls(pid, fdo_type, definition.operations, metadata or {})

    def to_dict(self) -> dict:
        """Serialisable form with sorted operations and metadata keys."""
        return {
            "pid": self.pid,
            "type": self.fdo_type,
            "operations": sorted(self.operations),
            "metadata": {key: self.metadata[key] for key in sorted(self.metadata)},
        }


def check_unique_pids(records: Iterable) -> None:
    """Raise ValueError when two records share a pid."""
    seen = set()
    for record in records:
        pid = record.pid
        if pid in seen:
            raise ValueError("Duplicate pid: %r" % pid)
        seen.add(pid)


@dataclass(frozen=True)
class AFDORecord:
    """An FDO extended with policies, an event interface and a communication
    interface, plus its trust state.

    A consumer that only understands FDOs reads `fdo` and ignores the rest.
    """

    fdo: FDORecord
    policies: tuple = ()
    event_interface: "EventInterface" = None
    comm_interface: "CommunicationInterface" = None
    trust: "TrustState" = None

    def __post_init__(self):
        allowed = set(self.fdo.operations) | set(BUILTIN_ACTIONS)
        for policy in self.policies:
            if policy.action not in allowed:
                raise ValueError(
                    "Policy %s action %r is not declared by %s"
                    % (policy.name, policy.action, self.fdo.pid)
                )
        object.__setattr__(self, "policies", tuple(self.policies))
        if self.event_interface is not None:
            self.event_interface.handler_map.check(self.policies)

    __hash__ = None

    @property
    def pid(self) -> str:
        """Persistent identifier of the embedded FDO."""
        return self.fdo.pid

    def fields(self) -> dict:
        """Field mapping used when evaluating conditions against this object."""
        data = dict(self.fdo.metadata)
        data["pid"] = self.fdo.pid
        data["type"] = self.fdo.fdo_type
        if self.trust is not None:
            data["trustScore"] = self.trust.score
        return data

    def policy(self, name: str) -> "Policy":
        """Policy declared under ``name``."""
        for policy in self.policies:
            if policy.name == name:
                return policy
        raise KeyError(name)

    def with_trust(self, trust: "TrustState") -> "AFDORecord":
        """Copy carrying a new trust state."""
        return replace(self, trust=trust)
