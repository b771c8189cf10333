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
`afdo.policy`
================================================================================

Condition-action policies: a restricted condition language, rate-limit and
notify duties, evaluation that always leaves an audit record, and a Turtle
serialiser and parser for the SHACL + ODRL subset the policies are written in.

Implementation Notes
--------------------

Conditions are conjunctions of clauses. A clause compares an object field
with a constant, compares an object field with a field of the announcement
payload, tests that a field is present, or negates one of those. A clause
that refers to a missing field is false, unless strict evaluation is asked
for.

Policy text is parsed with ``rdflib``. Quoted-triple statements
(``<< s p o >> p2 o2 .``) are lifted out before parsing and kept as opaque
annotations on their subject. The default ``:`` prefix is bound to
``urn:afdo:local#`` when a document uses it without declaring it.

Clauses and duties are kept in a canonical order so that serialisation is
byte-deterministic and equal policies compare equal.
"""

from __future__ import annotations

import enum
import logging
import math
import re
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Mapping, Optional, Sequence, Union

import numpy as np
from rdflib import BNode, Graph, Literal, Namespace, URIRef
from rdflib.collection import Collection
from rdflib.namespace import RDF

from afdo.core_model import AFDOError
from afdo.trust import AuditLog

logger = logging.getLogger(__name__)

AFDO = Namespace("http://w3id.org/afdo#")
SH = Namespace("http://www.w3.org/ns/shacl#")
ODRL = Namespace("http://www.w3.org/ns/odrl/2/")
XSD = Namespace("http://www.w3.org/2001/XMLSchema#")
LOCAL = Namespace("urn:afdo:local#")

PREFIXES = (
    ("", str(LOCAL)),
    ("afdo", str(AFDO)),
    ("odrl", str(ODRL)),
    ("sh", str(SH)),
    ("xsd", str(XSD)),
)

ANNOUNCED = "announced"

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")
_LOCAL_NAME = re.compile(r"^[A-Za-z0-9_](?:[A-Za-z0-9_.-]*[A-Za-z0-9_-])?$")
_DURATION = re.compile(
    r"^P(?:(?P<days>\d+(?:\.\d+)?)D)?"
    r"(?:T(?:(?P<hours>\d+(?:\.\d+)?)H)?(?:(?P<minutes>\d+(?:\.\d+)?)M)?"
    r"(?:(?P<seconds>\d+(?:\.\d+)?)S)?)?$"
)


class ConditionError(AFDOError, ValueError):
    """Raised when a condition cannot be evaluated."""


class MissingFieldError(ConditionError):
    """Raised in strict mode when a clause refers to an absent field."""


class UnsupportedPolicy(AFDOError, ValueError):
    """Raised when a policy uses a form the Turtle subset cannot express."""


class UnsupportedDuration(AFDOError, ValueError):
    """Raised for durations outside the days/hours/minutes/seconds subset."""


class PolicySyntaxError(AFDOError, ValueError):
    """Malformed policy text, with a 1-based position."""

    def __init__(self, message, line=1, column=1):
        super().__init__("%s (line %d, column %d)" % (message, line, column))
        self.line = line
        self.column = column


class PolicySemanticError(PolicySyntaxError):
    """Well-formed text that does not describe a supported policy."""


def parse_duration(text: str) -> float:
    """Seconds in an ISO-8601 duration such as ``P1D`` or ``PT60S``."""
    match = _DURATION.match(text.strip())
    if not match or text.strip() in ("P", "PT") or text.strip().endswith("T"):
        raise UnsupportedDuration("Unsupported duration: %r" % text)
    parts = match.groupdict()
    if all(value is None for value in parts.values()):
        raise UnsupportedDuration("Unsupported duration: %r" % text)
    total = 0.0
    for name, scale in (("days", 86400), ("hours", 3600), ("minutes", 60), ("seconds", 1)):
        if parts[name] is not None:
            total += float(parts[name]) * scale
    return total


def format_duration(seconds: float) -> str:
    """Canonical duration text; inverse of `parse_duration`."""
    if seconds < 0 or math.isinf(seconds) or math.isnan(seconds):
        raise UnsupportedDuration("Unsupported duration: %r seconds" % seconds)
    whole = int(seconds)
    fraction = seconds - whole
    days, rest = divmod(whole, 86400)
    hours, rest = divmod(rest, 3600)
    minutes, secs = divmod(rest, 60)
    text = "P"
    if days:
        text += "%dD" % days
    clock = ""
    if hours:
        clock += "%dH" % hours
    if minutes:
        clock += "%dM" % minutes
    if fraction:
        clock += "%rS" % (secs + fraction)
    elif secs:
        clock += "%dS" % secs
    if clock:
        text += "T" + clock
    return text if text != "P" else "PT0S"


class Comparator(enum.Enum):
    """Comparison of a field against a constant."""

    LE = "<="
    GE = ">="
    LT = "<"
    GT = ">"
    EQ = "="
    NE = "!="


_COMPARE = {
    Comparator.LE: lambda a, b: a <= b,
    Comparator.GE: lambda a, b: a >= b,
    Comparator.LT: lambda a, b: a < b,
    Comparator.GT: lambda a, b: a > b,
    Comparator.EQ: lambda a, b: a == b,
    Comparator.NE: lambda a, b: a != b,
}


@dataclass(frozen=True)
class Threshold:
    """``field <comparator> constant``."""

    path: str
    comparator: Comparator
    constant: Union[float, str]

    def __post_init__(self):
        object.__setattr__(self, "comparator", Comparator(self.comparator))
        if isinstance(self.constant, (int, float)) and not isinstance(self.constant, bool):
            object.__setattr__(self, "constant", float(self.constant))
        elif self.comparator not in (Comparator.EQ, Comparator.NE):
            raise ValueError("Ordering comparators need a numeric constant")


@dataclass(frozen=True)
class PayloadEquals:
    """Object field equals a field of the announcement payload."""

    path: str
    payload_path: str


@dataclass(frozen=True)
class Exists:
    """The field is present."""

    path: str


@dataclass(frozen=True)
class Not:
    """Negation of a clause."""

    clause: object


Clause = Union[Threshold, PayloadEquals, Exists, Not]


def normalise(clause: Clause) -> Clause:
    """Canonical form: no double negation, ``!=`` written as not-equal."""
    if isinstance(clause, Threshold) and clause.comparator is Comparator.NE:
        return Not(Threshold(clause.path, Comparator.EQ, clause.constant))
    if isinstance(clause, Not):
        inner = normalise(clause.clause)
        if isinstance(inner, Not):
            return inner.clause
        return Not(inner)
    return clause


def clause_path(clause: Clause) -> str:
    """Object field the clause reads."""
    return clause_path(clause.clause) if isinstance(clause, Not) else clause.path


def _clause_key(clause: Clause):
    if isinstance(clause, Not):
        return (clause_path(clause), 1) + _clause_key(clause.clause)[1:]
    if isinstance(clause, Threshold):
        constant = clause.constant
        return (clause.path, 0, 0, clause.comparator.value, isinstance(constant, str), str(constant))
    if isinstance(clause, PayloadEquals):
        return (clause.path, 0, 1, clause.payload_path, False, "")
    return (clause.path, 0, 2, "", False, "")


def _truth(clause: Clause, fields: Mapping, payload: Optional[Mapping]) -> Optional[bool]:
    """Clause truth, or None when a referenced field is missing."""
    if isinstance(clause, Not):
        inner = _truth(clause.clause, fields, payload)
        return None if inner is None else not inner
    path = clause.path
    if not isinstance(path, str) or not _NAME.match(path):
        raise ConditionError("Malformed condition path: %r" % (path,))
    if isinstance(clause, Exists):
        return path in fields
    if path not in fields:
        return None
    value = fields[path]
    if isinstance(clause, PayloadEquals):
        if payload is None or clause.payload_path not in payload:
            return None
        return str(value) == str(payload[clause.payload_path])
    constant = clause.constant
    if isinstance(constant, float):
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ConditionError("Field %s is not numeric: %r" % (path, value)) from None
        return _COMPARE[clause.comparator](value, constant)
    return _COMPARE[clause.comparator](str(value), constant)


def evaluate_clause(
    clause: Clause, fields: Mapping, payload: Optional[Mapping] = None, strict: bool = False
) -> bool:
    """Truth of one clause; a missing field makes it false (strict: raises)."""
    result = _truth(clause, fields, payload)
    if result is None:
        if strict:
            raise MissingFieldError("Missing field for clause on %r" % clause_path(clause))
        return False
    return result


@dataclass(frozen=True)
class Condition:
    """Conjunction of clauses, optionally targeted at one object or type."""

    clauses: tuple = ()
    target_node: Optional[str] = None
    target_class: Optional[str] = None

    def __post_init__(self):
        clauses = sorted((normalise(clause) for clause in self.clauses), key=_clause_key)
        object.__setattr__(self, "clauses", tuple(clauses))

    def evaluate(self, fields: Mapping, payload: Optional[Mapping] = None, strict: bool = False) -> bool:
        """True when the target matches and every clause holds."""
        if self.target_node is not None and fields.get("pid") != self.target_node:
            return False
        if self.target_class is not None and fields.get("type") != self.target_class:
            return False
        # Every clause is checked so malformed paths surface regardless of order.
        results = [evaluate_clause(clause, fields, payload, strict) for clause in self.clauses]
        return all(results)

    def references_payload(self) -> bool:
        """True when some clause reads the announcement payload."""

        def reads(clause):
            if isinstance(clause, Not):
                return reads(clause.clause)
            return isinstance(clause, PayloadEquals)

        return any(reads(clause) for clause in self.clauses)


@dataclass(frozen=True)
class RateLimit:
    """At most one firing per ``window`` seconds."""

    window: float

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("RateLimit window must be positive")


@dataclass(frozen=True)
class Notify:
    """Notify ``assignee`` whenever the action fires."""

    assignee: str


Obligation = Union[RateLimit, Notify]


def _obligation_key(obligation: Obligation):
    if isinstance(obligation, RateLimit):
        return (0, obligation.window, "")
    return (1, 0.0, obligation.assignee)


@dataclass(frozen=True)
class AuditTemplate:
    """Skeleton of the audit record a policy evaluation produces."""

    activity: str = "policy-evaluation"
    agent: str = ""


@dataclass(frozen=True)
class Policy:
    """Condition, action, obligations and audit template."""

    name: str
    condition: Condition
    action: str
    obligations: tuple = ()
    audit_template: AuditTemplate = AuditTemplate()
    version: str = "1"

    def __post_init__(self):
        if not self.name:
            raise ValueError("Policy name must be non-empty")
        ordered = sorted(self.obligations, key=_obligation_key)
        object.__setattr__(self, "obligations", tuple(ordered))


@dataclass(frozen=True)
class PolicyEvaluation:
    """Outcome of one evaluation."""

    policy_name: str
    policy_version: str
    action: str
    condition_result: Optional[bool]
    fired: bool
    blocked_by: Optional[Obligation]
    audit_record_id: str
    error: Optional[str] = None
    notified: tuple = ()

    def behaviour(self) -> tuple:
        """Fields compared when checking two policies for equivalence."""
        return (self.action, self.condition_result, self.fired, self.blocked_by, self.notified,
                self.error is not None)


class DutyState:
    """Firing times per (policy, object)."""

    def __init__(self):
        self._firings = defaultdict(list)
        self._lock = threading.RLock()

    def blocking(self, policy: Policy, pid: str, clock: float) -> Optional[Obligation]:
        """The rate limit that forbids firing at ``clock``, if any."""
        with self._lock:
            fired = tuple(self._firings.get((policy.name, pid), ()))
        for obligation in policy.obligations:
            if isinstance(obligation, RateLimit):
                for previous in fired:
                    if abs(clock - previous) < obligation.window:
                        return obligation
        return None

    def record(self, policy: Policy, pid: str, clock: float):
        """Consume the window slot of a firing."""
        with self._lock:
            self._firings[(policy.name, pid)].append(clock)

    def try_fire(self, policy: Policy, pid: str, clock: float) -> Optional[Obligation]:
        """Record a firing at ``clock`` unless a rate limit forbids it; the
        check and the record are one step. Returns the blocking limit."""
        with self._lock:
            blocked = self.blocking(policy, pid, clock)
            if blocked is None:
                self.record(policy, pid, clock)
            return blocked

    def firings(self, policy_name: str, pid: str) -> tuple:
        """Times at which the policy fired for ``pid``."""
        with self._lock:
            return tuple(self._firings.get((policy_name, pid), ()))


def evaluate_policy(
    p: Policy,
    object_fields: Mapping,
    event_payload: Optional[Mapping] = None,
    clock: float = 0.0,
    duty_state: DutyState = None,
    audit: AuditLog = None,
    strict: bool = False,
) -> PolicyEvaluation:
    """Evaluate the condition, check duties, and record exactly one audit
    record whatever the outcome."""
    if "pid" not in object_fields:
        raise ValueError("object_fields must contain the object's pid")
    audit = audit if audit is not None else AuditLog()
    duty_state = duty_state if duty_state is not None else DutyState()
    pid = object_fields["pid"]

    result, error, blocked, fired, notified = None, None, None, False, ()
    try:
        result = p.condition.evaluate(object_fields, event_payload, strict)
    except ConditionError as exc:
        error = str(exc)
        logger.debug("%s on %s: evaluation error: %s", p.name, pid, error)
    if result:
        blocked = duty_state.try_fire(p, pid, clock)
        if blocked is None:
            fired = True
            notified = tuple(ob.assignee for ob in p.obligations if isinstance(ob, Notify))

    if error is not None:
        outcome = "error"
    elif blocked is not None:
        outcome = "blocked"
    else:
        outcome = "fired" if fired else "not-fired"
    inputs = [pid]
    if event_payload:
        inputs.extend("%s=%s" % (key, event_payload[key]) for key in sorted(event_payload))
    record = audit.emit(
        activity=p.audit_template.activity,
        inputs=inputs,
        outputs=[p.action] + ["notify:%s" % who for who in notified] if fired else [],
        agent=p.audit_template.agent or pid,
        policy_version=p.version,
        timestamp=clock,
        detail=(("policy", p.name), ("outcome", outcome), ("error", error or "")),
    )
    logger.debug("%s on %s: %s", p.name, pid, outcome)
    return PolicyEvaluation(
        policy_name=p.name,
        policy_version=p.version,
        action=p.action,
        condition_result=result,
        fired=fired,
        blocked_by=blocked,
        audit_record_id=record.record_id,
        error=error,
        notified=notified,
    )


class PolicyEngine:
    """Evaluates policies against one audit log and one duty state."""

    def __init__(self, audit: AuditLog = None, duty_state: DutyState = None, strict: bool = False):
        self.audit = audit if audit is not None else AuditLog()
        self.duty_state = duty_state if duty_state is not None else DutyState()
        self.strict = strict

    def evaluate(self, p: Policy, object_fields: Mapping, event_payload=None, clock=0.0):
        """`evaluate_policy` bound to this engine's state."""
        return evaluate_policy(
            p, object_fields, event_payload, clock, self.duty_state, self.audit, self.strict
        )


# Serialisation


def _check_name(name: str, what: str, pattern=_NAME) -> str:
    if not isinstance(name, str) or not pattern.match(name):
        raise UnsupportedPolicy("%s %r cannot be written as a prefixed name" % (what, name))
    return name


def _literal(value) -> str:
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            raise UnsupportedPolicy("Non-finite constant: %r" % value)
        return repr(value)
    escaped = (
        str(value)
        .replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )
    return '"%s"' % escaped


_SHACL_COMPARATORS = {
    Comparator.LE: "sh:maxInclusive",
    Comparator.GE: "sh:minInclusive",
    Comparator.LT: "sh:maxExclusive",
    Comparator.GT: "sh:minExclusive",
    Comparator.EQ: "sh:hasValue",
}


def _constraint_pairs(clause: Clause) -> list:
    if isinstance(clause, Not):
        return [("sh:not", _constraint_pairs(clause.clause))]
    if isinstance(clause, Threshold):
        if clause.comparator not in _SHACL_COMPARATORS:
            raise UnsupportedPolicy("Comparator %s is not supported" % clause.comparator.value)
        return [(_SHACL_COMPARATORS[clause.comparator], _literal(clause.constant))]
    if isinstance(clause, PayloadEquals):
        target = "( :%s afdo:%s )" % (ANNOUNCED, _check_name(clause.payload_path, "Payload path"))
        return [("sh:equals", [("sh:path", target)])]
    if isinstance(clause, Exists):
        return [("sh:minCount", "1")]
    raise UnsupportedPolicy("Unsupported condition form: %r" % (clause,))


def _policy_pairs(p: Policy) -> list:
    shape = [("a", "sh:NodeShape")]
    if p.condition.target_node is not None:
        shape.append(("sh:targetNode", ":" + _check_name(p.condition.target_node, "Target", _LOCAL_NAME)))
    if p.condition.target_class is not None:
        shape.append(("sh:targetClass", "afdo:" + _check_name(p.condition.target_class, "Target class")))
    for clause in p.condition.clauses:
        path = _check_name(clause_path(clause), "Path")
        shape.append(("sh:property", [("sh:path", "afdo:" + path)] + _constraint_pairs(clause)))
    pairs = [
        ("afdo:condition", shape),
        ("afdo:action", "afdo:" + _check_name(p.action, "Action")),
    ]
    for obligation in p.obligations:
        if isinstance(obligation, RateLimit):
            duty = [
                ("a", "odrl:Duty"),
                ("odrl:action", "odrl:rateLimit"),
                (
                    "odrl:constraint",
                    [
                        ("odrl:leftOperand", "odrl:elapsedTime"),
                        ("odrl:operator", "odrl:gteq"),
                        ("odrl:rightOperand", '"%s"^^xsd:duration' % format_duration(obligation.window)),
                    ],
                ),
            ]
        else:
            duty = [
                ("a", "odrl:Duty"),
                ("odrl:action", "odrl:notify"),
                ("odrl:assignee", "afdo:" + _check_name(obligation.assignee, "Assignee")),
            ]
        pairs.append(("odrl:duty", duty))
    pairs.append(("afdo:auditActivity", _literal(p.audit_template.activity)))
    if p.audit_template.agent:
        pairs.append(("afdo:auditAgent", _literal(p.audit_template.agent)))
    pairs.append(("afdo:version", _literal(p.version)))
    return pairs


def _render(pairs: list, indent: int) -> list:
    lines = []
    for predicate, obj in pairs:
        if isinstance(obj, list):
            inner = " ;\n".join(_render(obj, indent + 2))
            text = "%s [\n%s ]" % (predicate, inner)
        else:
            text = "%s %s" % (predicate, obj)
        lines.append(" " * indent + text)
    return lines


def prefix_block() -> str:
    """Fixed prefix declarations opening every serialised document."""
    return "".join("@prefix %s: <%s> .\n" % (name, iri) for name, iri in PREFIXES)


def serialise_policy(p: Policy, prefixes: bool = True) -> str:
    """Canonical Turtle text of a policy."""
    head = ":%s a afdo:Policy ;\n" % _check_name(p.name, "Policy name", _LOCAL_NAME)
    body = " ;\n".join(_render(_policy_pairs(p), 2)) + " .\n"
    text = head + body
    return prefix_block() + "\n" + text if prefixes else text


def serialise_policies(policies: Sequence[Policy]) -> str:
    """Several policies under one prefix block, ordered by name."""
    blocks = [serialise_policy(p, prefixes=False) for p in sorted(policies, key=lambda p: p.name)]
    return prefix_block() + "\n" + "\n".join(blocks)


# Parsing


@dataclass(frozen=True)
class QuotedAnnotation:
    """A quoted-triple statement kept as opaque text."""

    subject: str
    text: str


@dataclass
class PolicyDocument:
    """Policies, described objects and annotations found in one document."""

    policies: list = field(default_factory=list)
    objects: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)

    def policy(self, name: str) -> Policy:
        """Policy named ``name``."""
        for p in self.policies:
            if p.name == name:
                return p
        raise KeyError(name)


_QUOTED = re.compile(r"<<(?P<triple>.+?)>>(?P<rest>.*?)\s\.(?=\s|$)", re.DOTALL)
_DEFAULT_PREFIX = re.compile(r"(@prefix|PREFIX)\s+:\s*<", re.IGNORECASE)


def _lift_quoted(text: str):
    annotations = defaultdict(list)

    def lift(match):
        terms = match.group("triple").split()
        subject = terms[0].split(":", 1)[-1] if terms else ""
        annotations[subject].append(QuotedAnnotation(subject, " ".join(match.group(0).split())))
        return "\n" * match.group(0).count("\n")

    return _QUOTED.sub(lift, text), {key: tuple(value) for key, value in annotations.items()}


def _position(text: str, index: int):
    index = max(0, min(index, len(text)))
    line = text.count("\n", 0, index) + 1
    column = index - (text.rfind("\n", 0, index) + 1) + 1
    return line, column


def _locate(text: str, needle: str):
    index = text.find(needle)
    if index < 0:
        return 1, 1
    return _position(text, index)


def _local(term) -> str:
    text = str(term)
    if "#" in text:
        return text.rsplit("#", 1)[1]
    return text.rsplit("/", 1)[-1]


def _qname(term) -> str:
    text = str(term)
    for name, iri in PREFIXES:
        if text.startswith(iri):
            return "%s:%s" % (name, text[len(iri) :])
    return _local(term)


class _Reader:
    """Walks a parsed graph and builds policies, reporting positions."""

    def __init__(self, graph: Graph, source: str):
        self.graph = graph
        self.source = source

    def fail(self, message, term=None):
        line, column = _locate(self.source, _qname(term)) if term is not None else (1, 1)
        raise PolicySemanticError(message, line, column)

    def one(self, node, predicate, required=True):
        values = list(self.graph.objects(node, predicate))
        if len(values) > 1:
            self.fail("%s has more than one value" % _qname(predicate), predicate)
        if not values:
            if required:
                self.fail("Missing %s" % _qname(predicate), predicate)
            return None
        return values[0]

    def check_predicates(self, node, allowed):
        for predicate in sorted(set(self.graph.predicates(node)), key=str):
            if predicate not in allowed:
                self.fail("Unsupported term %s" % _qname(predicate), predicate)

    def name_in(self, term, namespace, what):
        if not isinstance(term, URIRef) or not str(term).startswith(str(namespace)):
            self.fail("%s must be a term in <%s>" % (what, namespace), term)
        return str(term)[len(str(namespace)) :]

    def constant(self, term):
        if not isinstance(term, Literal):
            self.fail("Expected a literal constant", term)
        value = term.toPython()
        if isinstance(value, bool):
            return str(term)
        if isinstance(value, (int, float, Decimal)):
            return float(value)
        return str(term)

    def constraint(self, node, path):
        clauses = []
        for predicate, obj in sorted(self.graph.predicate_objects(node), key=lambda po: (str(po[0]), str(po[1]))):
            if predicate == SH.path:
                continue
            comparator = {
                SH.maxInclusive: Comparator.LE,
                SH.minInclusive: Comparator.GE,
                SH.maxExclusive: Comparator.LT,
                SH.minExclusive: Comparator.GT,
                SH.hasValue: Comparator.EQ,
            }.get(predicate)
            if comparator is not None:
                try:
                    clauses.append(Threshold(path, comparator, self.constant(obj)))
                except ValueError as exc:
                    self.fail(str(exc), predicate)
            elif predicate == SH.equals:
                clauses.append(PayloadEquals(path, self.payload_path(obj)))
            elif predicate == SH.minCount:
                if self.constant(obj) != 1.0:
                    self.fail("Only sh:minCount 1 is supported", predicate)
                clauses.append(Exists(path))
            elif predicate == SH["not"]:
                inner = self.constraint(obj, path)
                if len(inner) != 1:
                    self.fail("sh:not must wrap exactly one constraint", predicate)
                clauses.append(Not(inner[0]))
            else:
                self.fail("Unsupported term %s" % _qname(predicate), predicate)
        return clauses

    def payload_path(self, node):
        if not isinstance(node, BNode):
            self.fail("sh:equals must compare against an announcement path", SH.equals)
        path_node = self.one(node, SH.path)
        items = list(Collection(self.graph, path_node)) if isinstance(path_node, BNode) else []
        if len(items) != 2 or _local(items[0]) != ANNOUNCED:
            self.fail("Payload paths are written ( :announced afdo:field )", SH.equals)
        return self.name_in(items[1], AFDO, "Payload field")

    def condition(self, node):
        self.check_predicates(node, {RDF.type, SH.targetNode, SH.targetClass, SH.property})
        kind = self.one(node, RDF.type, required=False)
        if kind is not None and kind != SH.NodeShape:
            self.fail("Condition must be a sh:NodeShape", kind)
        target_node = self.one(node, SH.targetNode, required=False)
        target_class = self.one(node, SH.targetClass, required=False)
        clauses = []
        for shape in self.graph.objects(node, SH.property):
            path_term = self.one(shape, SH.path)
            path = self.name_in(path_term, AFDO, "sh:path")
            clauses.extend(self.constraint(shape, path))
        return Condition(
            tuple(clauses),
            target_node=_local(target_node) if target_node is not None else None,
            target_class=self.name_in(target_class, AFDO, "sh:targetClass") if target_class is not None else None,
        )

    def duty(self, node):
        self.check_predicates(node, {RDF.type, ODRL.action, ODRL.constraint, ODRL.assignee})
        action = self.one(node, ODRL.action)
        if action == ODRL.rateLimit:
            constraint = self.one(node, ODRL.constraint)
            self.check_predicates(constraint, {ODRL.leftOperand, ODRL.operator, ODRL.rightOperand})
            if self.one(constraint, ODRL.leftOperand) != ODRL.elapsedTime:
                self.fail("Rate limits constrain odrl:elapsedTime", ODRL.leftOperand)
            if self.one(constraint, ODRL.operator) != ODRL.gteq:
                self.fail("Rate limits use odrl:gteq", ODRL.operator)
            operand = self.one(constraint, ODRL.rightOperand)
            if not isinstance(operand, Literal) or operand.datatype != XSD.duration:
                self.fail("Rate-limit duty needs an xsd:duration operand", ODRL.rightOperand)
            try:
                return RateLimit(parse_duration(str(operand)))
            except (UnsupportedDuration, ValueError) as exc:
                self.fail(str(exc), ODRL.rightOperand)
        if action == ODRL.notify:
            return Notify(_local(self.one(node, ODRL.assignee)))
        return self.fail("Unsupported duty action %s" % _qname(action), action)

    def policy(self, node):
        self.check_predicates(
            node,
            {RDF.type, AFDO.condition, AFDO.action, ODRL.duty, AFDO.auditActivity, AFDO.auditAgent, AFDO.version},
        )
        condition = self.condition(self.one(node, AFDO.condition))
        action = self.name_in(self.one(node, AFDO.action), AFDO, "afdo:action")
        duties = tuple(self.duty(duty) for duty in self.graph.objects(node, ODRL.duty))
        activity = self.one(node, AFDO.auditActivity, required=False)
        agent = self.one(node, AFDO.auditAgent, required=False)
        version = self.one(node, AFDO.version, required=False)
        return Policy(
            name=_local(node),
            condition=condition,
            action=action,
            obligations=duties,
            audit_template=AuditTemplate(
                activity=str(activity) if activity is not None else AuditTemplate.activity,
                agent=str(agent) if agent is not None else "",
            ),
            version=str(version) if version is not None else "1",
        )

    def objects(self):
        found = {}
        policies = set(self.graph.subjects(RDF.type, AFDO.Policy))
        for subject in sorted(set(self.graph.subjects(RDF.type, None)), key=str):
            if isinstance(subject, BNode) or subject in policies:
                continue
            fields = {"pid": _local(subject)}
            values = defaultdict(list)
            for predicate, obj in self.graph.predicate_objects(subject):
                if predicate == RDF.type:
                    fields["type"] = _local(obj)
                elif isinstance(obj, Literal):
                    values[_local(predicate)].append(self.constant(obj))
                else:
                    values[_local(predicate)].append(_local(obj))
            for key, items in values.items():
                fields[key] = items[0] if len(items) == 1 else tuple(sorted(items, key=str))
            found[fields["pid"]] = fields
        return found


def _bad_syntax_position(exc, text: str):
    index = getattr(exc, "_i", None)
    if isinstance(index, int):
        return _position(text, index)
    lines = getattr(exc, "lines", None)
    return ((lines + 1) if isinstance(lines, int) else 1), 1


def parse_policy_document(text: str) -> PolicyDocument:
    """Parse a Turtle document into policies, objects and annotations."""
    cleaned, annotations = _lift_quoted(text)
    offset = 0
    if not _DEFAULT_PREFIX.search(cleaned):
        cleaned = "@prefix : <%s> .\n" % LOCAL + cleaned
        offset = 1
    graph = Graph()
    try:
        graph.parse(data=cleaned, format="turtle")
    except Exception as exc:  # pylint: disable=broad-except
        line, column = _bad_syntax_position(exc, cleaned)
        why = getattr(exc, "_why", None) or (str(exc).splitlines() or [type(exc).__name__])[0]
        raise PolicySyntaxError("Syntax error: %s" % why, max(1, line - offset), column) from exc
    reader = _Reader(graph, text)
    policies = [reader.policy(node) for node in sorted(graph.subjects(RDF.type, AFDO.Policy), key=str)]
    return PolicyDocument(policies=policies, objects=reader.objects(), annotations=annotations)


def parse_policy(text: str) -> Policy:
    """The single policy described by ``text``."""
    document = parse_policy_document(text)
    if len(document.policies) != 1:
        raise PolicySemanticError(
            "Expected exactly one afdo:Policy, found %d" % len(document.policies)
        )
    return document.policies[0]


# Behavioural equivalence


def evaluation_battery(p: Policy, count: int = 45, seed=0) -> list:
    """Deterministic ``(fields, payload, clock)`` inputs exercising ``p``.

    Values straddle every numeric threshold, string constants are hit and
    missed, payload fields match and differ, and some fields are left out.
    """
    rng = np.random.default_rng(seed)
    pool = ["X1", "X2", "X3"]
    inputs = []
    for i in range(count):
        fields, payload = {}, {}
        target = p.condition.target_node
        fields["pid"] = target if target is not None and rng.random() < 0.8 else "obj-%03d" % i
        target_class = p.condition.target_class
        fields["type"] = target_class if target_class is not None and rng.random() < 0.8 else "Other"
        for clause in p.condition.clauses:
            inner = clause.clause if isinstance(clause, Not) else clause
            path = inner.path
            if path in fields and path not in ("pid", "type"):
                continue
            if rng.random() < 0.1:
                continue
            if isinstance(inner, Threshold) and isinstance(inner.constant, float):
                step = float(rng.choice([-0.1, -0.01, 0.0, 0.01, 0.1]))
                fields[path] = inner.constant + step if rng.random() < 0.8 else float(rng.random())
            elif isinstance(inner, Threshold):
                fields[path] = inner.constant if rng.random() < 0.5 else "other"
            elif isinstance(inner, PayloadEquals):
                fields[path] = pool[int(rng.integers(len(pool)))]
                if rng.random() < 0.9:
                    payload[inner.payload_path] = pool[int(rng.integers(len(pool)))]
            else:
                fields[path] = "present"
        inputs.append((fields, payload or None, float(i) * 21600.0))
    return inputs


def behaviour_on(p: Policy, battery: Sequence, strict: bool = False) -> list:
    """Behaviour of ``p`` over a battery, evaluated in order with fresh state."""
    engine = PolicyEngine(strict=strict)
    return [engine.evaluate(p, fields, payload, clock).behaviour() for fields, payload, clock in battery]


def behaviourally_equivalent(p: Policy, q: Policy, battery: Sequence, strict: bool = False) -> bool:
    """True when both policies behave identically over the battery."""
    return behaviour_on(p, battery, strict) == behaviour_on(q, battery, strict)


@dataclass(frozen=True)
class RoundTripReport:
    """Result of serialise -> parse -> compare for one policy."""

    policy_name: str
    text: str
    deterministic: bool
    equivalent: bool
    stable: bool
    inputs: int

    @property
    def passed(self) -> bool:
        """All three checks hold."""
        return self.deterministic and self.equivalent and self.stable


def round_trip_check(p: Policy, count: int = 45, seed=0, strict: bool = False) -> RoundTripReport:
    """Serialise twice, parse back, and compare behaviour on a battery."""
    text = serialise_policy(p)
    reparsed = parse_policy(text)
    battery = evaluation_battery(p, count, seed)
    return RoundTripReport(
        policy_name=p.name,
        text=text,
        deterministic=text == serialise_policy(p),
        equivalent=behaviourally_equivalent(p, reparsed, battery, strict),
        stable=serialise_policy(reparsed) == text,
        inputs=len(battery),
    )
