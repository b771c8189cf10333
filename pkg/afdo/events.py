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
`afdo.events`
================================================================================

Typed events, subscription filters, the handler map binding event kinds to
policies, and an in-process bus that delivers each announcement only to the
objects whose filters match it.

Implementation Notes
--------------------

Filters use the clause evaluator of `afdo.policy`, read against the event
payload, so subscriptions and policy conditions share one semantics. The bus
indexes subscriptions by event kind; a publish only tests the filters of its
kind and the kind-less ones. It serialises ``publish``, so a subscriber sees
events in publish order. Inboxes are bounded by ``inbox_limit``. An object
does not receive its own announcements unless the bus is built with
``deliver_to_self=True``.
"""

from __future__ import annotations

import enum
import itertools
import logging
import threading
from collections import OrderedDict, defaultdict, deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from afdo.core_model import AFDOError, AFDORecord, canonical_json
from afdo.policy import (
    Comparator,
    Exists,
    PolicyEngine,
    PolicyEvaluation,
    Threshold,
    evaluate_clause,
)
from afdo.trust import AuditLog

logger = logging.getLogger(__name__)

WILDCARD = "*"
DEFAULT_INBOX_LIMIT = 1024


class UnknownEventKind(AFDOError, ValueError):
    """Raised for an event kind outside the six-kind alphabet."""


class EventKind(enum.Enum):
    """The event alphabet."""

    CREATE = "Create"
    UPDATE = "Update"
    ANNOUNCE = "Announce"
    VALIDATE = "Validate"
    RECONCILE = "Reconcile"
    TRUST_CHANGE = "TrustChange"


def event_kind(value) -> EventKind:
    """`EventKind` from a member or its name."""
    try:
        return EventKind(value)
    except ValueError:
        raise UnknownEventKind("Unknown event kind: %r" % (value,)) from None


@dataclass(frozen=True)
class Event:
    """An announcement made by ``actor`` at virtual time ``timestamp``."""

    kind: EventKind
    actor: str
    payload: Mapping = field(default_factory=dict)
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", event_kind(self.kind))
        object.__setattr__(self, "payload", dict(self.payload))

    __hash__ = None

    def to_dict(self) -> dict:
        """Activity-shaped form: type, actor, object, published."""
        return {
            "type": self.kind.value,
            "actor": self.actor,
            "object": {key: self.payload[key] for key in sorted(self.payload)},
            "published": self.timestamp,
        }

    def to_json(self) -> str:
        """Canonical JSON of `to_dict`."""
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "Event":
        """Inverse of `to_dict`."""
        return cls(data["type"], data["actor"], data.get("object", {}), data.get("published", 0.0))


@dataclass(frozen=True)
class SubscriptionFilter:
    """Optional kind constraint plus a conjunction of payload clauses."""

    kind: Optional[EventKind] = None
    clauses: tuple = ()

    def __post_init__(self):
        if self.kind is not None:
            object.__setattr__(self, "kind", event_kind(self.kind))
        object.__setattr__(self, "clauses", tuple(self.clauses))

    @classmethod
    def on(cls, kind=None, **fields) -> "SubscriptionFilter":
        """Filter matching ``kind`` events whose payload equals ``fields``;
        a value of ``"*"`` only requires the field to be present."""
        clauses = []
        for path in sorted(fields):
            value = fields[path]
            if value == WILDCARD:
                clauses.append(Exists(path))
            else:
                clauses.append(Threshold(path, Comparator.EQ, value))
        return cls(kind, tuple(clauses))

    def matches(self, event: Event) -> bool:
        """True when the kind and every clause match."""
        if self.kind is not None and event.kind is not self.kind:
            return False
        return all(evaluate_clause(clause, event.payload) for clause in self.clauses)


@dataclass(frozen=True)
class HandlerMap:
    """Event kind -> names of the policies it triggers."""

    mapping: Mapping = field(default_factory=dict)

    def __post_init__(self):
        normalised = {event_kind(kind): tuple(names) for kind, names in dict(self.mapping).items()}
        object.__setattr__(self, "mapping", normalised)

    __hash__ = None

    def policies_for(self, kind: EventKind) -> tuple:
        """Policy names bound to ``kind``; empty when unmapped."""
        return self.mapping.get(event_kind(kind), ())

    def check(self, policies: Sequence) -> None:
        """Raise ValueError if a mapped name is not among ``policies``."""
        declared = {p.name for p in policies}
        for kind, names in self.mapping.items():
            for name in names:
                if name not in declared:
                    raise ValueError("Handler map binds %s to unknown policy %r" % (kind.value, name))


@dataclass(frozen=True)
class EventInterface:
    """Event kinds an object emits and accepts, its filters, and its handler map."""

    kinds: frozenset = frozenset(EventKind)
    filters: tuple = ()
    handler_map: HandlerMap = HandlerMap()

    def __post_init__(self):
        object.__setattr__(self, "kinds", frozenset(event_kind(kind) for kind in self.kinds))
        object.__setattr__(self, "filters", tuple(self.filters))


@dataclass(frozen=True)
class DeliveryReport:
    """What one publish did."""

    event: Event
    matched: int
    receivers: tuple
    evaluations: Mapping
    actions: tuple
    audit_record_id: str

    @property
    def delivered(self) -> int:
        """Number of distinct receivers."""
        return len(self.receivers)

    @property
    def evaluation_count(self) -> int:
        """Policy evaluations triggered across all receivers."""
        return sum(len(items) for items in self.evaluations.values())

    def counts(self) -> dict:
        """Per-receiver evaluation counts."""
        return {pid: len(self.evaluations[pid]) for pid in self.receivers}


def dispatch_to_policies(
    receiver: AFDORecord, event: Event, engine: PolicyEngine = None
) -> list:
    """Evaluate the receiver's policies bound to the event kind, in
    declaration order."""
    engine = engine if engine is not None else PolicyEngine()
    interface = receiver.event_interface
    if interface is None:
        return []
    names = set(interface.handler_map.policies_for(event.kind))
    fields = receiver.fields()
    evaluations = []
    for p in receiver.policies:
        if p.name in names:
            evaluations.append(engine.evaluate(p, fields, event.payload, event.timestamp))
    return evaluations


class EventBus:
    """In-process announcement bus.

    :param AuditLog audit: log receiving delivery and policy records
    :param bool deliver_to_self: let an object receive its own events
    :param PolicyEngine engine: engine used for dispatch; shares ``audit``
    :param int inbox_limit: events kept per inbox; the oldest are dropped
        once it is full, ``None`` keeps everything
    """

    def __init__(
        self,
        audit: AuditLog = None,
        deliver_to_self: bool = False,
        engine: PolicyEngine = None,
        inbox_limit: Optional[int] = DEFAULT_INBOX_LIMIT,
    ):
        if inbox_limit is not None and inbox_limit < 1:
            raise ValueError("inbox_limit must be positive or None")
        self.audit = audit if audit is not None else AuditLog()
        self.engine = engine if engine is not None else PolicyEngine(audit=self.audit)
        self.deliver_to_self = deliver_to_self
        self.inbox_limit = inbox_limit
        self._objects = {}
        # kind (None for any kind) -> {subscription id: (seq, subscriber, filter)}
        self._by_kind = defaultdict(OrderedDict)
        self._kinds = {}
        self._inboxes = {}
        self._ids = itertools.count(1)
        self._lock = threading.RLock()

    def register(self, afdo: AFDORecord, subscribe: bool = True) -> list:
        """Attach an object; its declared filters are subscribed unless
        ``subscribe`` is false. Returns the new subscription ids."""
        with self._lock:
            self._objects[afdo.pid] = afdo
            if not subscribe or afdo.event_interface is None:
                return []
            return [self.subscribe(afdo.pid, filt) for filt in afdo.event_interface.filters]

    def update(self, afdo: AFDORecord) -> None:
        """Replace the registered state of an object, keeping subscriptions."""
        with self._lock:
            if afdo.pid not in self._objects:
                raise KeyError(afdo.pid)
            self._objects[afdo.pid] = afdo

    def object(self, pid: str) -> AFDORecord:
        """Registered state of ``pid``."""
        return self._objects[pid]

    def subscribe(self, subscriber: str, filt: SubscriptionFilter) -> str:
        """Deliver future matching events to ``subscriber``."""
        if not isinstance(filt, SubscriptionFilter):
            raise TypeError("filter must be a SubscriptionFilter")
        with self._lock:
            seq = next(self._ids)
            subscription_id = "sub-%04d" % seq
            self._by_kind[filt.kind][subscription_id] = (seq, subscriber, filt)
            self._kinds[subscription_id] = filt.kind
        logger.debug("%s subscribed as %s", subscriber, subscription_id)
        return subscription_id

    def unsubscribe(self, subscription_id: str) -> None:
        """Stop a subscription; unknown ids raise KeyError."""
        with self._lock:
            kind = self._kinds.pop(subscription_id)
            del self._by_kind[kind][subscription_id]

    @property
    def subscription_count(self) -> int:
        """Active subscriptions."""
        return len(self._kinds)

    def candidates(self, kind: EventKind) -> list:
        """Subscriptions that can match an event of ``kind``, in
        subscription order: ``(subscriber, filter)`` pairs."""
        kind = event_kind(kind)
        with self._lock:
            entries = list(self._by_kind.get(kind, {}).values()) + list(self._by_kind.get(None, {}).values())
        return [(subscriber, filt) for _, subscriber, filt in sorted(entries, key=lambda entry: entry[0])]

    def inbox(self, pid: str) -> tuple:
        """Events delivered to ``pid`` and not yet drained, oldest first."""
        return tuple(self._inboxes.get(pid, ()))

    def drain(self, pid: str) -> list:
        """Remove and return the inbox of ``pid``."""
        with self._lock:
            items = list(self._inboxes.pop(pid, ()))
        return items

    def publish(self, event: Event) -> DeliveryReport:
        """Deliver ``event`` once to each matching subscriber and run the
        bound policies of each receiver."""
        if not isinstance(event, Event):
            raise TypeError("publish expects an Event")
        with self._lock:
            matched = 0
            receivers = []
            for subscriber, filt in self.candidates(event.kind):
                if subscriber == event.actor and not self.deliver_to_self:
                    continue
                if filt.matches(event):
                    matched += 1
                    if subscriber not in receivers:
                        receivers.append(subscriber)
            for pid in receivers:
                inbox = self._inboxes.get(pid)
                if inbox is None:
                    inbox = self._inboxes[pid] = deque(maxlen=self.inbox_limit)
                elif len(inbox) == inbox.maxlen:
                    logger.debug("Inbox of %s is full; dropping its oldest event", pid)
                inbox.append(event)
            record = self.audit.emit(
                activity="event-delivery",
                inputs=[event.actor, event.kind.value],
                outputs=receivers,
                agent=event.actor,
                timestamp=event.timestamp,
                detail=(("matched", matched),),
            )
            evaluations = {}
            for pid in receivers:
                afdo = self._objects.get(pid)
                found = dispatch_to_policies(afdo, event, self.engine) if afdo is not None else []
                evaluations[pid] = tuple(found)
            actions = tuple(
                (pid, evaluation.action)
                for pid in receivers
                for evaluation in evaluations[pid]
                if evaluation.fired
            )
        logger.debug(
            "%s from %s: %d matched, %d evaluations",
            event.kind.value,
            event.actor,
            matched,
            sum(len(items) for items in evaluations.values()),
        )
        return DeliveryReport(
            event=event,
            matched=matched,
            receivers=tuple(receivers),
            evaluations=evaluations,
            actions=actions,
            audit_record_id=record.record_id,
        )


def fired(evaluations: Sequence[PolicyEvaluation]) -> list:
    """Actions of the evaluations that fired."""
    return [evaluation.action for evaluation in evaluations if evaluation.fired]
