from concurrent.futures import ThreadPoolExecutor
from unittest import mock

import pytest

import builders
from afdo import events
from afdo.events import (
    Event,
    EventBus,
    EventInterface,
    EventKind,
    HandlerMap,
    SubscriptionFilter,
    UnknownEventKind,
    dispatch_to_policies,
    fired,
)
from afdo.policy import (
    Comparator,
    Condition,
    Not,
    Notify,
    PayloadEquals,
    Policy,
    RateLimit,
    Threshold,
)
from afdo.trust import AuditLog, TrustState


def variant_policy():
    return Policy(
        "variant-policy",
        Condition(
            (PayloadEquals("variantId", "variantId"), Not(PayloadEquals("classification", "classification"))),
            target_class="GeneticVariantInterpretation",
        ),
        "negotiateClassification",
        (Notify("TrustRegister"),),
    )


def observation_policy():
    return Policy(
        "obs042-policy",
        Condition(
            (Threshold("trustScore", Comparator.LE, 0.5), Threshold("phenotypeMatchScore", Comparator.GE, 0.5)),
            target_node="obs042",
        ),
        "seekClinicalValidation",
        (RateLimit(86400.0),),
    )


def variant(index, classification="VUS", pid=None):
    variant_id = "VCV%06d" % index
    interface = EventInterface(
        filters=(SubscriptionFilter.on(EventKind.ANNOUNCE, variantId=variant_id),),
        handler_map=HandlerMap({EventKind.ANNOUNCE: ["variant-policy"]}),
    )
    return builders.afdo_record(
        pid=pid or "var-%06d" % index,
        fdo_type="GeneticVariantInterpretation",
        metadata={"variantId": variant_id, "classification": classification},
        policies=(variant_policy(),),
        event_interface=interface,
    )


def announce(index, classification="Pathogenic", actor="lab-x", at=0.0):
    return Event(
        EventKind.ANNOUNCE, actor, {"variantId": "VCV%06d" % index, "classification": classification}, at
    )


def test_event_kinds():
    assert Event("TrustChange", "a").kind is EventKind.TRUST_CHANGE
    with pytest.raises(UnknownEventKind):
        Event("Delete", "a")


def test_event_dict_form():
    event = announce(7, at=12.5)
    data = event.to_dict()
    assert data == {
        "type": "Announce",
        "actor": "lab-x",
        "object": {"classification": "Pathogenic", "variantId": "VCV000007"},
        "published": 12.5,
    }
    assert Event.from_dict(data) == event


def test_filters():
    filt = SubscriptionFilter.on("Announce", variantId="VCV000001", classification="*")
    assert filt.matches(announce(1))
    assert not filt.matches(announce(2))
    assert not filt.matches(Event("Update", "lab-x", {"variantId": "VCV000001", "classification": "B"}))
    assert not filt.matches(Event("Announce", "lab-x", {"variantId": "VCV000001"}))
    assert SubscriptionFilter().matches(Event("Validate", "x"))


def test_conflicting_announcement_triggers_negotiation():
    audit = AuditLog()
    bus = EventBus(audit=audit)
    bus.register(variant(7))
    report = bus.publish(announce(7))
    assert report.receivers == ("var-000007",)
    assert report.actions == (("var-000007", "negotiateClassification"),)
    (evaluation,) = report.evaluations["var-000007"]
    assert evaluation.notified == ("TrustRegister",)
    activities = [record.activity for record in audit]
    assert activities == ["event-delivery", "policy-evaluation"]
    assert report.audit_record_id == audit.records[0].record_id


def test_agreeing_announcement_does_not_fire():
    bus = EventBus()
    bus.register(variant(7))
    report = bus.publish(announce(7, classification="VUS"))
    assert report.delivered == 1
    assert report.evaluation_count == 1
    assert report.actions == ()


@pytest.mark.parametrize("population", [100, 1000])
def test_dispatch_is_bounded_by_matching_subscribers(population):
    bus = EventBus()
    for index in range(population):
        bus.register(variant(index))
    # two more objects describing variant 3; twin-b already agrees
    bus.register(variant(3, "Benign", pid="twin-a"))
    bus.register(variant(3, "Pathogenic", pid="twin-b"))
    report = bus.publish(announce(3))
    assert report.matched == 3
    assert report.delivered == 3
    assert report.evaluation_count == 3
    assert report.counts() == {"var-000003": 1, "twin-a": 1, "twin-b": 1}
    assert sorted(pid for pid, _ in report.actions) == ["twin-a", "var-000003"]
    assert bus.subscription_count == population + 2


def test_delivery_is_fifo_per_subscriber():
    bus = EventBus()
    bus.register(variant(1))
    events = [announce(1, classification=label, at=float(i)) for i, label in enumerate(["B", "LB", "P"])]
    for event in events:
        bus.publish(event)
    assert bus.inbox("var-000001") == tuple(events)
    assert bus.drain("var-000001") == events
    assert bus.inbox("var-000001") == ()


def test_duplicate_subscriptions_deliver_once():
    bus = EventBus()
    bus.register(variant(1))
    bus.subscribe("var-000001", SubscriptionFilter.on("Announce"))
    report = bus.publish(announce(1))
    assert report.matched == 2
    assert report.delivered == 1
    assert len(bus.inbox("var-000001")) == 1


def test_no_self_delivery_by_default():
    bus = EventBus()
    bus.register(variant(1))
    assert bus.publish(announce(1, actor="var-000001")).delivered == 0
    echo = EventBus(deliver_to_self=True)
    echo.register(variant(1))
    assert echo.publish(announce(1, actor="var-000001")).delivered == 1


def test_unsubscribe():
    bus = EventBus()
    (subscription,) = bus.register(variant(1))
    bus.unsubscribe(subscription)
    assert bus.publish(announce(1)).delivered == 0
    with pytest.raises(KeyError):
        bus.unsubscribe(subscription)


def test_register_without_subscribing():
    bus = EventBus()
    assert bus.register(variant(1), subscribe=False) == []
    assert bus.subscription_count == 0


def test_subscribe_requires_filter():
    with pytest.raises(TypeError):
        EventBus().subscribe("x", {"kind": "Announce"})


def test_trust_change_reevaluates_policy():
    interface = EventInterface(
        filters=(SubscriptionFilter.on(EventKind.TRUST_CHANGE, pid="obs042"),),
        handler_map=HandlerMap({EventKind.TRUST_CHANGE: ["obs042-policy"]}),
    )
    obs = builders.afdo_record(
        metadata={"phenotypeMatchScore": 0.72},
        policies=(observation_policy(),),
        event_interface=interface,
        trust=TrustState(score=0.8),
    )
    bus = EventBus()
    bus.register(obs)
    change = Event(EventKind.TRUST_CHANGE, "trust-register", {"pid": "obs042", "trustScore": 0.8}, 1.0)
    assert bus.publish(change).actions == ()
    bus.update(obs.with_trust(TrustState(score=0.45)))
    change = Event(EventKind.TRUST_CHANGE, "trust-register", {"pid": "obs042", "trustScore": 0.45}, 2.0)
    assert bus.publish(change).actions == (("obs042", "seekClinicalValidation"),)


def test_handler_map_must_name_declared_policies():
    interface = EventInterface(handler_map=HandlerMap({"Announce": ["missing-policy"]}))
    with pytest.raises(ValueError):
        builders.afdo_record(policies=(observation_policy(),), event_interface=interface)


def test_unmapped_kinds_dispatch_nothing():
    record = variant(1)
    assert dispatch_to_policies(record, Event("Validate", "x", {"variantId": "VCV000001"})) == []


def test_concurrent_publishers():
    bus = EventBus()
    bus.register(variant(1))

    def publish(i):
        return bus.publish(announce(1, classification="P", actor="lab-%d" % (i % 4), at=float(i)))

    with ThreadPoolExecutor(max_workers=8) as pool:
        reports = list(pool.map(publish, range(200)))
    assert all(report.delivered == 1 for report in reports)
    assert len(bus.inbox("var-000001")) == 200
    assert len(bus.audit) == 400
    assert fired(reports[0].evaluations["var-000001"]) == ["negotiateClassification"]


def test_dispatch_only_touches_receivers():
    bus = EventBus()
    for index in range(500):
        bus.register(variant(index))
    with mock.patch("afdo.events.dispatch_to_policies", wraps=events.dispatch_to_policies) as dispatch:
        bus.publish(announce(42))
    assert dispatch.call_count == 1
    receiver, event, engine = dispatch.call_args[0]
    assert receiver.pid == "var-000042"
    assert event.payload["variantId"] == "VCV000042"
    assert engine is bus.engine


def test_publish_only_tests_filters_of_the_event_kind():
    bus = EventBus()
    for index in range(50):
        bus.register(variant(index))
    bus.subscribe("auditor", SubscriptionFilter())
    bus.subscribe("watcher", SubscriptionFilter.on(EventKind.VALIDATE))
    assert [subscriber for subscriber, _ in bus.candidates("Validate")] == ["auditor", "watcher"]
    assert len(bus.candidates(EventKind.ANNOUNCE)) == 51
    with mock.patch.object(
        SubscriptionFilter, "matches", autospec=True, side_effect=SubscriptionFilter.matches
    ) as matches:
        report = bus.publish(Event("Validate", "lab-x", {"variantId": "VCV000001"}))
    assert matches.call_count == 2
    assert report.receivers == ("auditor", "watcher")


def test_unsubscribe_drops_the_kind_index_entry():
    bus = EventBus()
    (subscription,) = bus.register(variant(1))
    bus.unsubscribe(subscription)
    assert bus.candidates(EventKind.ANNOUNCE) == []
    assert bus.subscription_count == 0


def test_inbox_keeps_the_newest_events():
    bus = EventBus(inbox_limit=3)
    bus.register(variant(1))
    sent = [announce(1, at=float(i)) for i in range(5)]
    for event in sent:
        bus.publish(event)
    assert bus.inbox("var-000001") == tuple(sent[2:])
    assert EventBus().inbox_limit == events.DEFAULT_INBOX_LIMIT
    with pytest.raises(ValueError):
        EventBus(inbox_limit=0)
