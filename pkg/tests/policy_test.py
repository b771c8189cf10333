import threading

import pytest

import builders
from afdo import policy
from afdo.policy import (
    AuditTemplate,
    Comparator,
    Condition,
    Exists,
    Not,
    Notify,
    PayloadEquals,
    Policy,
    PolicyEngine,
    RateLimit,
    Threshold,
    evaluate_clause,
    evaluate_policy,
    format_duration,
    parse_duration,
    parse_policy,
    parse_policy_document,
    round_trip_check,
    serialise_policy,
)
from afdo.trust import AuditLog

DAY = 86400.0


def observation_policy():
    return Policy(
        name="obs042-policy",
        condition=Condition(
            (
                Threshold("trustScore", Comparator.LE, 0.5),
                Threshold("phenotypeMatchScore", Comparator.GE, 0.5),
            ),
            target_node="obs042",
        ),
        action="seekClinicalValidation",
        obligations=(RateLimit(DAY),),
    )


def variant_policy():
    return Policy(
        name="variant-policy",
        condition=Condition(
            (
                PayloadEquals("variantId", "variantId"),
                Not(PayloadEquals("classification", "classification")),
            ),
            target_class="GeneticVariantInterpretation",
        ),
        action="negotiateClassification",
        obligations=(Notify("TrustRegister"),),
    )


OBS = {"pid": "obs042", "type": "PatientPhenotypeObservation", "trustScore": 0.45, "phenotypeMatchScore": 0.72}


def test_durations():
    assert parse_duration("P1D") == 86400
    assert parse_duration("PT60S") == 60
    assert parse_duration("PT1H30M") == 5400
    assert format_duration(86400) == "P1D"
    assert format_duration(60) == "PT1M"
    assert format_duration(0) == "PT0S"
    assert format_duration(90061) == "P1DT1H1M1S"
    for bad in ("P1Y", "P", "PT", "1D", "P1W"):
        with pytest.raises(policy.UnsupportedDuration):
            parse_duration(bad)


def test_observation_policy_fires():
    evaluation = evaluate_policy(observation_policy(), OBS)
    assert evaluation.condition_result is True
    assert evaluation.fired
    assert evaluation.action == "seekClinicalValidation"


def test_condition_boundaries():
    p = observation_policy()
    assert evaluate_policy(p, dict(OBS, trustScore=0.5)).fired
    assert not evaluate_policy(p, dict(OBS, trustScore=0.51)).fired
    assert not evaluate_policy(p, dict(OBS, phenotypeMatchScore=0.49)).fired
    assert not evaluate_policy(p, dict(OBS, pid="obs043")).fired


def test_missing_field_is_false_unless_strict():
    fields = {"pid": "obs042", "trustScore": 0.4}
    evaluation = evaluate_policy(observation_policy(), fields)
    assert evaluation.condition_result is False
    assert not evaluation.fired
    assert evaluation.error is None

    strict = evaluate_policy(observation_policy(), fields, strict=True)
    assert not strict.fired
    assert "phenotypeMatchScore" in strict.error


def test_malformed_path_is_an_error_with_audit():
    audit = AuditLog()
    p = Policy("bad", Condition((Threshold("trust score", Comparator.LE, 0.5),)), "ANNOUNCE")
    evaluation = evaluate_policy(p, {"pid": "x", "trust score": 0.1}, audit=audit)
    assert not evaluation.fired
    assert evaluation.error
    assert len(audit) == 1
    assert dict(audit.records[0].detail)["outcome"] == "error"


def test_non_numeric_field_is_an_error():
    evaluation = evaluate_policy(observation_policy(), dict(OBS, trustScore="high"))
    assert evaluation.error
    assert not evaluation.fired


def test_rate_limit_blocks_within_window():
    engine = PolicyEngine()
    p = observation_policy()
    first = engine.evaluate(p, OBS, clock=0.0)
    second = engine.evaluate(p, OBS, clock=DAY - 1)
    third = engine.evaluate(p, OBS, clock=DAY)
    assert first.fired
    assert not second.fired
    assert second.condition_result is True
    assert second.blocked_by == RateLimit(DAY)
    assert third.fired
    assert engine.duty_state.firings("obs042-policy", "obs042") == (0.0, DAY)


def test_rate_limit_is_per_object():
    engine = PolicyEngine()
    p = Policy("any", Condition((Exists("trustScore"),)), "ANNOUNCE", (RateLimit(DAY),))
    assert engine.evaluate(p, {"pid": "a", "trustScore": 1}, clock=0.0).fired
    assert engine.evaluate(p, {"pid": "b", "trustScore": 1}, clock=1.0).fired


def test_concurrent_evaluations_fire_once_per_window():
    engine = PolicyEngine(audit=AuditLog())
    p = observation_policy()
    barrier = threading.Barrier(8)
    evaluations = []

    def worker():
        barrier.wait()
        evaluations.append(engine.evaluate(p, OBS, clock=0.0))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert sum(e.fired for e in evaluations) == 1
    assert len(engine.audit) == 8
    assert engine.duty_state.firings("obs042-policy", "obs042") == (0.0,)


def test_try_fire_records_only_when_unblocked():
    state = policy.DutyState()
    p = observation_policy()
    assert state.try_fire(p, "obs042", 0.0) is None
    assert state.try_fire(p, "obs042", 1.0) == RateLimit(DAY)
    assert state.firings("obs042-policy", "obs042") == (0.0,)


def test_every_evaluation_leaves_one_audit_record():
    engine = PolicyEngine(audit=AuditLog())
    p = observation_policy()
    inputs = [OBS, OBS, dict(OBS, trustScore=0.9), {"pid": "obs042"}, dict(OBS, trustScore="x")]
    evaluations = [engine.evaluate(p, fields, clock=float(i)) for i, fields in enumerate(inputs)]
    records = engine.audit.records
    assert len(records) == len(inputs)
    assert [e.audit_record_id for e in evaluations] == [r.record_id for r in records]
    outcomes = [dict(r.detail)["outcome"] for r in records]
    assert outcomes == ["fired", "blocked", "not-fired", "not-fired", "error"]
    assert records[0].outputs == ("seekClinicalValidation",)
    assert records[1].outputs == ()
    assert records[0].activity == "policy-evaluation"
    assert records[0].agent == "obs042"


def test_notify_duty():
    audit = AuditLog()
    fields = {"pid": "var1", "type": "GeneticVariantInterpretation", "variantId": "VCV1", "classification": "VUS"}
    payload = {"variantId": "VCV1", "classification": "Pathogenic"}
    evaluation = evaluate_policy(variant_policy(), fields, payload, audit=audit)
    assert evaluation.fired
    assert evaluation.notified == ("TrustRegister",)
    assert audit.records[0].outputs == ("negotiateClassification", "notify:TrustRegister")


def test_variant_policy_conditions():
    p = variant_policy()
    fields = {"pid": "var1", "type": "GeneticVariantInterpretation", "variantId": "VCV1", "classification": "VUS"}
    assert not evaluate_policy(p, fields, {"variantId": "VCV1", "classification": "VUS"}).fired
    assert not evaluate_policy(p, fields, {"variantId": "VCV2", "classification": "Benign"}).fired
    assert not evaluate_policy(p, dict(fields, type="DiseaseDefinition"), {"variantId": "VCV1", "classification": "B"}).fired
    assert not evaluate_policy(p, fields, None).fired


def test_evaluation_requires_pid():
    with pytest.raises(ValueError):
        evaluate_policy(observation_policy(), {"trustScore": 0.1})


def test_clause_helpers():
    assert evaluate_clause(Threshold("x", "!=", "a"), {"x": "b"})
    assert not evaluate_clause(Not(Exists("x")), {"x": 1})
    assert policy.normalise(Not(Not(Exists("x")))) == Exists("x")
    with pytest.raises(ValueError):
        Threshold("x", Comparator.LE, "high")


def test_condition_order_is_canonical():
    a = Condition((Threshold("b", "<=", 1), Threshold("a", ">=", 2)))
    b = Condition((Threshold("a", ">=", 2.0), Threshold("b", "<=", 1.0)))
    assert a == b


def test_serialisation_is_deterministic():
    text = serialise_policy(observation_policy())
    assert text == serialise_policy(observation_policy())
    assert text.startswith("@prefix : <urn:afdo:local#> .\n@prefix afdo: <http://w3id.org/afdo#> .\n")
    assert ":obs042-policy a afdo:Policy ;" in text
    assert "sh:maxInclusive 0.5" in text
    assert '"P1D"^^xsd:duration' in text
    assert "sh:targetNode :obs042" in text


def test_parse_observation_policy():
    document = parse_policy_document(builders.OBSERVATION_POLICY)
    assert len(document.policies) == 1
    parsed = document.policy("obs042-policy")
    assert parsed == observation_policy()
    fields = document.objects["obs042"]
    assert fields["type"] == "PatientPhenotypeObservation"
    assert fields["trustScore"] == 0.45
    assert fields["phenotypeMatchScore"] == 0.72
    assert len(fields["hasPhenotype"]) == 2
    assert evaluate_policy(parsed, fields).fired


def test_quoted_triples_are_kept_as_annotations():
    document = parse_policy_document(builders.OBSERVATION_POLICY)
    (annotation,) = document.annotations["obs042"]
    assert "prov:wasDerivedFrom" in annotation.text
    assert annotation.text.startswith("<< :obs042 afdo:hasPhenotype hp:0001382 >>")


def test_parse_variant_policy():
    parsed = parse_policy(builders.VARIANT_POLICY)
    assert parsed == variant_policy()
    assert parsed.condition.references_payload()


@pytest.mark.parametrize("make", [observation_policy, variant_policy])
def test_round_trip(make):
    report = round_trip_check(make(), count=45)
    assert report.inputs == 45
    assert report.deterministic
    assert report.equivalent
    assert report.stable
    assert report.passed


def test_round_trip_of_every_clause_form():
    p = Policy(
        name="mixed",
        condition=Condition(
            (
                Threshold("score", Comparator.LT, 0.25),
                Threshold("score", Comparator.GT, -1),
                Threshold("state", Comparator.EQ, 'say "hi"'),
                Threshold("state", Comparator.NE, "closed"),
                Exists("owner"),
                Not(Exists("retired")),
            )
        ),
        action="VALIDATE",
        obligations=(Notify("Curator"), RateLimit(90.0)),
        audit_template=AuditTemplate(activity="check", agent="engine"),
        version="2",
    )
    report = round_trip_check(p, count=60, seed=3)
    assert report.passed
    assert parse_policy(report.text) == p


def test_battery_is_deterministic():
    first = policy.evaluation_battery(observation_policy(), 45, seed=1)
    second = policy.evaluation_battery(observation_policy(), 45, seed=1)
    assert first == second
    assert len(first) == 45


def test_syntax_error_position():
    text = builders.VARIANT_POLICY.replace("afdo:negotiateClassification", "undeclared:negotiate")
    line = text[: text.index("undeclared:")].count("\n") + 1
    with pytest.raises(policy.PolicySyntaxError) as error:
        parse_policy_document(text)
    assert error.value.line == line
    assert error.value.column >= 1


def test_truncated_variant_policy_is_a_syntax_error():
    with pytest.raises(policy.PolicySyntaxError):
        parse_policy_document(builders.TRUNCATED_VARIANT_POLICY)


def test_unsupported_term_is_reported():
    text = builders.VARIANT_POLICY.replace("sh:targetClass", "sh:targetSubjectsOf")
    with pytest.raises(policy.PolicySemanticError) as error:
        parse_policy(text)
    assert "targetSubjectsOf" in str(error.value)
    assert error.value.line == text[: text.index("sh:targetSubjectsOf")].count("\n") + 1


def test_parse_policy_needs_one_policy():
    text = builders.VARIANT_POLICY + builders.VARIANT_POLICY.split("\n\n", 1)[1].replace(
        ":variant-policy", ":second-policy"
    )
    assert len(parse_policy_document(text).policies) == 2
    with pytest.raises(policy.PolicySemanticError):
        parse_policy(text)


def test_unserialisable_names():
    p = Policy("has space", Condition(), "ANNOUNCE")
    with pytest.raises(policy.UnsupportedPolicy):
        serialise_policy(p)
