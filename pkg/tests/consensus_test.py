import logging
import random

import pytest

import builders
from builders import B, LB, LP, P, VUS
from afdo import consensus
from afdo.consensus import (
    AgreementRound,
    ConsensusConfig,
    Interpretation,
    Strategy,
    aggregate,
    detect_conflict,
    first_wins,
    run_round,
    simple_majority,
    trim_count,
    trimmed_weighted_mean,
)
from afdo.core_model import Classification
from afdo.trust import AuditLog


def test_worked_example():
    outcome = trimmed_weighted_mean(builders.worked_example(), theta=0.2)
    assert outcome.consensus_score == pytest.approx(0.677, abs=0.001)
    assert outcome.consensus_class is LP
    assert outcome.consensus_class.label == "Likely Pathogenic"
    assert [s.classification for s in outcome.trimmed_out] == [B, P]
    assert len(outcome.included) == 3
    assert not outcome.trim_skipped


def test_trim_count():
    assert trim_count(5, 0.2) == 1
    assert trim_count(9, 0.2) == 1
    assert trim_count(10, 0.2) == 2
    assert trim_count(10, 0.25) == 2
    assert trim_count(10, 0.25, "ceil") == 3
    # theta * n below one still trims one per side when enough remain
    assert trim_count(4, 0.2) == 1
    assert trim_count(3, 0.2) == 1
    assert trim_count(2, 0.2) == 0
    assert trim_count(1, 0.2) == 0


def test_trim_count_rejects_bad_theta():
    with pytest.raises(ValueError):
        trim_count(5, 0.5)
    with pytest.raises(ValueError):
        trim_count(5, 0.0)


def test_small_round_skips_trim(caplog):
    caplog.set_level(logging.DEBUG, logger="afdo")
    outcome = trimmed_weighted_mean(builders.submissions([B, P], [0.5, 0.5]))
    assert outcome.trim_skipped
    assert outcome.trimmed_out == ()
    assert outcome.consensus_score == pytest.approx(0.5)
    assert outcome.consensus_class is VUS
    assert "Trim skipped" in caplog.text


def test_single_submission():
    outcome = trimmed_weighted_mean(builders.submissions([LB]))
    assert outcome.consensus_class is LB
    assert outcome.consensus_score == 0.25


def test_zero_weights_fall_back_to_unweighted_mean(caplog):
    subs = builders.submissions([B, VUS, P], [0.0, 0.0, 0.0])
    outcome = trimmed_weighted_mean(subs)
    assert outcome.unweighted_fallback
    assert outcome.consensus_score == 0.5
    assert "zero" in caplog.text


def test_empty_round():
    with pytest.raises(consensus.EmptyRound):
        trimmed_weighted_mean([])
    with pytest.raises(consensus.EmptyRound):
        simple_majority([])


def test_tie_between_labels():
    subs = builders.submissions([LB, VUS], [0.5, 0.5])
    assert trimmed_weighted_mean(subs).consensus_class is LB
    assert trimmed_weighted_mean(subs, tie="upper").consensus_class is VUS


def test_order_is_independent_of_arrival():
    subs = builders.worked_example()
    forward = trimmed_weighted_mean(subs)
    backward = trimmed_weighted_mean(list(reversed(subs)))
    assert forward.consensus_score == backward.consensus_score
    assert forward.trimmed_out == backward.trimmed_out


def _oracle(subs, theta):
    ordered = sorted(subs, key=lambda s: (s.score, s.reputation * s.confidence, s.submitter_id, s.order_index))
    n = len(ordered)
    k = max(1, int(theta * n + 1e-9))
    if n - 2 * k < 1:
        k = 0
    kept = ordered[k : n - k]
    total = sum(s.reputation * s.confidence for s in kept)
    if total == 0:
        return sum(s.score for s in kept) / len(kept)
    return sum(s.reputation * s.confidence * s.score for s in kept) / total


def test_matches_oracle_on_random_rounds():
    rng = random.Random(7)
    for _ in range(1000):
        n = rng.randint(1, 12)
        subs = [
            builders.submission(
                rng.choice(list(Classification)),
                reputation=round(rng.random(), 3),
                confidence=round(rng.random(), 3),
                submitter_id="p%d" % rng.randint(0, 99),
                order_index=i,
            )
            for i in range(n)
        ]
        theta = rng.choice([0.1, 0.2, 0.25, 0.3])
        outcome = trimmed_weighted_mean(subs, theta=theta)
        assert outcome.consensus_score == pytest.approx(_oracle(subs, theta), abs=1e-9)
        assert 0.0 <= outcome.consensus_score <= 1.0


def test_simple_majority():
    outcome = simple_majority(builders.submissions([P, P, B, VUS]))
    assert outcome.consensus_class is P
    # tie between B and P goes to the lower label
    assert simple_majority(builders.submissions([P, B])).consensus_class is B
    assert simple_majority(builders.submissions([P, B]), tie="upper").consensus_class is P


def test_first_wins():
    subs = builders.submissions([VUS, P, B])
    assert first_wins(subs).consensus_class is VUS
    assert first_wins(list(reversed(subs))).consensus_class is VUS


def test_first_wins_needs_distinct_order():
    subs = [builders.submission(P, submitter_id="a"), builders.submission(B, submitter_id="b")]
    with pytest.raises(consensus.DuplicateOrderIndex):
        first_wins(subs)


def test_aggregate_dispatches_on_strategy():
    subs = builders.submissions([VUS, P, P, B, LP])
    assert aggregate(subs, ConsensusConfig(strategy=Strategy.FIRST_WINS)).consensus_class is VUS
    assert aggregate(subs, ConsensusConfig(strategy="sm")).consensus_class is P
    outcome = aggregate(subs, ConsensusConfig())
    assert outcome.strategy is Strategy.TRIMMED_WEIGHTED_MEAN
    assert outcome.policy_version == ConsensusConfig().version


def test_config_validation():
    with pytest.raises(ValueError):
        ConsensusConfig(theta=0.5)
    with pytest.raises(ValueError):
        ConsensusConfig(round_timeout=0)
    with pytest.raises(ValueError):
        ConsensusConfig(strategy="median")


def test_detect_conflict():
    assert detect_conflict(Interpretation("v1", P), Interpretation("v1", VUS))
    assert not detect_conflict(Interpretation("v1", P), Interpretation("v1", P))
    assert not detect_conflict(Interpretation("v1", P), Interpretation("v2", B))


def test_round_excludes_late_arrivals():
    subs = builders.worked_example()
    arrivals = [(1.0 * i, sub) for i, sub in enumerate(subs)] + [(61.0, builders.submission(B, submitter_id="late"))]
    agreement = AgreementRound("v1", ConsensusConfig(round_timeout=60.0))
    for at, sub in arrivals:
        agreement.receive(sub, at)
    assert agreement.n == 5
    assert agreement.k == 1
    assert agreement.f == 1
    outcome = agreement.close()
    assert outcome.target_id == "v1"
    assert outcome.consensus_score == pytest.approx(0.677, abs=0.001)
    assert agreement.state == "Closed"
    with pytest.raises(consensus.RoundClosed):
        agreement.receive(subs[0], 2.0)
    successor = agreement.carry_over()
    assert successor.n == 1
    assert successor.start == 60.0


def test_void_round_is_audited(caplog):
    audit = AuditLog()
    assert run_round("v1", [], audit=audit) is None
    assert len(audit) == 1
    assert audit.records[0].activity == "consensus-round-void"
    assert "void" in caplog.text


def test_round_audit_record():
    audit = AuditLog()
    arrivals = [(0.5, sub) for sub in builders.worked_example()]
    outcome = run_round("v1", arrivals, audit=audit)
    assert outcome.audit_record_id == audit.records[0].record_id
    record = audit.records[0]
    assert record.activity == "consensus-round"
    assert record.outputs[0] == "Likely Pathogenic"
    assert record.policy_version == ConsensusConfig().version


def test_outcome_audit_json_is_stable():
    first = trimmed_weighted_mean(builders.worked_example()).to_json()
    second = trimmed_weighted_mean(builders.worked_example()).to_json()
    assert first == second
    assert '"trimmed_out":["s00","s04"]' in first
