import io

import pytest

import builders
from afdo import corpus
from afdo.core_model import (
    Classification,
    DisagreementBucket,
    SubmitterCategory,
    read_records,
    write_records,
)
from afdo.corpus import (
    CorpusSpec,
    InfeasibleCorpusSpec,
    assign_confidence,
    assign_reputation,
    corpus_statistics,
    filter_pipeline,
    generate_corpus,
    hash_submitter,
    read_raw_rows,
    records_to_raw_rows,
    scaled_bucket_counts,
)


def test_submitter_hash():
    assert hash_submitter("LabA", "afdo-2026") == "b6c831c3"
    assert hash_submitter("LabA") == "b6c831c3"
    assert hash_submitter("LabB") == "7db5babb"
    assert hash_submitter("LabA", "other-salt") != "b6c831c3"
    with pytest.raises(ValueError):
        hash_submitter("")


def test_reputation_and_confidence():
    assert assign_reputation("clinical_lab") == 0.85
    assert assign_reputation(SubmitterCategory.RESEARCH_LAB) == 0.70
    assert assign_reputation("individual") == 0.55
    with pytest.raises(ValueError):
        assign_reputation("expert_panel")
    assert assign_confidence("criteria_provided_multiple_submitters_no_conflicts") == 0.85
    assert assign_confidence("criteria provided, single submitter") == 0.70
    assert assign_confidence("criteria_provided_conflicting_interpretations") == 0.55
    assert assign_confidence("no assertion criteria provided") == 0.40
    with pytest.raises(ValueError):
        assign_confidence("reviewed by expert panel")


def test_scaled_bucket_counts():
    counts = dict(scaled_bucket_counts(0.1))
    assert counts == {
        DisagreementBucket.PLP_VS_VUS: 174,
        DisagreementBucket.VUS_VS_LBB: 192,
        DisagreementBucket.PLP_VS_LBB: 7,
        DisagreementBucket.THREE_GROUP_SPAN: 18,
    }
    full = dict(scaled_bucket_counts(1.0))
    assert list(full.values()) == [1744, 1918, 65, 187]
    assert sum(full.values()) == 3914


def test_filter_pipeline_stages():
    rows = read_raw_rows(io.StringIO(builders.raw_text()))
    records, counts = filter_pipeline(rows)
    assert counts == [10, 9, 8, 7, 5]
    assert [record.target_id for record in records] == ["V6", "V7", "V8", "V9", "V10"]
    assert [record.bucket for record in records] == [
        DisagreementBucket.PLP_VS_VUS,
        DisagreementBucket.VUS_VS_LBB,
        DisagreementBucket.PLP_VS_LBB,
        DisagreementBucket.THREE_GROUP_SPAN,
        DisagreementBucket.PLP_VS_VUS,
    ]


def test_filtered_record_contents():
    records, _ = filter_pipeline(read_raw_rows(io.StringIO(builders.raw_text())))
    v6 = records[0]
    assert v6.ground_truth.classification is Classification.PATHOGENIC
    assert v6.ground_truth.category is SubmitterCategory.EXPERT_PANEL
    assert v6.ground_truth not in v6.submissions
    first, second = v6.submissions
    assert first.submitter_id == "b6c831c3"
    assert (first.reputation, first.confidence) == (0.85, 0.70)
    assert second.submitter_id == "7db5babb"
    assert (second.reputation, second.confidence) == (0.70, 0.40)
    assert second.classification is Classification.VUS
    v7 = records[1]
    assert v7.submissions[1].category is SubmitterCategory.INDIVIDUAL
    assert v7.ground_truth.review_status == "practice_guideline"


def test_raw_rows_need_all_columns():
    with pytest.raises(ValueError):
        read_raw_rows(io.StringIO("variant_id\tsubmitter\nV1\tLabA\n"))


def test_raw_round_trip():
    rows = read_raw_rows(io.StringIO(builders.raw_text()))
    stream = io.StringIO()
    corpus.write_raw_rows(rows, stream)
    assert read_raw_rows(io.StringIO(stream.getvalue())) == rows


def test_default_corpus_statistics():
    records = builders.small_corpus()
    stats = corpus_statistics(records)
    assert stats.records == 391
    assert stats.bucket_counts == {
        DisagreementBucket.PLP_VS_VUS: 174,
        DisagreementBucket.VUS_VS_LBB: 192,
        DisagreementBucket.PLP_VS_LBB: 7,
        DisagreementBucket.THREE_GROUP_SPAN: 18,
    }
    assert stats.mean_submissions == pytest.approx(8.5, abs=0.5)
    assert stats.category_share(SubmitterCategory.CLINICAL_LAB) == pytest.approx(0.422, abs=0.02)
    assert stats.category_share(SubmitterCategory.RESEARCH_LAB) == pytest.approx(0.118, abs=0.02)
    assert stats.category_share(SubmitterCategory.INDIVIDUAL) == pytest.approx(0.460, abs=0.02)


def test_generated_records_are_conflicts():
    for record in builders.small_corpus():
        assert corpus.is_conflict(record)
        assert record.ground_truth.category is SubmitterCategory.EXPERT_PANEL
        assert record.ground_truth not in record.submissions
        assert len(record.submissions) >= len(record.bucket.groups)
        ids = [sub.submitter_id for sub in record.submissions]
        assert len(set(ids)) == len(ids)
        assert sorted(sub.order_index for sub in record.submissions) == list(range(len(ids)))
        for sub in record.submissions:
            assert sub.reputation == assign_reputation(sub.category)
            assert sub.confidence == assign_confidence(sub.review_status)


def test_generation_is_reproducible():
    spec = CorpusSpec.default(scale=0.02, seed=9)
    first = io.StringIO()
    second = io.StringIO()
    write_records(generate_corpus(spec), first)
    write_records(generate_corpus(spec), second)
    assert first.getvalue() == second.getvalue()
    other = io.StringIO()
    write_records(generate_corpus(CorpusSpec.default(scale=0.02, seed=10)), other)
    assert other.getvalue() != first.getvalue()


def test_records_survive_serialisation():
    records = list(builders.small_corpus()[:25])
    stream = io.StringIO()
    assert write_records(records, stream) == 25
    assert read_records(io.StringIO(stream.getvalue())) == records


def test_generated_corpus_passes_the_filters():
    records = list(builders.small_corpus()[:50])
    kept, counts = filter_pipeline(records_to_raw_rows(records))
    assert counts == [50] * 5
    assert [record.bucket for record in kept] == [record.bucket for record in records]


def test_max_submissions():
    spec = CorpusSpec.default(scale=0.05, max_submissions=12)
    records = generate_corpus(spec)
    assert max(len(record.submissions) for record in records) <= 12


def test_infeasible_specs():
    with pytest.raises(InfeasibleCorpusSpec):
        generate_corpus(CorpusSpec.default(scale=0.05, mean_submissions=2.0))
    with pytest.raises(InfeasibleCorpusSpec):
        generate_corpus(CorpusSpec.default(scale=0.05, max_submissions=2))
    with pytest.raises(InfeasibleCorpusSpec):
        generate_corpus(CorpusSpec.default(scale=0.05, max_submissions=6))


def test_spec_validation():
    with pytest.raises(ValueError):
        CorpusSpec(10, ((DisagreementBucket.PLP_VS_VUS, 9),))
    with pytest.raises(ValueError):
        CorpusSpec(
            1,
            ((DisagreementBucket.PLP_VS_VUS, 1),),
            category_mix=((SubmitterCategory.EXPERT_PANEL, 1.0),),
        )
    with pytest.raises(ValueError):
        CorpusSpec.default(scale=0.02, contested_rate=1.5)
    with pytest.raises(ValueError):
        CorpusSpec.default(scale=0.02, agreement=((SubmitterCategory.INDIVIDUAL, -0.1),))


def test_uncontested_records_follow_the_panel():
    spec = CorpusSpec.default(
        scale=0.02,
        contested_rate=0.0,
        agreement=tuple((category, 1.0) for category, _ in corpus.DEFAULT_CATEGORY_MIX),
    )
    for record in generate_corpus(spec):
        labels = [sub.classification for sub in record.submissions]
        truth = record.ground_truth.classification
        assert labels.count(truth) == max(labels.count(label) for label in set(labels))
