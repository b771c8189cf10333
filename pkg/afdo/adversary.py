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
`afdo.adversary`
================================================================================

Attack models (Sybil amplification, reputation collusion, evidence
poisoning), the adversarial sweep with percentile-bootstrap confidence
intervals, the strategy ablation, the trimming-fraction sensitivity table,
and an executable check of the within-bound safety property.

Implementation Notes
--------------------

Every random draw comes from a ``numpy`` generator seeded by
``SeedSequence(seed, spawn_key=...)``. The perturbation of record ``r`` in
trial ``t`` of cell ``(model, fraction)`` uses the key
``(0, model, fraction, t, r)`` and so does not depend on which other cells
are run; all strategies and trimming fractions see the same perturbed
records. Bootstrap resampling uses keys under ``1``.
"""

from __future__ import annotations

import csv
import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from afdo.consensus import (
    ConsensusConfig,
    Strategy,
    aggregate,
    trim_count,
    trimmed_weighted_mean,
)
from afdo.core_model import (
    GROUP_MEMBERS,
    Classification,
    ConflictRecord,
    DisagreementBucket,
    MajorGroup,
    Submission,
    SubmitterCategory,
    canonical_json,
)
from afdo.corpus import hash_submitter, round_half_up

logger = logging.getLogger(__name__)

SWEEP_FRACTIONS = (0.0, 0.10, 0.15, 0.20, 0.25, 0.33, 0.50)
THETA_GRID = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.40)
BOOTSTRAP_RESAMPLES = 1000
ALL_BUCKETS = "all"

SWEEP_COLUMNS = (
    "model",
    "fraction",
    "strategy",
    "theta",
    "bucket",
    "n_records",
    "accuracy",
    "ci_low",
    "ci_high",
)


class AttackModel(enum.Enum):
    """Fixed adversary behaviours."""

    SYBIL = "sybil"
    COLLUSION = "collusion"
    POISONING = "poisoning"


_MODEL_KEYS = {model: i for i, model in enumerate(AttackModel)}
_STRATEGY_KEYS = {strategy: i for i, strategy in enumerate(Strategy)}
_BUCKET_KEYS = {bucket.value: i for i, bucket in enumerate(DisagreementBucket)}
_BUCKET_KEYS[ALL_BUCKETS] = len(DisagreementBucket)


def _milli(value: float) -> int:
    return int(round(value * 10000))


@dataclass(frozen=True)
class AttackSpec:
    """One attack setting; ``free`` allows any fraction in [0, 0.5]."""

    model: AttackModel
    fraction: float
    trials: int = 10
    seed: int = 42
    free: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model", AttackModel(self.model))
        if self.free:
            if not 0.0 <= self.fraction <= 0.5:
                raise ValueError("fraction must be in [0, 0.5]: %r" % self.fraction)
        elif _milli(self.fraction) not in {_milli(value) for value in SWEEP_FRACTIONS}:
            raise ValueError("fraction %r is not in the sweep set" % self.fraction)
        if self.trials < 1:
            raise ValueError("trials must be at least 1")


def adversarial_alternative(c_star: Classification, vus_tie: str = "benign") -> Classification:
    """Label furthest from ``c_star`` on the scale; VUS goes to Benign
    unless ``vus_tie="pathogenic"``."""
    c_star = Classification(c_star)
    if c_star is Classification.VUS:
        return Classification.PATHOGENIC if vus_tie == "pathogenic" else Classification.BENIGN
    return max(Classification, key=lambda c: abs(c.value - c_star.value))


def attack_count(fraction: float, n_honest: int) -> int:
    """Adversaries for an honest round of ``n_honest``, rounded half up."""
    return round_half_up(Fraction(fraction).limit_denominator(10**6) * n_honest)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def apply_sybil(record: ConflictRecord, f: int, seed) -> ConflictRecord:
    """Append ``f`` low-reputation submitters voting against the ground truth."""
    if f < 0:
        raise ValueError("f must be >= 0")
    if f == 0:
        return record
    rng = _rng(seed)
    reputations = rng.uniform(0.20, 0.40, size=f)
    confidences = rng.uniform(0.40, 0.70, size=f)
    c_minus = adversarial_alternative(record.ground_truth.classification)
    base = max(sub.order_index for sub in record.submissions) + 1
    sybils = tuple(
        Submission(
            submitter_id=hash_submitter("sybil-%s-%d" % (record.target_id, i)),
            category=SubmitterCategory.INDIVIDUAL,
            classification=c_minus,
            reputation=float(reputations[i]),
            confidence=float(confidences[i]),
            order_index=base + i,
        )
        for i in range(f)
    )
    return record.with_submissions(record.submissions + sybils)


def apply_collusion(record: ConflictRecord, f: int) -> ConflictRecord:
    """The ``f`` highest-reputation submitters switch to the adversarial
    label; reputation ties go to the lexicographically smaller id."""
    n = len(record.submissions)
    if not 0 <= f <= n:
        raise ValueError("f must be in [0, %d]: %d" % (n, f))
    if f == 0:
        return record
    ranked = sorted(range(n), key=lambda i: (-record.submissions[i].reputation, record.submissions[i].submitter_id))
    chosen = set(ranked[:f])
    c_minus = adversarial_alternative(record.ground_truth.classification)
    return record.with_submissions(
        replace(sub, classification=c_minus) if i in chosen else sub
        for i, sub in enumerate(record.submissions)
    )


def apply_poisoning(record: ConflictRecord, f: int, seed) -> ConflictRecord:
    """``f`` uniformly sampled submissions take the adversarial label and the
    round's maximum confidence."""
    n = len(record.submissions)
    if not 0 <= f <= n:
        raise ValueError("f must be in [0, %d]: %d" % (n, f))
    if f == 0:
        return record
    chosen = {int(i) for i in _rng(seed).choice(n, size=f, replace=False)}
    top = max(sub.confidence for sub in record.submissions)
    c_minus = adversarial_alternative(record.ground_truth.classification)
    return record.with_submissions(
        replace(sub, classification=c_minus, confidence=top) if i in chosen else sub
        for i, sub in enumerate(record.submissions)
    )


def apply_attack(record: ConflictRecord, model: AttackModel, fraction: float, seed) -> ConflictRecord:
    """Perturb ``record`` with ``fraction`` of its honest count."""
    model = AttackModel(model)
    f = attack_count(fraction, len(record.submissions))
    if model is AttackModel.SYBIL:
        return apply_sybil(record, f, seed)
    if model is AttackModel.COLLUSION:
        return apply_collusion(record, f)
    return apply_poisoning(record, f, seed)


def bootstrap_ci(indicators: Sequence[float], resamples: int = BOOTSTRAP_RESAMPLES, level: float = 0.95, seed=0):
    """Percentile bootstrap ``(mean, lower, upper)`` over the indicators."""
    values = np.asarray(indicators, dtype=float)
    if values.size == 0:
        raise ValueError("bootstrap_ci needs at least one value")
    mean = float(values.mean())
    rng = _rng(seed)
    picks = rng.integers(0, values.size, size=(resamples, values.size))
    means = values[picks].mean(axis=1)
    tail = (1.0 - level) / 2.0 * 100.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    return mean, min(float(low), mean), max(float(high), mean)


@dataclass(frozen=True)
class SweepCell:
    """Accuracy of one (model, fraction, strategy, theta, bucket) cell."""

    model: str
    fraction: float
    strategy: str
    theta: Optional[float]
    bucket: str
    n_records: int
    accuracy: float
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if not self.ci_low <= self.accuracy <= self.ci_high:
            raise ValueError("Confidence interval does not contain the mean")

    @property
    def key(self) -> tuple:
        """Cell identity."""
        return (self.model, self.fraction, self.strategy, self.theta, self.bucket)

    def row(self) -> tuple:
        """Values in `SWEEP_COLUMNS` order."""
        return (
            self.model,
            "%.2f" % self.fraction,
            self.strategy,
            "" if self.theta is None else "%.2f" % self.theta,
            self.bucket,
            self.n_records,
            "%.6f" % self.accuracy,
            "%.6f" % self.ci_low,
            "%.6f" % self.ci_high,
        )

    def to_dict(self) -> dict:
        """JSON-shaped form."""
        return dict(zip(SWEEP_COLUMNS, self.row()))


@dataclass
class SweepResult:
    """Ordered collection of cells."""

    cells: list = field(default_factory=list)

    def cell(self, model, fraction, strategy, theta=None, bucket=ALL_BUCKETS) -> SweepCell:
        """Cell with the given identity."""
        model = model.value if isinstance(model, AttackModel) else model
        strategy = strategy.value if isinstance(strategy, Strategy) else strategy
        for cell in self.cells:
            if (
                cell.model == model
                and _milli(cell.fraction) == _milli(fraction)
                and cell.strategy == strategy
                and (cell.theta is None if theta is None else cell.theta is not None and _milli(cell.theta) == _milli(theta))
                and cell.bucket == bucket
            ):
                return cell
        raise KeyError((model, fraction, strategy, theta, bucket))

    def write_csv(self, stream) -> None:
        """CSV with a header row."""
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for cell in self.cells:
            writer.writerow(cell.row())

    def to_json(self) -> str:
        """Canonical JSON report."""
        return canonical_json({"columns": list(SWEEP_COLUMNS), "cells": [cell.to_dict() for cell in self.cells]})


def _configs(strategies, theta_grid) -> list:
    configs = []
    for strategy in strategies:
        strategy = Strategy(strategy)
        if strategy is Strategy.TRIMMED_WEIGHTED_MEAN:
            configs.extend(ConsensusConfig(theta=theta, strategy=strategy) for theta in theta_grid)
        else:
            configs.append(ConsensusConfig(strategy=strategy))
    return configs


def _correct(record: ConflictRecord, config: ConsensusConfig) -> float:
    outcome = aggregate(record.submissions, config)
    return 1.0 if outcome.consensus_class is record.ground_truth.classification else 0.0


def _perturb_seed(seed, model: AttackModel, fraction: float, trial: int, index: int):
    return np.random.SeedSequence(seed, spawn_key=(0, _MODEL_KEYS[model], _milli(fraction), trial, index))


def _bootstrap_seed(seed, model_key, fraction, config: ConsensusConfig, bucket: str):
    theta = _milli(config.theta) if config.strategy is Strategy.TRIMMED_WEIGHTED_MEAN else 0
    key = (1, model_key, _milli(fraction), _STRATEGY_KEYS[config.strategy], theta, _BUCKET_KEYS[bucket])
    return np.random.SeedSequence(seed, spawn_key=key)


def _cells(label, model_key, fraction, config, corpus, scores, seed, resamples, by_bucket) -> list:
    """Cells of one configuration from per-record mean accuracies."""
    theta = config.theta if config.strategy is Strategy.TRIMMED_WEIGHTED_MEAN else None
    groups = [(ALL_BUCKETS, list(range(len(corpus))))]
    if by_bucket:
        for bucket in DisagreementBucket:
            members = [i for i, record in enumerate(corpus) if record.bucket is bucket]
            if members:
                groups.append((bucket.value, members))
    cells = []
    for bucket, members in groups:
        mean, low, high = bootstrap_ci(
            [scores[i] for i in members], resamples, seed=_bootstrap_seed(seed, model_key, fraction, config, bucket)
        )
        cells.append(SweepCell(label, fraction, config.strategy.value, theta, bucket, len(members), mean, low, high))
    return cells


def _attack_cells(corpus, model, fraction, configs, trials, seed, resamples, by_bucket) -> list:
    totals = np.zeros((len(configs), len(corpus)))
    for trial in range(trials):
        for index, record in enumerate(corpus):
            perturbed = apply_attack(record, model, fraction, _perturb_seed(seed, model, fraction, trial, index))
            for c, config in enumerate(configs):
                totals[c, index] += _correct(perturbed, config)
    cells = []
    for c, config in enumerate(configs):
        scores = list(totals[c] / trials)
        cells.extend(
            _cells(model.value, _MODEL_KEYS[model], fraction, config, corpus, scores, seed, resamples, by_bucket)
        )
    logger.info("Sweep cell %s f/n=%.2f done", model.value, fraction)
    return cells


def run_sweep(
    corpus: Sequence[ConflictRecord],
    strategies: Iterable = tuple(Strategy),
    attacks: Iterable = tuple(AttackModel),
    fractions: Iterable[float] = SWEEP_FRACTIONS,
    trials: int = 10,
    theta_grid: Iterable[float] = (0.20,),
    seed=42,
    resamples: int = BOOTSTRAP_RESAMPLES,
    by_bucket: bool = False,
    workers: int = 0,
) -> SweepResult:
    """Accuracy of each strategy under each attack and adversary fraction.

    :param int workers: run (model, fraction) groups on a thread pool of this
        size; results are merged in key order either way
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("run_sweep needs a non-empty corpus")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    configs = _configs(strategies, tuple(theta_grid))
    jobs = [(AttackModel(model), float(fraction)) for model in attacks for fraction in fractions]

    def work(job):
        model, fraction = job
        return _attack_cells(corpus, model, fraction, configs, trials, seed, resamples, by_bucket)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(work, jobs))
    else:
        groups = [work(job) for job in jobs]
    return SweepResult([cell for group in groups for cell in group])


def run_cell(
    corpus: Sequence[ConflictRecord],
    model,
    fraction: float,
    strategy=Strategy.TRIMMED_WEIGHTED_MEAN,
    theta: float = 0.20,
    trials: int = 10,
    seed=42,
    resamples: int = BOOTSTRAP_RESAMPLES,
) -> SweepCell:
    """One overall sweep cell, computed on its own."""
    configs = _configs([strategy], (theta,))
    cells = _attack_cells(list(corpus), AttackModel(model), float(fraction), configs, trials, seed, resamples, False)
    return cells[0]


def run_ablation(
    corpus: Sequence[ConflictRecord], seed=42, theta: float = 0.20, resamples: int = BOOTSTRAP_RESAMPLES
) -> SweepResult:
    """Unattacked accuracy per strategy, overall and per bucket."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("run_ablation needs a non-empty corpus")
    cells = []
    for config in _configs(tuple(Strategy), (theta,)):
        scores = [_correct(record, config) for record in corpus]
        cells.extend(_cells("none", len(AttackModel), 0.0, config, corpus, scores, seed, resamples, True))
    return SweepResult(cells)


def run_theta_sensitivity(
    corpus: Sequence[ConflictRecord],
    thetas: Iterable[float] = THETA_GRID,
    seed=42,
    resamples: int = BOOTSTRAP_RESAMPLES,
    by_bucket: bool = False,
) -> SweepResult:
    """Unattacked trimmed-weighted-mean accuracy per trimming fraction;
    per-bucket cells are added when ``by_bucket`` is set."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("run_theta_sensitivity needs a non-empty corpus")
    cells = []
    for config in _configs([Strategy.TRIMMED_WEIGHTED_MEAN], tuple(thetas)):
        scores = [_correct(record, config) for record in corpus]
        cells.extend(_cells("none", len(AttackModel), 0.0, config, corpus, scores, seed, resamples, by_bucket))
    return SweepResult(cells)


def theta_spread(result: SweepResult, bucket: str = ALL_BUCKETS) -> float:
    """Largest minus smallest accuracy across trimming fractions."""
    values = [cell.accuracy for cell in result.cells if cell.bucket == bucket and cell.theta is not None]
    return max(values) - min(values) if values else 0.0


# Within-bound safety


@dataclass(frozen=True)
class SafetyRound:
    """A generated round: honest submissions plus extreme adversaries."""

    honest: tuple
    adversaries: tuple
    group: MajorGroup
    theta: float


@dataclass
class SafetyReport:
    """Counts from `check_safety_bound`."""

    trials: int = 0
    interval_violations: int = 0
    group_violations: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """No violation of either property."""
        return self.interval_violations == 0 and self.group_violations == 0


def safety_round(
    rng: np.random.Generator, theta: float = 0.20, min_n: int = 5, max_n: int = 9
) -> SafetyRound:
    """Random round whose honest labels share one major group and whose
    adversaries sit at the scale ends, at most ``trim_count`` per side."""
    n = int(rng.integers(min_n, max_n + 1))
    k = trim_count(n, theta)
    low = int(rng.integers(0, k + 1))
    high = int(rng.integers(0, k + 1))
    group = list(MajorGroup)[int(rng.integers(len(MajorGroup)))]
    members = GROUP_MEMBERS[group]
    honest = tuple(
        Submission(
            submitter_id="h%03d" % i,
            category=SubmitterCategory.CLINICAL_LAB,
            classification=members[int(rng.integers(len(members)))],
            reputation=float(rng.uniform(0.05, 1.0)),
            confidence=float(rng.uniform(0.05, 1.0)),
            order_index=i,
        )
        for i in range(n - low - high)
    )
    extremes = [Classification.BENIGN] * low + [Classification.PATHOGENIC] * high
    adversaries = tuple(
        Submission(
            submitter_id="a%03d" % i,
            category=SubmitterCategory.INDIVIDUAL,
            classification=label,
            reputation=float(rng.uniform(0.05, 1.0)),
            confidence=float(rng.uniform(0.05, 1.0)),
            order_index=len(honest) + i,
        )
        for i, label in enumerate(extremes)
    )
    return SafetyRound(honest, adversaries, group, theta)


def check_safety_bound(
    trials: int = 10000, seed=0, theta: float = 0.20, min_n: int = 5, max_n: int = 9
) -> SafetyReport:
    """Check that within the bound the consensus score stays between the
    honest extremes and the consensus label stays in the honest group."""
    rng = _rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    report = SafetyReport()
    for _ in range(trials):
        round_ = safety_round(rng, theta, min_n, max_n)
        outcome = trimmed_weighted_mean(round_.honest + round_.adversaries, theta)
        scores = [sub.score for sub in round_.honest]
        report.trials += 1
        if not min(scores) <= outcome.consensus_score <= max(scores):
            report.interval_violations += 1
            report.failures.append(round_)
        if outcome.consensus_class.group is not round_.group:
            report.group_violations += 1
            if not report.failures or report.failures[-1] is not round_:
                report.failures.append(round_)
    if not report.passed:
        logger.warning("Safety check: %d interval and %d group violations",
                       report.interval_violations, report.group_violations)
    return report
