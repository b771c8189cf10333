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
`afdo.cli`
================================================================================

Command-line entry point: corpus generation and filtering, policy round-trip
checks, sweeps, ablation, sensitivity analyses, simnet runs, the desk-scale
pipeline, and the two-run reproducibility check.

Implementation Notes
--------------------

Every command writes into ``--out`` and finishes with ``manifest.json``
holding the seed, an echo of the configuration and the SHA-256 of each input
and output file. Exit codes: 0 success, 1 check failure, 2 usage or input
error. ``AFDO_SEED`` supplies the default seed.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from afdo import adversary, corpus, policy, simnet, trust
from afdo.consensus import Strategy
from afdo.core_model import AFDOError, canonical_json, read_records, write_records

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

MANIFEST = "manifest.json"
DEFAULT_SCALE = 0.1


class UsageError(AFDOError):
    """Bad arguments or unusable input; exit code 2."""


class CheckFailed(AFDOError):
    """A check ran and did not pass; exit code 1."""


def default_seed() -> int:
    """Seed from ``AFDO_SEED``, or 42."""
    value = os.environ.get("AFDO_SEED", "")
    try:
        return int(value) if value.strip() else 42
    except ValueError:
        raise UsageError("AFDO_SEED must be an integer: %r" % value) from None


@dataclass(frozen=True)
class RunConfig:
    """What a command was asked to do; identical configs give identical outputs."""

    command: str
    seed: int = 42
    scale: float = DEFAULT_SCALE
    out: Path = Path(".")
    fmt: str = "csv"
    options: tuple = ()

    def __post_init__(self):
        if self.fmt not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        if not self.scale > 0:
            raise UsageError("scale must be positive")

    def echo(self) -> dict:
        """Configuration as written to the manifest; the output path is left out."""
        data = {"command": self.command, "seed": self.seed, "scale": self.scale, "format": self.fmt}
        for key, value in self.options:
            data[key] = value
        return {key: data[key] for key in sorted(data)}


@dataclass
class Outputs:
    """Files written by a command, relative to the output directory."""

    root: Path
    written: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)

    def path(self, name: str) -> Path:
        """Absolute path of ``name``, creating parent directories."""
        target = self.root / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def write_text(self, name: str, text: str) -> Path:
        """Write ``text`` with ``\\n`` line endings."""
        target = self.path(name)
        with open(target, "w", encoding="utf-8", newline="\n") as stream:
            stream.write(text)
        self.written.append(name)
        return target

    def add_input(self, path: Path) -> None:
        """Record the digest of an input file."""
        self.inputs[str(path)] = sha256_file(path)


def sha256_file(path: Path) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as stream:
        for block in iter(lambda: stream.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def write_manifest(config: RunConfig, outputs: Outputs, unseeded: bool = False) -> Path:
    """Write ``manifest.json`` covering every file written so far."""
    if unseeded:
        noise = np.random.default_rng().integers(0, 2**32, size=4)
        outputs.write_text("unseeded.txt", "".join("%08x" % int(value) for value in noise) + "\n")
    digests = {name: sha256_file(outputs.root / name) for name in sorted(set(outputs.written))}
    manifest = {
        "seed": config.seed,
        "config": config.echo(),
        "inputs": {key: outputs.inputs[key] for key in sorted(outputs.inputs)},
        "outputs": digests,
    }
    target = outputs.path(MANIFEST)
    with open(target, "w", encoding="utf-8", newline="\n") as stream:
        stream.write(json.dumps(manifest, indent=2, sort_keys=True))
        stream.write("\n")
    return target


def _floats(text: str) -> list:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers: %r" % text) from None


def _bounded_floats(low: float, high: float, open_interval: bool = False):
    def parse(text: str) -> list:
        values = _floats(text)
        inside = (lambda v: low < v < high) if open_interval else (lambda v: low <= v <= high)
        if not values or not all(inside(value) for value in values):
            bounds = ("(%r, %r)" if open_interval else "[%r, %r]") % (low, high)
            raise argparse.ArgumentTypeError("values must lie in %s: %r" % (bounds, text))
        return values

    return parse


_thetas = _bounded_floats(0.0, 0.5, open_interval=True)
_unit_floats = _bounded_floats(0.0, 1.0)


def _theta(text: str) -> float:
    return _thetas(text)[0]


def _sweep_fractions(text: str) -> list:
    values = _bounded_floats(0.0, 0.5)(text)
    allowed = {round(value, 3) for value in adversary.SWEEP_FRACTIONS}
    if any(round(value, 3) not in allowed for value in values):
        raise argparse.ArgumentTypeError(
            "fractions must come from %s: %r" % (", ".join("%g" % v for v in adversary.SWEEP_FRACTIONS), text)
        )
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer: %r" % text) from None
    if value < 1:
        raise argparse.ArgumentTypeError("expected a positive integer: %r" % text)
    return value


def _count(text: str) -> int:
    return 0 if text.strip() == "0" else _positive_int(text)


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number: %r" % text) from None
    if not value > 0:
        raise argparse.ArgumentTypeError("expected a positive number: %r" % text)
    return value


def _names(text: str) -> list:
    return [item.strip() for item in text.split(",") if item.strip()]


def _members(enum):
    def parse(text: str) -> list:
        try:
            return [enum(name).value for name in _names(text)]
        except ValueError:
            known = ", ".join(member.value for member in enum)
            raise argparse.ArgumentTypeError("expected names from %s: %r" % (known, text)) from None

    return parse


def _csv_text(writer) -> str:
    buffer = io.StringIO()
    writer(buffer)
    return buffer.getvalue()


def _load_corpus(path: str, outputs: Outputs) -> list:
    source = Path(path)
    if not source.is_file():
        raise UsageError("Corpus file not found: %s" % path)
    outputs.add_input(source)
    try:
        with open(source, encoding="utf-8") as stream:
            records = read_records(stream)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError("Corpus file is malformed: %s (%s)" % (path, exc)) from None
    if not records:
        raise UsageError("Corpus file is empty: %s" % path)
    return records


def _corpus_text(records) -> str:
    buffer = io.StringIO()
    write_records(records, buffer)
    return buffer.getvalue()


def _write_result(outputs: Outputs, config: RunConfig, stem: str, result: adversary.SweepResult) -> None:
    if config.fmt == "json":
        outputs.write_text(stem + ".json", result.to_json() + "\n")
    else:
        outputs.write_text(stem + ".csv", _csv_text(result.write_csv))


# Commands


def cmd_generate(args, config: RunConfig, outputs: Outputs) -> int:
    """Synthetic corpus plus its statistics."""
    spec = corpus.CorpusSpec.default(
        scale=config.scale,
        seed=config.seed,
        mean_submissions=args.mean_submissions,
        max_submissions=args.max_submissions,
    )
    records = corpus.generate_corpus(spec)
    outputs.write_text("corpus.jsonl", _corpus_text(records))
    stats = corpus.corpus_statistics(records)
    outputs.write_text("stats.json", canonical_json(stats.to_dict()) + "\n")
    print("generated %d records (mean %.2f submissions)" % (stats.records, stats.mean_submissions))
    return EXIT_OK


def cmd_filter(args, config: RunConfig, outputs: Outputs) -> int:
    """Raw tab-delimited rows through the conflict filters."""
    source = Path(args.raw)
    if not source.is_file():
        raise UsageError("Raw file not found: %s" % args.raw)
    outputs.add_input(source)
    try:
        with open(source, encoding="utf-8", newline="") as stream:
            rows = corpus.read_raw_rows(stream)
        records, counts = corpus.filter_pipeline(rows, salt=args.salt)
    except ValueError as exc:
        raise UsageError("Raw file is malformed: %s (%s)" % (args.raw, exc)) from None
    outputs.write_text("corpus.jsonl", _corpus_text(records))
    stages = "".join("%s,%d\n" % (name, count) for name, count in zip(corpus.FILTER_STAGES, counts))
    outputs.write_text("stages.csv", "stage,variants\n" + stages)
    print(" -> ".join(str(count) for count in counts))
    return EXIT_OK


def cmd_policy_check(args, config: RunConfig, outputs: Outputs) -> int:
    """Round-trip every policy of a Turtle file."""
    source = Path(args.policy)
    if not source.is_file():
        raise UsageError("Policy file not found: %s" % args.policy)
    outputs.add_input(source)
    document = policy.parse_policy_document(source.read_text(encoding="utf-8"))
    if not document.policies:
        raise UsageError("No policies in %s" % args.policy)
    reports = [policy.round_trip_check(p, args.inputs, config.seed, args.strict_fields) for p in document.policies]
    for report in reports:
        outputs.write_text("policies/%s.ttl" % report.policy_name, report.text)
    summary = [
        {
            "policy": report.policy_name,
            "deterministic": report.deterministic,
            "equivalent": report.equivalent,
            "stable": report.stable,
            "inputs": report.inputs,
        }
        for report in reports
    ]
    outputs.write_text("policy-check.json", canonical_json(summary) + "\n")
    failed = [report.policy_name for report in reports if not report.passed]
    for report in reports:
        print("%s: %s" % (report.policy_name, "ok" if report.passed else "FAILED"))
    if failed:
        raise CheckFailed("Round trip failed for: %s" % ", ".join(failed))
    return EXIT_OK


def cmd_sweep(args, config: RunConfig, outputs: Outputs) -> int:
    """Adversarial sweep."""
    records = _load_corpus(args.corpus, outputs)
    result = adversary.run_sweep(
        records,
        strategies=[Strategy(name) for name in args.strategies],
        attacks=[adversary.AttackModel(name) for name in args.attacks],
        fractions=args.fractions,
        trials=args.trials,
        theta_grid=args.theta_grid,
        seed=config.seed,
        resamples=args.resamples,
        by_bucket=args.by_bucket,
        workers=args.workers,
    )
    _write_result(outputs, config, "sweep", result)
    print("%d cells" % len(result.cells))
    return EXIT_OK


def cmd_ablation(args, config: RunConfig, outputs: Outputs) -> int:
    """Unattacked strategy comparison."""
    records = _load_corpus(args.corpus, outputs)
    result = adversary.run_ablation(records, seed=config.seed, theta=args.theta, resamples=args.resamples)
    _write_result(outputs, config, "ablation", result)
    for cell in result.cells:
        if cell.bucket == adversary.ALL_BUCKETS:
            print("%s: %.4f [%.4f, %.4f]" % (cell.strategy, cell.accuracy, cell.ci_low, cell.ci_high))
    return EXIT_OK


def cmd_sensitivity(args, config: RunConfig, outputs: Outputs) -> int:
    """Trimming-fraction or trust-parameter sensitivity."""
    if args.target == "theta":
        if not args.corpus:
            raise UsageError("sensitivity theta needs a corpus file")
        records = _load_corpus(args.corpus, outputs)
        result = adversary.run_theta_sensitivity(
            records, thetas=args.theta_grid, seed=config.seed, resamples=args.resamples, by_bucket=args.by_bucket
        )
        _write_result(outputs, config, "theta", result)
        print("spread %.4f over %d fractions" % (adversary.theta_spread(result), len(args.theta_grid)))
        return EXIT_OK
    rows = trust.sensitivity_sweep(
        alphas=args.alphas,
        betas=args.betas,
        gammas=args.gammas,
        replicates=args.replicates,
        seed=config.seed,
        cap=args.cap,
        horizon=args.horizon,
    )
    outputs.write_text("trust.csv", _csv_text(lambda stream: trust.write_sensitivity_csv(rows, stream)))
    summary = trust.perturbation_summary(replicates=args.replicates, seed=config.seed, cap=args.cap, horizon=args.horizon)
    lines = ["parameter,low,high,recovery_change_pct,ks_distance\n"]
    for row in summary:
        lines.append(
            "%s,%r,%r,%r,%r\n" % (row.parameter, row.low, row.high, row.recovery_change_pct, row.ks_distance)
        )
    outputs.write_text("trust-perturbation.csv", "".join(lines))
    print("%d trust cells" % len(rows))
    return EXIT_OK


def cmd_simnet(args, config: RunConfig, outputs: Outputs) -> int:
    """Run the creation workload in every mode and compare the snapshots."""
    records = _load_corpus(args.corpus, outputs)[: args.records]
    latency = simnet.LatencyModel(seed=config.seed)
    rows, results, reports = simnet.timing_report(records, latency=latency, seed=config.seed)
    outputs.write_text("timing.csv", _csv_text(lambda stream: simnet.write_timing_csv(rows, stream)))
    for mode, result in results.items():
        lines = "".join(snapshot.to_bytes().decode("utf-8") + "\n" for snapshot in result.snapshots)
        outputs.write_text("snapshots/%s.jsonl" % mode.value, lines)
    central = results[simnet.ExecutionMode.CENTRALISED]
    evolved = simnet.evolve_snapshots(central.snapshots, records)
    outputs.write_text("snapshots/evolved.jsonl", "".join(s.to_bytes().decode("utf-8") + "\n" for s in evolved))
    equivalence = {mode.value: report.to_dict() for mode, report in reports.items()}
    outputs.write_text("equivalence.json", canonical_json(equivalence) + "\n")
    equal = all(report.equal for report in reports.values())
    print("%d records: %s" % (len(records), "equivalent" if equal else "NOT equivalent"))
    if not equal:
        raise CheckFailed("Snapshots differ between modes")
    return EXIT_OK


def cmd_pipeline(args, config: RunConfig, outputs: Outputs) -> int:
    """Generate a corpus and run every analysis on it, one sub-directory each."""
    spec = corpus.CorpusSpec.default(scale=config.scale, seed=config.seed)
    records = corpus.generate_corpus(spec)
    outputs.write_text("generate/corpus.jsonl", _corpus_text(records))
    stats = corpus.corpus_statistics(records)
    outputs.write_text("generate/stats.json", canonical_json(stats.to_dict()) + "\n")

    sweep = adversary.run_sweep(
        records, trials=args.trials, seed=config.seed, resamples=args.resamples, theta_grid=(0.20,)
    )
    outputs.write_text("sweep/sweep.csv", _csv_text(sweep.write_csv))
    ablation = adversary.run_ablation(records, seed=config.seed, resamples=args.resamples)
    outputs.write_text("ablation/ablation.csv", _csv_text(ablation.write_csv))
    theta = adversary.run_theta_sensitivity(
        records, thetas=adversary.THETA_GRID, seed=config.seed, resamples=args.resamples
    )
    outputs.write_text("sensitivity/theta.csv", _csv_text(theta.write_csv))
    rows = trust.sensitivity_sweep(replicates=args.replicates, seed=config.seed)
    outputs.write_text(
        "sensitivity/trust.csv", _csv_text(lambda stream: trust.write_sensitivity_csv(rows, stream))
    )
    timing, results, reports = simnet.timing_report(
        records[: args.records], latency=simnet.LatencyModel(seed=config.seed), seed=config.seed
    )
    outputs.write_text("simnet/timing.csv", _csv_text(lambda stream: simnet.write_timing_csv(timing, stream)))
    equivalence = {mode.value: report.to_dict() for mode, report in reports.items()}
    outputs.write_text("simnet/equivalence.json", canonical_json(equivalence) + "\n")
    safety = adversary.check_safety_bound(trials=args.safety_trials, seed=config.seed)
    outputs.write_text(
        "safety.json",
        canonical_json(
            {
                "trials": safety.trials,
                "interval_violations": safety.interval_violations,
                "group_violations": safety.group_violations,
            }
        )
        + "\n",
    )
    print("pipeline: %d records, %d sweep cells" % (len(records), len(sweep.cells)))
    if not safety.passed or not all(report.equal for report in reports.values()):
        raise CheckFailed("Pipeline checks failed")
    return EXIT_OK


# Reproducibility


def _mask_value(data, mask):
    if isinstance(data, dict):
        return {key: (None if key in mask else _mask_value(value, mask)) for key, value in data.items()}
    if isinstance(data, list):
        return [_mask_value(item, mask) for item in data]
    return data


def masked_bytes(path: Path, mask: Sequence[str]) -> bytes:
    """File bytes with ``mask`` fields blanked in JSON, JSON-lines and CSV files."""
    raw = path.read_bytes()
    if not mask:
        return raw
    mask = set(mask)
    text = raw.decode("utf-8")
    if path.suffix == ".jsonl":
        lines = [canonical_json(_mask_value(json.loads(line), mask)) for line in text.splitlines() if line]
        return ("\n".join(lines) + "\n").encode("utf-8")
    if path.suffix == ".json":
        return canonical_json(_mask_value(json.loads(text), mask)).encode("utf-8")
    if path.suffix == ".csv":
        rows = text.splitlines()
        if not rows:
            return raw
        header = rows[0].split(",")
        hidden = {i for i, name in enumerate(header) if name in mask}
        out = [rows[0]]
        for row in rows[1:]:
            cells = row.split(",")
            out.append(",".join("" if i in hidden else cell for i, cell in enumerate(cells)))
        return ("\n".join(out) + "\n").encode("utf-8")
    return raw


@dataclass(frozen=True)
class Divergence:
    """Where two runs first differ."""

    path: str
    offset: Optional[int]
    reason: str


def compare_trees(first: Path, second: Path, mask: Sequence[str] = ()) -> Optional[Divergence]:
    """First divergence between two output directories, in sorted path order."""
    left = sorted(str(p.relative_to(first)) for p in first.rglob("*") if p.is_file())
    right = sorted(str(p.relative_to(second)) for p in second.rglob("*") if p.is_file())
    for name in sorted(set(left) | set(right)):
        if name not in left or name not in right:
            return Divergence(name, None, "missing in one run")
        a = masked_bytes(first / name, mask)
        b = masked_bytes(second / name, mask)
        offset = simnet.first_difference(a, b)
        if offset is not None:
            return Divergence(name, offset, "content differs")
    return None


def cmd_reproduce(args, config: RunConfig, outputs: Outputs) -> int:
    """Run a command twice and compare every output byte for byte."""
    command = list(args.argv)
    if command and command[0] == "--":
        command = command[1:]
    if not command:
        raise UsageError("reproduce needs a command to run")
    if "--out" in command or command[0] == "reproduce":
        raise UsageError("the reproduced command must not set --out or nest reproduce")
    prefix = ["--seed", str(config.seed), "--scale", repr(config.scale), "--format", config.fmt]
    if args.inject_unseeded:
        prefix.append("--inject-unseeded")
    with tempfile.TemporaryDirectory(prefix="afdo-a-") as first, tempfile.TemporaryDirectory(prefix="afdo-b-") as second:
        for target in (first, second):
            code = main(prefix + ["--out", target] + command)
            if code != EXIT_OK:
                raise CheckFailed("Reproduced command exited with %d" % code)
        divergence = compare_trees(Path(first), Path(second), args.mask)
    report = {
        "command": command,
        "passed": divergence is None,
        "divergence": None if divergence is None else {
            "path": divergence.path,
            "offset": divergence.offset,
            "reason": divergence.reason,
        },
    }
    outputs.write_text("reproduce.json", canonical_json(report) + "\n")
    if divergence is not None:
        print("FAIL %s at offset %s (%s)" % (divergence.path, divergence.offset, divergence.reason))
        raise CheckFailed("Runs diverge at %s" % divergence.path)
    print("PASS")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "filter": cmd_filter,
    "policy-check": cmd_policy_check,
    "sweep": cmd_sweep,
    "ablation": cmd_ablation,
    "sensitivity": cmd_sensitivity,
    "simnet": cmd_simnet,
    "pipeline": cmd_pipeline,
    "reproduce": cmd_reproduce,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for every command."""
    parser = _Parser(prog="afdo", description=__doc__.split("\n\n")[1].strip() if __doc__ else None)
    parser.add_argument("--seed", type=int, default=None, help="random seed (default: $AFDO_SEED or 42)")
    parser.add_argument("--scale", type=_positive_float, default=DEFAULT_SCALE, help="corpus scale (default: 0.1)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--inject-unseeded", action="store_true", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    generate = sub.add_parser("generate", help="generate a synthetic conflict corpus")
    generate.add_argument("--mean-submissions", type=_positive_float, default=8.5)
    generate.add_argument("--max-submissions", type=_positive_int, default=None)

    filt = sub.add_parser("filter", help="filter a raw tab-delimited dump into a corpus")
    filt.add_argument("raw")
    filt.add_argument("--salt", default=corpus.PROJECT_SALT)

    check = sub.add_parser("policy-check", help="round-trip the policies of a Turtle file")
    check.add_argument("policy")
    check.add_argument("--inputs", type=_positive_int, default=45)
    check.add_argument("--strict-fields", action="store_true", help="treat missing fields as evaluation errors")

    sweep = sub.add_parser("sweep", help="adversarial sweep")
    sweep.add_argument("corpus")
    sweep.add_argument("--fractions", type=_sweep_fractions, default=list(adversary.SWEEP_FRACTIONS))
    sweep.add_argument("--attacks", type=_members(adversary.AttackModel), default=[model.value for model in adversary.AttackModel])
    sweep.add_argument("--strategies", type=_members(Strategy), default=[strategy.value for strategy in Strategy])
    sweep.add_argument("--theta-grid", type=_thetas, default=[0.20])
    sweep.add_argument("--trials", type=_positive_int, default=10)
    sweep.add_argument("--resamples", type=_positive_int, default=adversary.BOOTSTRAP_RESAMPLES)
    sweep.add_argument("--by-bucket", action="store_true")
    sweep.add_argument("--workers", type=_count, default=0)

    ablation = sub.add_parser("ablation", help="strategy ablation")
    ablation.add_argument("corpus")
    ablation.add_argument("--theta", type=_theta, default=0.20)
    ablation.add_argument("--resamples", type=_positive_int, default=adversary.BOOTSTRAP_RESAMPLES)

    sensitivity = sub.add_parser("sensitivity", help="theta or trust-parameter sensitivity")
    sensitivity.add_argument("target", choices=("theta", "trust"))
    sensitivity.add_argument("corpus", nargs="?")
    sensitivity.add_argument("--theta-grid", type=_thetas, default=list(adversary.THETA_GRID))
    sensitivity.add_argument("--by-bucket", action="store_true", help="add one cell per bucket")
    sensitivity.add_argument("--alphas", type=_unit_floats, default=list(trust.SENSITIVITY_ALPHAS))
    sensitivity.add_argument("--betas", type=_unit_floats, default=list(trust.SENSITIVITY_BETAS))
    sensitivity.add_argument("--gammas", type=_unit_floats, default=list(trust.SENSITIVITY_GAMMAS))
    sensitivity.add_argument("--resamples", type=_positive_int, default=adversary.BOOTSTRAP_RESAMPLES)
    sensitivity.add_argument("--replicates", type=_positive_int, default=30)
    sensitivity.add_argument("--cap", type=_positive_int, default=trust.RECOVERY_CAP)
    sensitivity.add_argument("--horizon", type=_positive_int, default=100)

    sim = sub.add_parser("simnet", help="run the creation workload in every mode")
    sim.add_argument("corpus")
    sim.add_argument("--records", type=_positive_int, default=100)

    pipeline = sub.add_parser("pipeline", help="generate a corpus and run every analysis")
    pipeline.add_argument("--trials", type=_positive_int, default=10)
    pipeline.add_argument("--resamples", type=_positive_int, default=adversary.BOOTSTRAP_RESAMPLES)
    pipeline.add_argument("--replicates", type=_positive_int, default=30)
    pipeline.add_argument("--records", type=_positive_int, default=100)
    pipeline.add_argument("--safety-trials", type=_positive_int, default=10000)

    reproduce = sub.add_parser("reproduce", help="run a command twice and compare outputs")
    reproduce.add_argument("--mask", action="append", default=[], help="field or column to blank before comparing")
    reproduce.add_argument("argv", metavar="command", nargs=argparse.REMAINDER)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    root = logging.getLogger("afdo")
    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.NullHandler) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)
    root.setLevel(level)


def main(argv: Sequence[str] = None) -> int:
    """Run one command; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.verbose)
        if not args.command:
            raise UsageError("a command is required")
        seed = args.seed if args.seed is not None else default_seed()
        options = tuple(
            (key, value)
            for key, value in sorted(vars(args).items())
            if key not in ("seed", "scale", "out", "fmt", "verbose", "command", "inject_unseeded")
        )
        config = RunConfig(args.command, seed, args.scale, Path(args.out), args.fmt, options)
        outputs = Outputs(config.out)
        config.out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args, config, outputs)
        write_manifest(config, outputs, unseeded=args.inject_unseeded)
        return code
    except CheckFailed as exc:
        print("afdo: %s" % exc, file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (AFDOError, OSError) as exc:
        print("afdo: %s" % exc, file=sys.stderr)
        return EXIT_USAGE
