"""Ranking metrics, frequency baseline, premise classification, reports.

R@K is the fraction of samples with any gold in the top K; MRR uses the
best gold rank; MRR_a replaces it with the mean rank over all golds of the
sample, so MRR_a <= MRR always.  Premises are declared memorized when they
land in the top half of their set sorted by reciprocal rank.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from ontocloze.memorize import MemorizingSample
from ontocloze.prompting import CHOICE_LETTERS
from ontocloze.reasoning import PREMISE_MODES, ReasoningInstance

DEFAULT_KS = (1, 5)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class MetricReport:
    n: int
    recall: dict[int, float]
    mrr: float
    mrr_a: float
    accuracy: float | None = None

    def as_dict(self) -> dict[str, float]:
        out = {f"R@{k}": v for k, v in self.recall.items()}
        out["MRR"] = self.mrr
        out["MRR_a"] = self.mrr_a
        out["n"] = self.n
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        return out


def compute_metrics(results: Iterable[Mapping], ks: Sequence[int] = DEFAULT_KS) -> MetricReport:
    """Aggregate ranked results; each needs a non-empty ``gold_ranks`` map."""
    recall_hits = {k: 0 for k in ks}
    mrr_sum = 0.0
    mrr_a_sum = 0.0
    n = 0
    for record in results:
        if "error" in record:
            raise EvaluationError(f"result {record.get('input_id')} carries an error: "
                                  f"{record['error']}")
        ranks = list(record["gold_ranks"].values())
        if not ranks:
            raise EvaluationError(f"result {record.get('input_id')} has no gold ranks")
        best = min(ranks)
        for k in ks:
            recall_hits[k] += 1 if best <= k else 0
        mrr_sum += 1.0 / best
        mrr_a_sum += 1.0 / (sum(ranks) / len(ranks))
        n += 1
    if n == 0:
        raise EvaluationError("empty result set")
    return MetricReport(
        n=n,
        recall={k: recall_hits[k] / n for k in ks},
        mrr=mrr_sum / n,
        mrr_a=mrr_a_sum / n,
    )


def frequency_baseline(train: Sequence[MemorizingSample], test: Sequence[MemorizingSample],
                       seed: int) -> list[dict]:
    """Rank train-set golds by frequency, then the remaining candidates shuffled once.

    The prediction carries no per-sample signal, so the output is invariant
    to test-set order by construction.
    """
    if not train:
        raise EvaluationError("frequency baseline needs a non-empty training split")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    for sample in train:
        for gold in sample.golds:
            counts[gold] += 1
            first_seen.setdefault(gold, len(first_seen))
    head = sorted(counts, key=lambda g: (-counts[g], first_seen[g]))

    vocabulary: dict[str, None] = {}
    for sample in test:
        for candidate in sample.candidates:
            vocabulary.setdefault(candidate)
    tail = [c for c in vocabulary if c not in counts]
    random.Random(f"{seed}:frequency-baseline").shuffle(tail)
    global_order = head + tail

    records = []
    for sample in test:
        allowed = set(sample.candidates)
        prediction = [c for c in global_order if c in allowed]
        position = {c: i + 1 for i, c in enumerate(prediction)}
        gold_ranks = {}
        for gold in sample.golds:
            if gold not in position:
                raise EvaluationError(f"gold {gold!r} missing from candidates of "
                                      f"{sample.sample_id}")
            gold_ranks[gold] = position[gold]
        records.append({
            "input_id": sample.sample_id,
            "golds": list(sample.golds),
            "gold_ranks": gold_ranks,
            "prediction": prediction,
        })
    return records


@dataclass(frozen=True)
class PremiseVerdict:
    premise_id: str
    reciprocal_rank: float
    memorized: bool


def classify_premises(ranks: Mapping[str, float] | Sequence[tuple[str, float]]
                      ) -> list[PremiseVerdict]:
    """Sort premises by reciprocal rank and mark the top half as memorized."""
    entries = list(ranks.items()) if isinstance(ranks, Mapping) else list(ranks)
    for premise_id, rr in entries:
        if rr is None:
            raise EvaluationError(f"premise {premise_id!r} is missing a reciprocal rank")
    entries.sort(key=lambda item: (-item[1], item[0]))
    cut = len(entries) // 2
    return [
        PremiseVerdict(premise_id=pid, reciprocal_rank=rr, memorized=i < cut)
        for i, (pid, rr) in enumerate(entries)
    ]


def reciprocal_rank(record: Mapping, gold: str) -> float:
    ranks = record.get("gold_ranks", {})
    if gold not in ranks:
        raise EvaluationError(f"result {record.get('input_id')} has no rank for gold {gold!r}")
    return 1.0 / ranks[gold]


def _mode_admits(mode: str, memorized: bool) -> bool:
    if mode == "EX":
        return True
    if mode == "IM":
        return memorized
    if mode == "NO":
        return not memorized
    raise EvaluationError(f"unknown premise mode {mode!r}")


@dataclass
class ReasoningReport:
    # rule -> (p1_mode, p2_mode) -> averaged metric dict (None where no pair had data)
    cells: dict[str, dict[tuple[str, str], dict[str, float] | None]]
    macro: dict[tuple[str, str], dict[str, float] | None]
    warnings: list[str] = field(default_factory=list)


def _average_metric_dicts(dicts: Sequence[dict[str, float]]) -> dict[str, float]:
    keys = [k for k in dicts[0] if k != "n"]
    out = {k: sum(d[k] for d in dicts) / len(dicts) for k in keys}
    out["n"] = sum(d["n"] for d in dicts) / len(dicts)
    out["pairs"] = len(dicts)
    return out


def reasoning_report(instances: Sequence[ReasoningInstance],
                     reasoning_results: Mapping[str, Mapping],
                     p2_results: Mapping[str, Mapping],
                     memorizing_results: Mapping[str, Mapping],
                     pair_count: int,
                     ks: Sequence[int] = DEFAULT_KS) -> ReasoningReport:
    """Assemble the per-rule 3x3 grid, averaged over pseudoword pairs.

    A cell (m1, m2) holds instances whose premises match the cell's modes
    and whose memorization verdicts admit them: IM premises must be
    memorized, NO premises must not be, EX premises always qualify.
    """
    report = ReasoningReport(cells={}, macro={})
    by_rule: dict[str, list[ReasoningInstance]] = {}
    for instance in instances:
        by_rule.setdefault(instance.rule, []).append(instance)

    for rule, rule_instances in by_rule.items():
        p1_ranks: dict[str, float] = {}
        for instance in rule_instances:
            pid = instance.p1.premise_id
            if pid in p1_ranks:
                continue
            subtask, subject_id, gold = instance.p1.memorize_key
            record = memorizing_results.get(f"{subtask}:{subject_id}")
            if record is None:
                raise EvaluationError(
                    f"no memorizing result for premise {pid} ({subtask}:{subject_id})")
            p1_ranks[pid] = reciprocal_rank(record, gold)
        p1_verdicts = {v.premise_id: v.memorized for v in classify_premises(p1_ranks)}

        per_pair_cells: dict[tuple[str, str], list[dict[str, float]]] = {
            (m1, m2): [] for m1 in PREMISE_MODES for m2 in PREMISE_MODES
        }
        for pair in range(pair_count):
            p2_ranks: dict[str, float] = {}
            missing = False
            for instance in rule_instances:
                pid = instance.p2.premise_id
                if pid in p2_ranks:
                    continue
                record = p2_results.get(f"p2:{rule}:{pid}#p{pair}")
                if record is None:
                    report.warnings.append(
                        f"{rule}: missing P2 probe for {pid} pair {pair}")
                    missing = True
                    break
                p2_ranks[pid] = reciprocal_rank(record, instance.p2.probe.golds[0])
            if missing:
                continue
            p2_verdicts = {v.premise_id: v.memorized for v in classify_premises(p2_ranks)}

            selected: dict[tuple[str, str], list[Mapping]] = {
                cell: [] for cell in per_pair_cells
            }
            for instance in rule_instances:
                cell = (instance.p1.mode, instance.p2.mode)
                if cell not in selected:
                    continue
                if not _mode_admits(instance.p1.mode, p1_verdicts[instance.p1.premise_id]):
                    continue
                if not _mode_admits(instance.p2.mode, p2_verdicts[instance.p2.premise_id]):
                    continue
                record = reasoning_results.get(f"{instance.instance_id}#p{pair}")
                if record is None or "error" in record:
                    report.warnings.append(
                        f"{rule}: missing or failed result for {instance.instance_id} "
                        f"pair {pair}")
                    continue
                selected[cell].append(record)
            for cell, records in selected.items():
                if records:
                    per_pair_cells[cell].append(compute_metrics(records, ks).as_dict())

        report.cells[rule] = {
            cell: (_average_metric_dicts(reports) if reports else None)
            for cell, reports in per_pair_cells.items()
        }

    for m1 in PREMISE_MODES:
        for m2 in PREMISE_MODES:
            cell = (m1, m2)
            rule_values = [report.cells[rule][cell] for rule in report.cells
                           if report.cells[rule][cell] is not None]
            report.macro[cell] = (_average_metric_dicts(rule_values)
                                  if rule_values else None)
    return report


def grade_answer(completion: str, n_choices: int) -> str | None:
    """Extract the chosen letter from a completion; None when unparseable."""
    valid = CHOICE_LETTERS[:n_choices]
    match = re.search(r"\(([a-z])\)", completion, re.IGNORECASE)
    if match and match.group(1).lower() in valid:
        return match.group(1).lower()
    match = re.search(r"\b([a-z])\b", completion, re.IGNORECASE)
    if match and match.group(1).lower() in valid:
        return match.group(1).lower()
    return None


def multiple_choice_accuracy(questions: Sequence, completions: Sequence[str]
                             ) -> tuple[float, int]:
    """Exact-match accuracy of chosen letters; unparseable answers count wrong."""
    if len(questions) != len(completions):
        raise EvaluationError("questions and completions differ in length")
    if not questions:
        raise EvaluationError("empty question set")
    correct = 0
    unparsed = 0
    for question, completion in zip(questions, completions):
        letter = grade_answer(completion, len(question.choices))
        if letter is None:
            unparsed += 1
        elif letter == question.answer_letter:
            correct += 1
    return correct / len(questions), unparsed
