"""Memorizing task generation: TP/SCO/SPO/DM/RG cloze samples with splits.

Gold labels are ordered nearest-first (so the first gold is the
finest-grained one), candidates are the full class or property vocabulary,
and each subtask reserves 10 train / 10 dev subjects when it has at least
21, otherwise a reduced split with a recorded warning.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ontocloze import ontology, prompting
from ontocloze.ontology import OntologyGraph

SUBTASKS = ("TP", "SCO", "SPO", "DM", "RG")
TRAIN_SIZE = 10
DEV_SIZE = 10


@dataclass(frozen=True)
class MemorizingSample:
    subtask: str
    subject_id: str
    subject_label: str
    golds: tuple[str, ...]
    candidates: tuple[str, ...]
    split: str  # train | dev | test
    subject_phrase: str | None = None  # DM/RG verbalization of the property

    @property
    def sample_id(self) -> str:
        return f"{self.subtask}:{self.subject_id}"


@dataclass
class MemorizingDataset:
    samples: dict[str, list[MemorizingSample]]
    warnings: list[str] = field(default_factory=list)
    candidate_policy: str = "full-vocabulary"
    transitive_types: bool = True


@dataclass(frozen=True)
class McQuestion:
    subtask: str
    subject_id: str
    subject_label: str
    choices: tuple[str, ...]
    answer_index: int
    subject_phrase: str | None = None

    @property
    def answer_letter(self) -> str:
        return prompting.CHOICE_LETTERS[self.answer_index]


def _split_sizes(n: int) -> tuple[int, int, bool]:
    """Train/dev sizes for n subjects; flag says the split was reduced."""
    if n >= TRAIN_SIZE + DEV_SIZE + 1:
        return TRAIN_SIZE, DEV_SIZE, False
    reduced = n // 3
    return reduced, reduced, True


def _assign_splits(n: int, subtask: str, seed: int) -> tuple[list[str], bool]:
    train_n, dev_n, reduced = _split_sizes(n)
    rng = random.Random(f"{seed}:{subtask}:split")
    order = list(range(n))
    rng.shuffle(order)
    splits = ["test"] * n
    for i in order[:train_n]:
        splits[i] = "train"
    for i in order[train_n:train_n + dev_n]:
        splits[i] = "dev"
    return splits, reduced


def _subjects_and_golds(graph: OntologyGraph, subtask: str,
                        transitive_types: bool) -> list[tuple[str, str, tuple[str, ...], str | None]]:
    """(subject_id, subject_label, gold labels, phrase) per subject, declaration order."""
    rows = []
    if subtask == "TP":
        for inst in graph.instances.values():
            if transitive_types:
                type_ids = ontology.type_ancestry(graph, inst.id)
            else:
                type_ids = list(inst.types)
            golds = tuple(graph.classes[c].label for c in type_ids)
            rows.append((inst.id, inst.label, golds, None))
    elif subtask == "SCO":
        for cls in graph.classes.values():
            golds = tuple(graph.classes[c].label for c in ontology.ancestors(graph, cls.id, "class"))
            rows.append((cls.id, cls.label, golds, None))
    elif subtask == "SPO":
        for prop in graph.properties.values():
            golds = tuple(
                graph.properties[p].label for p in ontology.ancestors(graph, prop.id, "property")
            )
            rows.append((prop.id, prop.label, golds, None))
    elif subtask == "DM":
        for prop in graph.properties.values():
            if prop.domain is None:
                continue
            range_label = graph.classes[prop.range].label if prop.range else None
            phrase = prompting.domain_phrase(prop.pattern, prop.label, range_label)
            rows.append((prop.id, prop.label, (graph.classes[prop.domain].label,), phrase))
    elif subtask == "RG":
        for prop in graph.properties.values():
            if prop.range is None:
                continue
            phrase = prompting.range_phrase(prop.pattern, prop.label)
            rows.append((prop.id, prop.label, (graph.classes[prop.range].label,), phrase))
    else:
        raise ValueError(f"unknown subtask {subtask!r}")
    return [row for row in rows if row[2]]


def generate_memorizing(graph: OntologyGraph, seed: int,
                        transitive_types: bool = True) -> MemorizingDataset:
    """Build all five memorizing subtasks with deterministic splits."""
    class_vocab = tuple(graph.class_labels())
    property_vocab = tuple(graph.property_labels())
    dataset = MemorizingDataset(samples={}, transitive_types=transitive_types)
    for subtask in SUBTASKS:
        rows = _subjects_and_golds(graph, subtask, transitive_types)
        splits, reduced = _assign_splits(len(rows), subtask, seed)
        if reduced:
            train_n, dev_n, _ = _split_sizes(len(rows))
            dataset.warnings.append(
                f"{subtask}: only {len(rows)} subjects; reduced split {train_n}/{dev_n}/"
                f"{len(rows) - train_n - dev_n}"
            )
        candidates = property_vocab if subtask == "SPO" else class_vocab
        dataset.samples[subtask] = [
            MemorizingSample(
                subtask=subtask, subject_id=subject_id, subject_label=label,
                golds=golds, candidates=candidates, split=split, subject_phrase=phrase,
            )
            for (subject_id, label, golds, phrase), split in zip(rows, splits)
        ]
    return dataset


def to_multiple_choice(sample: MemorizingSample, n_choices: int, seed: int) -> McQuestion:
    """Render a sample as a multiple-choice question over its finest-grained gold."""
    gold = sample.golds[0]
    pool = [c for c in sample.candidates if c not in sample.golds]
    if n_choices < 1:
        raise ValueError("n_choices must be >= 1")
    if n_choices > len(sample.candidates):
        raise ValueError(f"n_choices {n_choices} exceeds candidate count {len(sample.candidates)}")
    if len(pool) < n_choices - 1:
        raise ValueError(
            f"only {len(pool)} non-gold candidates for {sample.sample_id}, need {n_choices - 1}"
        )
    rng = random.Random(f"{seed}:{sample.sample_id}:mc")
    choices = [gold] + rng.sample(pool, n_choices - 1)
    rng.shuffle(choices)
    return McQuestion(
        subtask=sample.subtask, subject_id=sample.subject_id,
        subject_label=sample.subject_label, choices=tuple(choices),
        answer_index=choices.index(gold), subject_phrase=sample.subject_phrase,
    )


def sample_to_record(sample: MemorizingSample) -> dict:
    return {
        "subtask": sample.subtask,
        "subject_id": sample.subject_id,
        "subject_label": sample.subject_label,
        "subject_phrase": sample.subject_phrase,
        "golds": list(sample.golds),
        "candidates": list(sample.candidates),
        "split": sample.split,
    }


def record_to_sample(record) -> MemorizingSample:
    return MemorizingSample(
        subtask=record["subtask"], subject_id=record["subject_id"],
        subject_label=record["subject_label"], golds=tuple(record["golds"]),
        candidates=tuple(record["candidates"]), split=record["split"],
        subject_phrase=record.get("subject_phrase"),
    )


def question_to_record(question: McQuestion) -> dict:
    return {
        "subtask": question.subtask,
        "subject_id": question.subject_id,
        "subject_label": question.subject_label,
        "subject_phrase": question.subject_phrase,
        "choices": list(question.choices),
        "answer_index": question.answer_index,
    }


def record_to_question(record) -> McQuestion:
    return McQuestion(
        subtask=record["subtask"], subject_id=record["subject_id"],
        subject_label=record["subject_label"], choices=tuple(record["choices"]),
        answer_index=record["answer_index"], subject_phrase=record.get("subject_phrase"),
    )
