"""Offline ingestion: sample instances per class, align property dumps,
cleanse domain/range constraints against the class vocabulary.

Property dumps are triple TSVs like the graph format but with repeatable
``domain``/``range`` lines (constraint candidates) and an ``equivalent``
predicate linking ids across vocabularies.  Records connected by
equivalence edges merge into one property, candidates are dropped unless
they name a known class, and the deepest surviving candidate becomes the
constraint (ties fall back to declaration order).  A patch file of
``property<TAB>domain|range<TAB>class`` lines applies curated overrides
after cleansing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ontocloze.ontology import OntologyError, ParseError, PropertyNode, parse_triple_lines


class IngestError(OntologyError):
    pass


@dataclass
class RawPropertyRecord:
    source_id: str
    label: str | None = None
    superproperties: list[str] = field(default_factory=list)
    domain_candidates: list[str] = field(default_factory=list)
    range_candidates: list[str] = field(default_factory=list)
    equivalents: list[str] = field(default_factory=list)
    pattern: str | None = None

    def __post_init__(self):
        if not self.source_id:
            raise IngestError("property record needs a non-empty source id")


@dataclass
class IngestReport:
    classes: int = 0
    properties_total: int = 0
    properties_kept: int = 0
    properties_dropped: int = 0
    constraints_cleansed: int = 0
    instances_sampled: int = 0
    drop_reasons: dict[str, str] = field(default_factory=dict)
    flags: dict[str, list[str]] = field(default_factory=dict)

    def check(self) -> None:
        assert self.properties_kept + self.properties_dropped == self.properties_total

    def rows(self) -> list[tuple[str, str, str]]:
        out = [
            ("count", "classes", str(self.classes)),
            ("count", "properties_total", str(self.properties_total)),
            ("count", "properties_kept", str(self.properties_kept)),
            ("count", "properties_dropped", str(self.properties_dropped)),
            ("count", "constraints_cleansed", str(self.constraints_cleansed)),
            ("count", "instances_sampled", str(self.instances_sampled)),
        ]
        for prop_id, reason in sorted(self.drop_reasons.items()):
            out.append(("dropped", prop_id, reason))
        for prop_id, flags in sorted(self.flags.items()):
            out.append(("flagged", prop_id, ";".join(flags)))
        return out


def sample_instances(class_members: Mapping[str, Sequence[str]], k: int,
                     seed: int) -> dict[str, list[str]]:
    """Uniform sample of up to k members per class, without replacement."""
    if k < 1:
        raise IngestError("k must be >= 1")
    sampled = {}
    for class_id, members in class_members.items():
        members = list(members)
        if len(members) <= k:
            sampled[class_id] = members
        else:
            rng = random.Random(f"{seed}:{class_id}:members")
            sampled[class_id] = rng.sample(members, k)
    return sampled


def parse_property_dump(lines: Iterable[str]) -> list[RawPropertyRecord]:
    """Parse one dump file; repeatable domain/range lines become candidates."""
    records: dict[str, RawPropertyRecord] = {}

    def record_for(source_id: str) -> RawPropertyRecord:
        if source_id not in records:
            records[source_id] = RawPropertyRecord(source_id=source_id)
        return records[source_id]

    for subject, predicate, obj, line_no in parse_triple_lines(lines):
        record = record_for(subject)
        if predicate == "label":
            record.label = obj
        elif predicate == "subproperty_of":
            if obj not in record.superproperties:
                record.superproperties.append(obj)
        elif predicate == "domain":
            record.domain_candidates.append(obj)
        elif predicate == "range":
            record.range_candidates.append(obj)
        elif predicate == "equivalent":
            if obj not in record.equivalents:
                record.equivalents.append(obj)
        elif predicate == "pattern":
            record.pattern = obj
        else:
            raise ParseError(f"unknown dump predicate {predicate!r}", line_no)
    return list(records.values())


def load_property_dumps(paths: Sequence[str | Path]) -> list[RawPropertyRecord]:
    records: list[RawPropertyRecord] = []
    for path in paths:
        with open(path, encoding="utf-8") as handle:
            records.extend(parse_property_dump(handle))
    return records


def _merge_groups(records: Sequence[RawPropertyRecord]) -> list[list[RawPropertyRecord]]:
    """Group records connected by equivalence edges; first-seen order."""
    index = {record.source_id: i for i, record in enumerate(records)}
    parent = list(range(len(records)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for i, record in enumerate(records):
        for other in record.equivalents:
            if other in index:
                union(i, index[other])
    groups: dict[int, list[RawPropertyRecord]] = {}
    for i, record in enumerate(records):
        groups.setdefault(find(i), []).append(record)
    return [groups[root] for root in sorted(groups)]


def align_and_cleanse(records: Sequence[RawPropertyRecord], class_vocab: Iterable[str],
                      class_depth: Mapping[str, int] | None = None
                      ) -> tuple[list[PropertyNode], IngestReport]:
    """Merge equivalent records and cleanse constraints against the vocabulary."""
    vocab = list(dict.fromkeys(class_vocab))
    if not vocab:
        raise IngestError("class vocabulary is empty")
    vocab_set = set(vocab)
    depth = dict(class_depth or {})
    report = IngestReport(classes=len(vocab))

    groups = _merge_groups(records)
    report.properties_total = len(groups)
    representative = {}
    for group in groups:
        for record in group:
            representative[record.source_id] = group[0].source_id

    def cleanse(candidates: Sequence[str]) -> tuple[str | None, int]:
        surviving = [c for c in dict.fromkeys(candidates) if c in vocab_set]
        dropped = len(list(dict.fromkeys(candidates))) - len(surviving)
        if not surviving:
            return None, dropped
        best = max(surviving, key=lambda c: (depth.get(c, 0), -surviving.index(c)))
        return best, dropped

    properties: list[PropertyNode] = []
    for group in groups:
        head = group[0]
        label = next((r.label for r in group if r.label), None)
        pattern = next((r.pattern for r in group if r.pattern), None)
        supers = []
        for record in group:
            for sup in record.superproperties:
                mapped = representative.get(sup, sup)
                if mapped not in supers and mapped != head.source_id:
                    supers.append(mapped)
        domain, dropped_d = cleanse([c for r in group for c in r.domain_candidates])
        range_, dropped_r = cleanse([c for r in group for c in r.range_candidates])
        report.constraints_cleansed += dropped_d + dropped_r

        flags = []
        if domain is None:
            flags.append("no-domain")
        if range_ is None:
            flags.append("no-range")
        if not supers:
            flags.append("no-superproperty")
        if len(flags) == 3:
            report.properties_dropped += 1
            report.drop_reasons[head.source_id] = "no surviving domain, range or superproperty"
            continue
        if flags:
            report.flags[head.source_id] = flags
        report.properties_kept += 1
        properties.append(PropertyNode(
            id=head.source_id, label=label or head.source_id.replace("_", " "),
            superproperties=tuple(supers), domain=domain, range=range_, pattern=pattern,
        ))

    kept_ids = {p.id for p in properties}
    properties = [
        PropertyNode(id=p.id, label=p.label,
                     superproperties=tuple(s for s in p.superproperties if s in kept_ids),
                     domain=p.domain, range=p.range, pattern=p.pattern)
        for p in properties
    ]
    report.check()
    return properties, report


def apply_patch(properties: Sequence[PropertyNode], patch_lines: Iterable[str],
                class_vocab: Iterable[str]) -> list[PropertyNode]:
    """Apply curated ``property<TAB>domain|range<TAB>class`` overrides."""
    vocab = set(class_vocab)
    by_id = {p.id: p for p in properties}
    for prop_id, slot, class_id, line_no in parse_triple_lines(patch_lines):
        if prop_id not in by_id:
            raise IngestError(f"patch line {line_no}: unknown property {prop_id!r}")
        if slot not in ("domain", "range"):
            raise IngestError(f"patch line {line_no}: slot must be domain or range")
        if class_id not in vocab:
            raise IngestError(f"patch line {line_no}: unknown class {class_id!r}")
        prop = by_id[prop_id]
        by_id[prop_id] = PropertyNode(
            id=prop.id, label=prop.label, superproperties=prop.superproperties,
            domain=class_id if slot == "domain" else prop.domain,
            range=class_id if slot == "range" else prop.range,
            pattern=prop.pattern,
        )
    return [by_id[p.id] for p in properties]


def property_lines(properties: Sequence[PropertyNode]) -> list[str]:
    """Triple TSV lines declaring the given properties."""
    from ontocloze.ontology import default_label

    lines = []
    for prop in properties:
        for parent in prop.superproperties:
            lines.append(f"{prop.id}\tsubproperty_of\t{parent}")
        if prop.domain is not None:
            lines.append(f"{prop.id}\tdomain\t{prop.domain}")
        if prop.range is not None:
            lines.append(f"{prop.id}\trange\t{prop.range}")
        if prop.pattern is not None:
            lines.append(f"{prop.id}\tpattern\t{prop.pattern}")
        if prop.label != default_label(prop.id):
            lines.append(f"{prop.id}\tlabel\t{prop.label}")
    return lines
