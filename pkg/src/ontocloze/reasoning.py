"""RDFS entailment rules, forward-chaining closure, and reasoning probes.

The rule table is data: each rule binds two premise shapes and one
conclusion shape over variables (``?x`` style), so the engine supports any
two-premise triple rule.  P1 is always the premise sharing the constituent
that gets masked in the conclusion.  Instances never name real entities in
their hypotheses: the specific constituents are pseudoword slots (``X``,
``Y``) bound to synthetic embeddings at scoring time.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ontocloze import prompting
from ontocloze.ontology import OntologyGraph
from ontocloze.prompting import TemplateRegistry

Triple = tuple[str, str, str]

PW_SUBJECT = "@X"
PW_OBJECT = "@Y"

PREMISE_MODES = ("EX", "IM", "NO")
FULL_GRID = tuple((a, b) for a in PREMISE_MODES for b in PREMISE_MODES)


class RuleMatchError(ValueError):
    pass


@dataclass(frozen=True)
class RuleSpec:
    name: str
    p1: Triple
    p2: Triple
    conclusion: Triple
    masked_var: str
    candidate_kind: str  # class | property | property_pattern


RULES: dict[str, RuleSpec] = {
    rule.name: rule
    for rule in (
        RuleSpec("rdfs2", ("?a", "domain", "?x"), ("?u", "?a", "?v"),
                 ("?u", "type", "?x"), "?x", "class"),
        RuleSpec("rdfs3", ("?a", "range", "?x"), ("?u", "?a", "?v"),
                 ("?v", "type", "?x"), "?x", "class"),
        RuleSpec("rdfs5", ("?b", "subproperty_of", "?c"), ("?a", "subproperty_of", "?b"),
                 ("?a", "subproperty_of", "?c"), "?c", "property"),
        RuleSpec("rdfs7", ("?a", "subproperty_of", "?b"), ("?u", "?a", "?v"),
                 ("?u", "?b", "?v"), "?b", "property_pattern"),
        RuleSpec("rdfs9", ("?x", "subclass_of", "?y"), ("?u", "type", "?x"),
                 ("?u", "type", "?y"), "?y", "class"),
        RuleSpec("rdfs11", ("?y", "subclass_of", "?z"), ("?x", "subclass_of", "?y"),
                 ("?x", "subclass_of", "?z"), "?z", "class"),
    )
}


def _is_var(term: str) -> bool:
    return term.startswith("?")


def _unify(shape: Triple, triple: Triple, bindings: dict[str, str]) -> dict[str, str] | None:
    out = dict(bindings)
    for pattern, value in zip(shape, triple):
        if _is_var(pattern):
            bound = out.get(pattern)
            if bound is None:
                out[pattern] = value
            elif bound != value:
                return None
        elif pattern != value:
            return None
    return out


def _substitute(shape: Triple, bindings: Mapping[str, str]) -> Triple:
    return tuple(bindings[t] if _is_var(t) else t for t in shape)  # type: ignore[return-value]


def apply_rule(rule: RuleSpec | str, p1_triple: Triple, p2_triple: Triple) -> Triple:
    """Conclusion of a rule applied to two matching premise triples."""
    if isinstance(rule, str):
        rule = RULES[rule]
    bindings = _unify(rule.p1, p1_triple, {})
    if bindings is None:
        raise RuleMatchError(f"{rule.name}: premise 1 {p1_triple} does not match {rule.p1}")
    joined = _unify(rule.p2, p2_triple, bindings)
    if joined is None:
        if _unify(rule.p2, p2_triple, {}) is None:
            raise RuleMatchError(f"{rule.name}: premise 2 {p2_triple} does not match {rule.p2}")
        raise RuleMatchError(
            f"{rule.name}: premises {p1_triple} and {p2_triple} disagree on the join variable"
        )
    return _substitute(rule.conclusion, joined)


@dataclass(frozen=True)
class Derivation:
    rule: str
    p1: Triple
    p2: Triple


def close_triples(triples: Iterable[Triple],
                  rules: Mapping[str, RuleSpec] = RULES) -> dict[Triple, Derivation]:
    """Least fixpoint of the rules over a triple set; derived triples with provenance.

    Returns only triples not in the input, each tagged with the first
    derivation found under a deterministic iteration order.
    """
    base = list(dict.fromkeys(triples))
    known = set(base)
    derived: dict[Triple, Derivation] = {}
    changed = True
    while changed:
        changed = False
        universe = base + list(derived)
        for rule in rules.values():
            for t1 in universe:
                bindings = _unify(rule.p1, t1, {})
                if bindings is None:
                    continue
                for t2 in universe:
                    joined = _unify(rule.p2, t2, bindings)
                    if joined is None:
                        continue
                    conclusion = _substitute(rule.conclusion, joined)
                    if conclusion in known:
                        continue
                    known.add(conclusion)
                    derived[conclusion] = Derivation(rule.name, t1, t2)
                    changed = True
    return derived


def graph_triples(graph: OntologyGraph) -> list[Triple]:
    """Schema edges of the graph as triples, declaration order."""
    triples: list[Triple] = []
    for cls in graph.classes.values():
        for parent in cls.superclasses:
            triples.append((cls.id, "subclass_of", parent))
    for prop in graph.properties.values():
        for parent in prop.superproperties:
            triples.append((prop.id, "subproperty_of", parent))
        if prop.domain is not None:
            triples.append((prop.id, "domain", prop.domain))
        if prop.range is not None:
            triples.append((prop.id, "range", prop.range))
    for inst in graph.instances.values():
        for type_id in inst.types:
            triples.append((inst.id, "type", type_id))
    return triples


def materialize_closure(graph: OntologyGraph,
                        facts: Iterable[Triple] = ()) -> dict[Triple, Derivation]:
    """Forward-chain the rules over the graph's edges (plus optional fact triples)."""
    return close_triples(graph_triples(graph) + list(facts))


# ---------------------------------------------------------------------------
# Reasoning instance generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Premise:
    shape: Triple
    mode: str  # EX | IM | NO
    text: str | None = None  # marker string, present iff mode == EX
    # How to decide whether the premise counts as memorized:
    # P1 premises point at a memorizing sample and one of its golds;
    # P2 premises carry their own pseudoword probe.
    memorize_key: tuple[str, str, str] | None = None  # (subtask, subject_id, gold label)
    probe: "PremiseProbe | None" = None

    @property
    def premise_id(self) -> str:
        return "|".join(self.shape)


@dataclass(frozen=True)
class PremiseProbe:
    """Cloze probe testing model predisposition toward a pseudoword premise."""
    template: str  # marker string with {mask} and pseudoword slots
    golds: tuple[str, ...]
    candidates: tuple[str, ...]
    masked_kind: str


@dataclass(frozen=True)
class ReasoningInstance:
    instance_id: str
    rule: str
    pair_id: str
    p1: Premise
    p2: Premise
    hypothesis: str  # marker string with {mask} and pseudoword slots
    golds: tuple[str, ...]
    candidates: tuple[str, ...]
    masked_kind: str
    pseudoword_slots: tuple[str, ...]


@dataclass
class _PairParts:
    p1_shape: Triple
    p2_shape: Triple
    p1_text: str
    p2_text: str
    hypothesis: str
    golds: tuple[str, ...]
    candidates: tuple[str, ...]
    masked_kind: str
    slots: tuple[str, ...]
    p1_key: tuple[str, str, str]
    p2_probe: PremiseProbe


def _statement(registry: TemplateRegistry, relation: str, kind: str,
               subject: str, obj: str, phrase: str | None = None) -> str:
    template = registry.get(relation, kind, 1)
    return prompting.fill_statement(template.body, subject, obj, phrase=phrase)


def _hypothesis(registry: TemplateRegistry, relation: str, kind: str, variant: int,
                subject: str, phrase: str | None = None) -> str:
    template = registry.get(relation, kind, variant if kind == "manual" else 1, clamp=True)
    return prompting.fill_template(template.body, subject=subject, phrase=phrase)


def _enumerate_pairs(graph: OntologyGraph, rule: RuleSpec, registry: TemplateRegistry,
                     kind: str, variant: int) -> list[_PairParts]:
    class_labels = tuple(graph.class_labels())
    property_labels = tuple(graph.property_labels())
    patterned = [p for p in graph.properties.values() if p.pattern is not None]
    pattern_spans = tuple(prompting.pattern_span(p.pattern) for p in patterned)
    pairs: list[_PairParts] = []

    def pattern_statement(prop) -> str:
        filled = prop.pattern.replace("[X]", "{pwX}").replace("[Y]", "{pwY}")
        return prompting.fix_articles(filled) + "."

    if rule.name in ("rdfs2", "rdfs3"):
        for prop in patterned:
            constraint = prop.domain if rule.name == "rdfs2" else prop.range
            if constraint is None:
                continue
            constraint_label = graph.classes[constraint].label
            range_label = graph.classes[prop.range].label if prop.range else None
            if rule.name == "rdfs2":
                phrase = prompting.domain_phrase(prop.pattern, prop.label, range_label)
                relation, subtask = "domain", "DM"
                hyp_slot = "{pwX}"
            else:
                phrase = prompting.range_phrase(prop.pattern, prop.label)
                relation, subtask = "range", "RG"
                hyp_slot = "{pwY}"
            p1_shape = (prop.id, relation, constraint)
            p2_shape = (PW_SUBJECT, prop.id, PW_OBJECT)
            pairs.append(_PairParts(
                p1_shape=p1_shape, p2_shape=p2_shape,
                p1_text=_statement(registry, relation, kind, prop.label, constraint_label,
                                   phrase=phrase),
                p2_text=pattern_statement(prop),
                hypothesis=_hypothesis(registry, "type", kind, variant, hyp_slot),
                golds=(constraint_label,), candidates=class_labels, masked_kind="class",
                slots=("X", "Y"),
                p1_key=(subtask, prop.id, constraint_label),
                p2_probe=PremiseProbe(
                    template="{pwX} {mask} {pwY} .",
                    golds=(prompting.pattern_span(prop.pattern),),
                    candidates=pattern_spans, masked_kind="property_pattern",
                ),
            ))
    elif rule.name == "rdfs5":
        for prop in graph.properties.values():
            for mid in prop.superproperties:
                for top in graph.properties[mid].superproperties:
                    mid_label = graph.properties[mid].label
                    top_label = graph.properties[top].label
                    pairs.append(_PairParts(
                        p1_shape=(mid, "subproperty_of", top),
                        p2_shape=(PW_SUBJECT, "subproperty_of", mid),
                        p1_text=_statement(registry, "subproperty_of", kind, mid_label, top_label),
                        p2_text=_statement(registry, "subproperty_of", kind, "{pwX}", mid_label),
                        hypothesis=_hypothesis(registry, "subproperty_of", kind, variant, "{pwX}"),
                        golds=(top_label,), candidates=property_labels, masked_kind="property",
                        slots=("X",),
                        p1_key=("SPO", mid, top_label),
                        p2_probe=PremiseProbe(
                            template=_hypothesis(registry, "subproperty_of", kind, variant, "{pwX}"),
                            golds=(mid_label,), candidates=property_labels,
                            masked_kind="property",
                        ),
                    ))
    elif rule.name == "rdfs7":
        by_id = {p.id: p for p in patterned}
        for prop in patterned:
            for parent in prop.superproperties:
                if parent not in by_id:
                    continue
                parent_label = by_id[parent].label
                pairs.append(_PairParts(
                    p1_shape=(prop.id, "subproperty_of", parent),
                    p2_shape=(PW_SUBJECT, prop.id, PW_OBJECT),
                    p1_text=_statement(registry, "subproperty_of", kind, prop.label, parent_label),
                    p2_text=pattern_statement(prop),
                    hypothesis="{pwX} {mask} {pwY} .",
                    golds=(prompting.pattern_span(by_id[parent].pattern),),
                    candidates=pattern_spans, masked_kind="property_pattern",
                    slots=("X", "Y"),
                    p1_key=("SPO", prop.id, parent_label),
                    p2_probe=PremiseProbe(
                        template="{pwX} {mask} {pwY} .",
                        golds=(prompting.pattern_span(prop.pattern),),
                        candidates=pattern_spans, masked_kind="property_pattern",
                    ),
                ))
    elif rule.name == "rdfs9":
        for cls in graph.classes.values():
            for parent in cls.superclasses:
                parent_label = graph.classes[parent].label
                pairs.append(_PairParts(
                    p1_shape=(cls.id, "subclass_of", parent),
                    p2_shape=(PW_SUBJECT, "type", cls.id),
                    p1_text=_statement(registry, "subclass_of", kind, cls.label, parent_label),
                    p2_text=_statement(registry, "type", kind, "{pwX}", cls.label),
                    hypothesis=_hypothesis(registry, "type", kind, variant, "{pwX}"),
                    golds=(parent_label,), candidates=class_labels, masked_kind="class",
                    slots=("X",),
                    p1_key=("SCO", cls.id, parent_label),
                    p2_probe=PremiseProbe(
                        template=_hypothesis(registry, "type", kind, variant, "{pwX}"),
                        golds=(cls.label,), candidates=class_labels, masked_kind="class",
                    ),
                ))
    elif rule.name == "rdfs11":
        for cls in graph.classes.values():
            for mid in cls.superclasses:
                for top in graph.classes[mid].superclasses:
                    mid_label = graph.classes[mid].label
                    top_label = graph.classes[top].label
                    pairs.append(_PairParts(
                        p1_shape=(mid, "subclass_of", top),
                        p2_shape=(PW_SUBJECT, "subclass_of", mid),
                        p1_text=_statement(registry, "subclass_of", kind, mid_label, top_label),
                        p2_text=_statement(registry, "subclass_of", kind, "{pwX}", mid_label),
                        hypothesis=_hypothesis(registry, "subclass_of", kind, variant, "{pwX}"),
                        golds=(top_label,), candidates=class_labels, masked_kind="class",
                        slots=("X",),
                        p1_key=("SCO", mid, top_label),
                        p2_probe=PremiseProbe(
                            template=_hypothesis(registry, "subclass_of", kind, variant, "{pwX}"),
                            golds=(mid_label,), candidates=class_labels, masked_kind="class",
                        ),
                    ))
    else:
        raise ValueError(f"no pair enumeration for rule {rule.name}")
    return pairs


@dataclass
class ReasoningDataset:
    instances: list[ReasoningInstance]
    warnings: list[str] = field(default_factory=list)
    candidate_policy: str = "full-vocabulary"


def generate_reasoning(graph: OntologyGraph,
                       grid: Iterable[tuple[str, str]] = FULL_GRID,
                       seed: int = 0,
                       template_kind: str = "manual",
                       template_variant: int = 3,
                       max_pairs_per_rule: int | None = None,
                       registry: TemplateRegistry | None = None) -> ReasoningDataset:
    """One instance per rule, premise pair and grid cell.

    The grid cells fix how each premise is given (EX/IM/NO); explicit
    premises carry rendered statements, implicit and absent premises keep
    only their identity for later classification.
    """
    grid = list(grid)
    for cell in grid:
        if cell not in FULL_GRID:
            raise ValueError(f"invalid grid cell {cell!r}")
    registry = registry or TemplateRegistry()
    dataset = ReasoningDataset(instances=[])
    for rule in RULES.values():
        pairs = _enumerate_pairs(graph, rule, registry, template_kind, template_variant)
        if not pairs:
            dataset.warnings.append(f"{rule.name}: no valid premise pairs in graph")
            continue
        if max_pairs_per_rule is not None and len(pairs) > max_pairs_per_rule:
            rng = random.Random(f"{seed}:{rule.name}:pairs")
            keep = sorted(rng.sample(range(len(pairs)), max_pairs_per_rule))
            pairs = [pairs[i] for i in keep]
        for pair_index, parts in enumerate(pairs):
            pair_id = f"{rule.name}:{pair_index:04d}"
            # Sanity: the gold constituent must be what the rule itself derives.
            conclusion = apply_rule(rule, parts.p1_shape, parts.p2_shape)
            masked_index = rule.conclusion.index(rule.masked_var)
            assert conclusion[masked_index] == parts.p1_shape[rule.p1.index(rule.masked_var)]
            for mode1, mode2 in grid:
                dataset.instances.append(ReasoningInstance(
                    instance_id=f"{pair_id}:{mode1}-{mode2}",
                    rule=rule.name, pair_id=pair_id,
                    p1=Premise(shape=parts.p1_shape, mode=mode1,
                               text=parts.p1_text if mode1 == "EX" else None,
                               memorize_key=parts.p1_key),
                    p2=Premise(shape=parts.p2_shape, mode=mode2,
                               text=parts.p2_text if mode2 == "EX" else None,
                               probe=parts.p2_probe),
                    hypothesis=parts.hypothesis,
                    golds=parts.golds, candidates=parts.candidates,
                    masked_kind=parts.masked_kind, pseudoword_slots=parts.slots,
                ))
    return dataset


def premise_to_record(premise: Premise) -> dict:
    record = {"shape": list(premise.shape), "mode": premise.mode, "text": premise.text}
    if premise.memorize_key is not None:
        record["memorize_key"] = list(premise.memorize_key)
    if premise.probe is not None:
        record["probe"] = {
            "template": premise.probe.template,
            "golds": list(premise.probe.golds),
            "candidates": list(premise.probe.candidates),
            "masked_kind": premise.probe.masked_kind,
        }
    return record


def record_to_premise(record: Mapping) -> Premise:
    probe = None
    if record.get("probe"):
        p = record["probe"]
        probe = PremiseProbe(template=p["template"], golds=tuple(p["golds"]),
                             candidates=tuple(p["candidates"]), masked_kind=p["masked_kind"])
    key = record.get("memorize_key")
    return Premise(
        shape=tuple(record["shape"]), mode=record["mode"], text=record.get("text"),
        memorize_key=tuple(key) if key else None, probe=probe,
    )


def instance_to_record(instance: ReasoningInstance) -> dict:
    return {
        "instance_id": instance.instance_id,
        "rule": instance.rule,
        "pair_id": instance.pair_id,
        "p1": premise_to_record(instance.p1),
        "p2": premise_to_record(instance.p2),
        "hypothesis": instance.hypothesis,
        "golds": list(instance.golds),
        "candidates": list(instance.candidates),
        "masked_kind": instance.masked_kind,
        "pseudoword_slots": list(instance.pseudoword_slots),
    }


def record_to_instance(record: Mapping) -> ReasoningInstance:
    return ReasoningInstance(
        instance_id=record["instance_id"], rule=record["rule"], pair_id=record["pair_id"],
        p1=record_to_premise(record["p1"]), p2=record_to_premise(record["p2"]),
        hypothesis=record["hypothesis"], golds=tuple(record["golds"]),
        candidates=tuple(record["candidates"]), masked_kind=record["masked_kind"],
        pseudoword_slots=tuple(record["pseudoword_slots"]),
    )
