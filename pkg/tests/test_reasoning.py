import random

import pytest

from ontocloze.ontology import build_graph, parse_triple_lines
from ontocloze.prompting import Conjunction, prompt_text, render_reasoning
from ontocloze.reasoning import (
    FULL_GRID,
    RULES,
    RuleMatchError,
    apply_rule,
    close_triples,
    generate_reasoning,
    graph_triples,
    instance_to_record,
    materialize_closure,
    record_to_instance,
)


def brute_force_closure(triples):
    """Independent fixpoint: explicit per-rule clauses over triple sets."""
    known = set(triples)
    changed = True
    while changed:
        changed = False
        new = set()
        for s1, p1, o1 in known:
            for s2, p2, o2 in known:
                if p1 == "domain" and p2 == s1:
                    new.add((s2, "type", o1))
                if p1 == "range" and p2 == s1:
                    new.add((o2, "type", o1))
                if p1 == "subproperty_of" and p2 == "subproperty_of" and o2 == s1:
                    new.add((s2, "subproperty_of", o1))
                if p1 == "subproperty_of" and p2 == s1:
                    new.add((s2, o1, o2))
                if p1 == "subclass_of" and p2 == "type" and o2 == s1:
                    new.add((s2, "type", o1))
                if p1 == "subclass_of" and p2 == "subclass_of" and o2 == s1:
                    new.add((s2, "subclass_of", o1))
        added = new - known
        if added:
            known |= added
            changed = True
    return known - set(triples)


def random_triples(rng, max_nodes=30):
    classes = [f"C{i}" for i in range(rng.randint(1, max_nodes // 3))]
    props = [f"p{i}" for i in range(rng.randint(1, max_nodes // 3))]
    insts = [f"x{i}" for i in range(rng.randint(1, max_nodes // 3))]
    triples = []
    for i, cls in enumerate(classes[1:], start=1):
        for parent in rng.sample(classes[:i], k=min(rng.randint(0, 2), i)):
            triples.append((cls, "subclass_of", parent))
    for i, prop in enumerate(props[1:], start=1):
        for parent in rng.sample(props[:i], k=min(rng.randint(0, 2), i)):
            triples.append((prop, "subproperty_of", parent))
    for prop in props:
        if rng.random() < 0.5:
            triples.append((prop, "domain", rng.choice(classes)))
        if rng.random() < 0.5:
            triples.append((prop, "range", rng.choice(classes)))
    for inst in insts:
        if rng.random() < 0.8:
            triples.append((inst, "type", rng.choice(classes)))
        if rng.random() < 0.6:
            triples.append((inst, rng.choice(props), rng.choice(insts)))
    return triples


def test_apply_rule_rdfs2():
    conclusion = apply_rule(
        "rdfs2",
        ("member_of_sports_team", "domain", "person"),
        ("Messi", "member_of_sports_team", "ArgTeam"),
    )
    assert conclusion == ("Messi", "type", "person")


def test_apply_rule_rdfs5_chain():
    conclusion = apply_rule("rdfs5", ("b", "subproperty_of", "c"), ("a", "subproperty_of", "b"))
    assert conclusion == ("a", "subproperty_of", "c")


def test_apply_rule_rdfs11_distinct():
    conclusion = apply_rule("rdfs11", ("Y", "subclass_of", "Z"), ("X", "subclass_of", "Y"))
    assert conclusion == ("X", "subclass_of", "Z")


def test_apply_rule_shape_mismatch():
    with pytest.raises(RuleMatchError):
        apply_rule("rdfs2", ("p", "range", "c"), ("x", "p", "y"))


def test_apply_rule_join_mismatch():
    with pytest.raises(RuleMatchError):
        apply_rule("rdfs9", ("person", "subclass_of", "animal"), ("Messi", "type", "place"))


def test_closure_empty():
    assert close_triples([]) == {}


def test_closure_toy_contains_rdfs9_derivation(toy_graph):
    derived = materialize_closure(toy_graph)
    assert ("Lionel_Messi", "type", "animal") in derived
    derivation = derived[("Lionel_Messi", "type", "animal")]
    assert derivation.rule == "rdfs9"


def test_closure_provenance_replays(toy_graph):
    derived = materialize_closure(toy_graph)
    assert derived
    for triple, derivation in derived.items():
        assert apply_rule(derivation.rule, derivation.p1, derivation.p2) == triple


def test_closure_idempotent(toy_graph):
    base = graph_triples(toy_graph)
    derived = close_triples(base)
    again = close_triples(base + list(derived))
    assert again == {}


def test_closure_matches_brute_force_on_random_graphs():
    for seed in range(30):
        rng = random.Random(seed)
        triples = random_triples(rng)
        derived = close_triples(triples)
        assert set(derived) == brute_force_closure(triples), f"mismatch at seed {seed}"


def test_nine_instances_per_pair(toy_graph):
    dataset = generate_reasoning(toy_graph, seed=0)
    by_pair = {}
    for instance in dataset.instances:
        by_pair.setdefault(instance.pair_id, []).append(instance)
    assert by_pair
    for pair_id, instances in by_pair.items():
        assert len(instances) == 9, pair_id
        assert {(i.p1.mode, i.p2.mode) for i in instances} == set(FULL_GRID)


def test_single_cell_grid(toy_graph):
    dataset = generate_reasoning(toy_graph, grid=[("NO", "NO")], seed=0)
    assert dataset.instances
    for instance in dataset.instances:
        assert instance.p1.text is None and instance.p2.text is None


def test_premise_text_present_iff_explicit(toy_graph):
    for instance in generate_reasoning(toy_graph, seed=0).instances:
        for premise in (instance.p1, instance.p2):
            assert (premise.text is not None) == (premise.mode == "EX")


def test_rdfs7_masks_pattern_region(toy_graph):
    dataset = generate_reasoning(toy_graph, seed=0)
    sevens = [i for i in dataset.instances if i.rule == "rdfs7"]
    assert sevens
    for instance in sevens:
        assert instance.hypothesis == "{pwX} {mask} {pwY} ."
        assert instance.masked_kind == "property_pattern"
        assert instance.golds == ("is a member of",)
        assert "is a player at" in instance.candidates


def test_gold_matches_rule_conclusion(toy_graph):
    labels = {}
    for collection in (toy_graph.classes, toy_graph.properties):
        labels.update({node_id: node.label for node_id, node in collection.items()})
    for instance in generate_reasoning(toy_graph, seed=0).instances:
        rule = RULES[instance.rule]
        conclusion = apply_rule(rule, instance.p1.shape, instance.p2.shape)
        constituent = conclusion[rule.conclusion.index(rule.masked_var)]
        assert constituent in instance.p1.shape
        if instance.masked_kind != "property_pattern":
            assert instance.golds[0] == labels[constituent]


def test_missing_rule_warns(toy_graph):
    dataset = generate_reasoning(toy_graph, seed=0)
    assert any(w.startswith("rdfs5") for w in dataset.warnings)
    assert not any(i.rule == "rdfs5" for i in dataset.instances)


def test_pair_budget():
    lines = [f"c{i}\tsubclass_of\tc{i + 1}" for i in range(12)]
    graph = build_graph(parse_triple_lines(lines))
    dataset = generate_reasoning(graph, seed=3, max_pairs_per_rule=4)
    for rule in ("rdfs9", "rdfs11"):
        pairs = {i.pair_id for i in dataset.instances if i.rule == rule}
        assert len(pairs) == 4
    twice = generate_reasoning(graph, seed=3, max_pairs_per_rule=4)
    assert [instance_to_record(i) for i in dataset.instances] == \
        [instance_to_record(i) for i in twice.instances]


def test_generation_deterministic(toy_graph):
    a = generate_reasoning(toy_graph, seed=7)
    b = generate_reasoning(toy_graph, seed=7)
    assert [instance_to_record(i) for i in a.instances] == \
        [instance_to_record(i) for i in b.instances]


def test_record_roundtrip(toy_graph):
    for instance in generate_reasoning(toy_graph, seed=0).instances[:20]:
        assert record_to_instance(instance_to_record(instance)) == instance


def test_rendered_prompt_matches_fig_example(toy_graph):
    dataset = generate_reasoning(toy_graph, seed=0)
    instance = next(
        i for i in dataset.instances
        if i.rule == "rdfs9" and i.p1.shape == ("person", "subclass_of", "animal")
        and i.p1.mode == "EX" and i.p2.mode == "EX"
    )
    prompt = render_reasoning(instance, Conjunction("manual"))
    assert prompt_text(prompt) == \
        "[X] is a person. Person is an animal. Therefore, [X] is a particular [MASK] ."


def test_rendered_prompt_no_premises(toy_graph):
    dataset = generate_reasoning(toy_graph, seed=0)
    instance = next(
        i for i in dataset.instances
        if i.rule == "rdfs9" and i.p1.shape == ("person", "subclass_of", "animal")
        and i.p1.mode == "NO" and i.p2.mode == "NO"
    )
    prompt = render_reasoning(instance, Conjunction("manual"))
    assert prompt_text(prompt) == "Therefore, [X] is a particular [MASK] ."


def test_soft_conjunction_placement(toy_graph):
    dataset = generate_reasoning(toy_graph, seed=0, template_kind="manual")
    instance = next(
        i for i in dataset.instances
        if i.rule == "rdfs9" and i.p1.shape == ("person", "subclass_of", "animal")
        and i.p1.mode == "EX" and i.p2.mode == "EX"
    )
    text = prompt_text(render_reasoning(instance, Conjunction("soft")))
    assert text == "[X] is a person. <s4> Person is an animal. <s5> [X] is a particular [MASK] ."


def test_explicit_premises_contained_in_prompt(toy_graph):
    dataset = generate_reasoning(toy_graph, seed=0)
    for instance in dataset.instances:
        text = prompt_text(render_reasoning(instance, Conjunction("manual")))
        for premise in (instance.p1, instance.p2):
            if premise.mode == "EX":
                rendered = premise.text.replace("{pwX}", "[X]").replace("{pwY}", "[Y]")
                assert rendered in text
