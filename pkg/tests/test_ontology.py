import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontocloze import ontology
from ontocloze.ontology import (
    ClassNode,
    CycleError,
    DanglingReferenceError,
    OntologyError,
    OntologyGraph,
    ParseError,
    UnknownNodeError,
    ancestors,
    build_graph,
    domain_of,
    graph_hash,
    load_graph,
    parse_triple_lines,
    range_of,
    save_graph,
)


def closure_oracle(parents: dict[str, tuple[str, ...]], node: str) -> set[str]:
    """Naive fixpoint closure over parent edges, independent of the BFS path."""
    out = {node}
    changed = True
    while changed:
        changed = False
        for known in list(out):
            for parent in parents.get(known, ()):
                if parent not in out:
                    out.add(parent)
                    changed = True
    out.discard(node)
    return out


def graph_of_classes(parents: dict[str, tuple[str, ...]]) -> OntologyGraph:
    classes = {
        name: ClassNode(id=name, label=name, superclasses=tuple(parents.get(name, ())))
        for name in parents
    }
    return OntologyGraph(classes=classes)


def test_toy_counts(toy_graph):
    assert len(toy_graph.classes) == 6
    assert len(toy_graph.properties) == 3
    assert len(toy_graph.instances) == 4


def test_self_loop_is_cycle_error(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("Person\tsubclass_of\tPerson\n")
    with pytest.raises(CycleError) as exc:
        load_graph(path)
    assert "Person" in str(exc.value)


def test_longer_cycle_reports_offenders(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\tsubclass_of\tb\nb\tsubclass_of\tc\nc\tsubclass_of\ta\n")
    with pytest.raises(CycleError) as exc:
        load_graph(path)
    for node in ("a", "b", "c"):
        assert node in exc.value.cycle


def test_ancestors_chain(toy_graph):
    assert ancestors(toy_graph, "person", "class") == ["animal", "eukaryote"]


def test_root_has_no_ancestors(toy_graph):
    assert ancestors(toy_graph, "eukaryote", "class") == []


def test_diamond_dag_order_and_dedup():
    graph = graph_of_classes({"A": ("B", "C"), "B": ("D",), "C": ("D",), "D": ()})
    assert closure_oracle({"A": ("B", "C"), "B": ("D",), "C": ("D",)}, "A") == {"B", "C", "D"}
    assert ancestors(graph, "A", "class") == ["B", "C", "D"]


def test_unknown_id_raises(toy_graph):
    with pytest.raises(UnknownNodeError):
        ancestors(toy_graph, "nope", "class")
    with pytest.raises(UnknownNodeError):
        domain_of(toy_graph, "nope")


def test_domain_and_range(toy_graph):
    assert domain_of(toy_graph, "member_of_sports_team") == "person"
    assert range_of(toy_graph, "member_of_sports_team") == "sports_team"
    assert domain_of(toy_graph, "member_of") is None
    assert range_of(toy_graph, "member_of") is None


def test_property_ancestors(toy_graph):
    assert ancestors(toy_graph, "member_of_sports_team", "property") == ["member_of"]


def test_type_ancestry(toy_graph):
    assert ontology.type_ancestry(toy_graph, "Lionel_Messi") == [
        "person", "animal", "eukaryote",
    ]


def test_roundtrip_identity(toy_graph, tmp_path):
    path = tmp_path / "out.tsv"
    save_graph(toy_graph, path)
    reloaded = load_graph(path)
    assert reloaded == toy_graph
    assert graph_hash(reloaded) == graph_hash(toy_graph)


def test_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("a\tsubclass_of\tb\nmangled line\n")
    with pytest.raises(ParseError) as exc:
        load_graph(path)
    assert exc.value.line_no == 2


def test_kind_conflict_rejected():
    triples = parse_triple_lines(["a\tsubclass_of\tb", "a\tsubproperty_of\tc"])
    with pytest.raises(ParseError):
        build_graph(triples)


def test_label_only_id_is_dangling():
    triples = parse_triple_lines(["ghost\tlabel\tGhost"])
    with pytest.raises(DanglingReferenceError):
        build_graph(triples)


def test_duplicate_edge_rejected():
    triples = parse_triple_lines(["a\tsubclass_of\tb", "a\tsubclass_of\tb"])
    with pytest.raises(ParseError):
        build_graph(triples)


def test_pattern_slot_validation():
    triples = parse_triple_lines(["p\tpattern\t[X] likes things"])
    with pytest.raises(ParseError):
        build_graph(triples)


def test_duplicate_label_rejected():
    triples = parse_triple_lines([
        "a\tsubclass_of\troot", "b\tsubclass_of\troot",
        "a\tlabel\tsame", "b\tlabel\tsame",
    ])
    with pytest.raises(OntologyError):
        build_graph(triples)


@st.composite
def random_dags(draw):
    n = draw(st.integers(min_value=1, max_value=50))
    names = [f"n{i}" for i in range(n)]
    parents: dict[str, tuple[str, ...]] = {name: () for name in names}
    for i in range(1, n):
        k = draw(st.integers(min_value=0, max_value=min(3, i)))
        if k:
            chosen = draw(st.permutations(names[:i]))[:k]
            parents[names[i]] = tuple(chosen)
    return parents


@settings(max_examples=60, deadline=None)
@given(random_dags(), st.data())
def test_ancestors_matches_fixpoint_oracle(parents, data):
    graph = graph_of_classes(parents)
    node = data.draw(st.sampled_from(sorted(parents)))
    result = ancestors(graph, node, "class")
    assert set(result) == closure_oracle(parents, node)
    assert node not in result
    assert len(result) == len(set(result))
