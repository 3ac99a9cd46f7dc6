"""In-memory ontology graph: classes, properties, instances and their edges.

The graph is loaded from a triple TSV (one ``subject<TAB>predicate<TAB>object``
edge per line, ``#`` comments) and is immutable after load.  Node kinds are
inferred from the structural predicates:

* ``subclass_of``    -- subject and object are classes
* ``subproperty_of`` -- subject and object are properties
* ``domain``/``range`` -- subject is a property, object a class
* ``pattern``        -- subject is a property, object is literal text
* ``type``           -- subject is an instance, object a class
* ``label``          -- object is literal text; carries no kind by itself

An id whose kind cannot be established from any structural line is a dangling
reference.  Labels default to the id with underscores replaced by spaces.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

NodeId = str

STRUCTURAL_PREDICATES = ("type", "subclass_of", "subproperty_of", "domain", "range")
LITERAL_PREDICATES = ("label", "pattern")
PREDICATES = STRUCTURAL_PREDICATES + LITERAL_PREDICATES


class OntologyError(Exception):
    """Base class for graph construction failures."""


class ParseError(OntologyError):
    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DanglingReferenceError(OntologyError):
    pass


class CycleError(OntologyError):
    def __init__(self, relation: str, cycle: list[NodeId]):
        super().__init__(f"{relation} cycle: " + " -> ".join(cycle))
        self.relation = relation
        self.cycle = cycle


class UnknownNodeError(OntologyError, KeyError):
    pass


def default_label(node_id: NodeId) -> str:
    return node_id.replace("_", " ")


@dataclass(frozen=True)
class ClassNode:
    id: NodeId
    label: str
    superclasses: tuple[NodeId, ...] = ()


@dataclass(frozen=True)
class PropertyNode:
    id: NodeId
    label: str
    superproperties: tuple[NodeId, ...] = ()
    domain: NodeId | None = None
    range: NodeId | None = None
    pattern: str | None = None


@dataclass(frozen=True)
class InstanceNode:
    id: NodeId
    label: str
    types: tuple[NodeId, ...] = ()


@dataclass(frozen=True)
class OntologyGraph:
    """Validated ontology; dicts preserve declaration order and must not be mutated."""

    classes: dict[NodeId, ClassNode] = field(default_factory=dict)
    properties: dict[NodeId, PropertyNode] = field(default_factory=dict)
    instances: dict[NodeId, InstanceNode] = field(default_factory=dict)

    def class_labels(self) -> list[str]:
        return [c.label for c in self.classes.values()]

    def property_labels(self) -> list[str]:
        return [p.label for p in self.properties.values()]


def parse_triple_lines(lines: Iterable[str]) -> list[tuple[str, str, str, int]]:
    """Parse TSV lines into (subject, predicate, object, line_no) tuples."""
    triples = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected 3 tab-separated columns, got {len(parts)}", line_no)
        subject, predicate, obj = (p.strip() for p in parts)
        if not subject or not predicate or not obj:
            raise ParseError("empty column", line_no)
        triples.append((subject, predicate, obj, line_no))
    return triples


def _find_cycle(order: list[NodeId], parents: dict[NodeId, list[NodeId]]) -> list[NodeId] | None:
    """Return one cycle through the parent edges, or None if acyclic."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in order}
    stack: list[NodeId] = []

    def visit(node: NodeId) -> list[NodeId] | None:
        color[node] = GREY
        stack.append(node)
        for parent in parents.get(node, ()):
            if color.get(parent, WHITE) == GREY:
                return stack[stack.index(parent):] + [parent]
            if color.get(parent, WHITE) == WHITE:
                found = visit(parent)
                if found:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for node in order:
        if color[node] == WHITE:
            found = visit(node)
            if found:
                return found
    return None


def build_graph(triples: Iterable[tuple[str, str, str, int]]) -> OntologyGraph:
    """Assemble and validate a graph from parsed triples; rejects bad input."""
    kind: dict[str, str] = {}
    order: list[str] = []
    labels: dict[str, str] = {}
    patterns: dict[str, str] = {}
    superclasses: dict[str, list[str]] = {}
    superproperties: dict[str, list[str]] = {}
    types: dict[str, list[str]] = {}
    domains: dict[str, str] = {}
    ranges: dict[str, str] = {}
    referenced_only: dict[str, int] = {}

    def declare(node_id: str, node_kind: str, line_no: int) -> None:
        seen = kind.get(node_id)
        if seen is None:
            kind[node_id] = node_kind
            order.append(node_id)
            referenced_only.pop(node_id, None)
        elif seen != node_kind:
            raise ParseError(f"{node_id!r} used as both {seen} and {node_kind}", line_no)

    for subject, predicate, obj, line_no in triples:
        if predicate == "subclass_of":
            declare(subject, "class", line_no)
            declare(obj, "class", line_no)
            edges = superclasses.setdefault(subject, [])
            if obj in edges:
                raise ParseError(f"duplicate subclass_of edge {subject} -> {obj}", line_no)
            edges.append(obj)
        elif predicate == "subproperty_of":
            declare(subject, "property", line_no)
            declare(obj, "property", line_no)
            edges = superproperties.setdefault(subject, [])
            if obj in edges:
                raise ParseError(f"duplicate subproperty_of edge {subject} -> {obj}", line_no)
            edges.append(obj)
        elif predicate == "type":
            declare(subject, "instance", line_no)
            declare(obj, "class", line_no)
            edges = types.setdefault(subject, [])
            if obj in edges:
                raise ParseError(f"duplicate type edge {subject} -> {obj}", line_no)
            edges.append(obj)
        elif predicate == "domain":
            declare(subject, "property", line_no)
            declare(obj, "class", line_no)
            if subject in domains:
                raise ParseError(f"duplicate domain for {subject}", line_no)
            domains[subject] = obj
        elif predicate == "range":
            declare(subject, "property", line_no)
            declare(obj, "class", line_no)
            if subject in ranges:
                raise ParseError(f"duplicate range for {subject}", line_no)
            ranges[subject] = obj
        elif predicate == "label":
            if subject in labels:
                raise ParseError(f"duplicate label for {subject}", line_no)
            labels[subject] = obj
            if subject not in kind:
                referenced_only.setdefault(subject, line_no)
        elif predicate == "pattern":
            declare(subject, "property", line_no)
            if subject in patterns:
                raise ParseError(f"duplicate pattern for {subject}", line_no)
            if obj.count("[X]") != 1 or obj.count("[Y]") != 1:
                raise ParseError(f"pattern must contain exactly one [X] and one [Y]: {obj!r}", line_no)
            patterns[subject] = obj
        else:
            raise ParseError(f"unknown predicate {predicate!r}", line_no)

    if referenced_only:
        node_id, line_no = next(iter(referenced_only.items()))
        raise DanglingReferenceError(
            f"line {line_no}: {node_id!r} has a label but never appears in a structural edge"
        )

    for relation, parents in (("subclass_of", superclasses), ("subproperty_of", superproperties)):
        cycle = _find_cycle(order, parents)
        if cycle:
            raise CycleError(relation, cycle)

    def label_of(node_id: str) -> str:
        return labels.get(node_id, default_label(node_id))

    classes: dict[str, ClassNode] = {}
    properties: dict[str, PropertyNode] = {}
    instances: dict[str, InstanceNode] = {}
    for node_id in order:
        node_kind = kind[node_id]
        if node_kind == "class":
            classes[node_id] = ClassNode(
                id=node_id, label=label_of(node_id),
                superclasses=tuple(superclasses.get(node_id, ())),
            )
        elif node_kind == "property":
            properties[node_id] = PropertyNode(
                id=node_id, label=label_of(node_id),
                superproperties=tuple(superproperties.get(node_id, ())),
                domain=domains.get(node_id), range=ranges.get(node_id),
                pattern=patterns.get(node_id),
            )
        else:
            instances[node_id] = InstanceNode(
                id=node_id, label=label_of(node_id), types=tuple(types.get(node_id, ())),
            )

    for collection, name in ((classes, "class"), (properties, "property")):
        seen_labels: dict[str, str] = {}
        for node in collection.values():
            if node.label in seen_labels:
                raise OntologyError(
                    f"duplicate {name} label {node.label!r} ({seen_labels[node.label]} vs {node.id}); "
                    "labels are the prompt surface and must be unique per kind"
                )
            seen_labels[node.label] = node.id

    return OntologyGraph(classes=classes, properties=properties, instances=instances)


def load_graph(path: str | Path) -> OntologyGraph:
    """Load and validate a graph from a triple TSV file."""
    with open(path, encoding="utf-8") as handle:
        return build_graph(parse_triple_lines(handle))


def save_graph(graph: OntologyGraph, path: str | Path) -> None:
    """Write the graph as canonical triple TSV; load_graph(save_graph(g)) == g."""
    lines = []
    for cls in graph.classes.values():
        for parent in cls.superclasses:
            lines.append(f"{cls.id}\tsubclass_of\t{parent}")
        if cls.label != default_label(cls.id):
            lines.append(f"{cls.id}\tlabel\t{cls.label}")
    for prop in graph.properties.values():
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
    for inst in graph.instances.values():
        for type_id in inst.types:
            lines.append(f"{inst.id}\ttype\t{type_id}")
        if inst.label != default_label(inst.id):
            lines.append(f"{inst.id}\tlabel\t{inst.label}")
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def graph_hash(graph: OntologyGraph) -> str:
    """Stable content hash used to stamp run manifests."""
    digest = hashlib.sha256()
    for cls in sorted(graph.classes.values(), key=lambda c: c.id):
        digest.update(repr(cls).encode())
    for prop in sorted(graph.properties.values(), key=lambda p: p.id):
        digest.update(repr(prop).encode())
    for inst in sorted(graph.instances.values(), key=lambda i: i.id):
        digest.update(repr(inst).encode())
    return digest.hexdigest()[:16]


def _bfs_ancestors(seeds: Iterable[NodeId], parents_of) -> list[NodeId]:
    """Layered BFS closure over parent edges; nearest-first, declaration-order ties."""
    seen: set[NodeId] = set(seeds)
    result: list[NodeId] = []
    frontier = list(seeds)
    while frontier:
        next_frontier: list[NodeId] = []
        for node in frontier:
            for parent in parents_of(node):
                if parent not in seen:
                    seen.add(parent)
                    result.append(parent)
                    next_frontier.append(parent)
        frontier = next_frontier
    return result


def ancestors(graph: OntologyGraph, node_id: NodeId, kind: str) -> list[NodeId]:
    """Transitive superclass/superproperty closure, nearest-first, deduplicated.

    ``kind`` is ``"class"`` or ``"property"``.
    """
    if kind == "class":
        if node_id not in graph.classes:
            raise UnknownNodeError(f"unknown class {node_id!r}")
        return _bfs_ancestors([node_id], lambda n: graph.classes[n].superclasses)
    if kind == "property":
        if node_id not in graph.properties:
            raise UnknownNodeError(f"unknown property {node_id!r}")
        return _bfs_ancestors([node_id], lambda n: graph.properties[n].superproperties)
    raise ValueError(f"kind must be 'class' or 'property', got {kind!r}")


def type_ancestry(graph: OntologyGraph, instance_id: NodeId) -> list[NodeId]:
    """Declared types followed by all their superclasses, nearest-first."""
    if instance_id not in graph.instances:
        raise UnknownNodeError(f"unknown instance {instance_id!r}")
    declared = list(graph.instances[instance_id].types)
    closure = _bfs_ancestors(declared, lambda n: graph.classes[n].superclasses)
    return declared + [c for c in closure if c not in declared]


def domain_of(graph: OntologyGraph, prop: NodeId) -> NodeId | None:
    """Stored domain constraint of a property (not an ancestor of it)."""
    if prop not in graph.properties:
        raise UnknownNodeError(f"unknown property {prop!r}")
    return graph.properties[prop].domain


def range_of(graph: OntologyGraph, prop: NodeId) -> NodeId | None:
    """Stored range constraint of a property."""
    if prop not in graph.properties:
        raise UnknownNodeError(f"unknown property {prop!r}")
    return graph.properties[prop].range


def class_depth(graph: OntologyGraph, node_id: NodeId) -> int:
    """Longest superclass-chain length above the class; roots have depth 0."""
    memo: dict[NodeId, int] = {}

    def depth(node: NodeId) -> int:
        if node in memo:
            return memo[node]
        supers = graph.classes[node].superclasses
        memo[node] = 0 if not supers else 1 + max(depth(s) for s in supers)
        return memo[node]

    return depth(node_id)
