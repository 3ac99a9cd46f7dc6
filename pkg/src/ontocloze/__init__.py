"""Ontology-driven cloze probing toolkit for masked language models."""

from ontocloze.ontology import (
    OntologyGraph,
    load_graph,
    save_graph,
    graph_hash,
    ancestors,
    domain_of,
    range_of,
)

__all__ = [
    "OntologyGraph",
    "load_graph",
    "save_graph",
    "graph_hash",
    "ancestors",
    "domain_of",
    "range_of",
]

__version__ = "0.1.0"
