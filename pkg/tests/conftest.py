import pytest

from ontocloze import runio
from ontocloze.ontology import load_graph


@pytest.fixture(scope="session")
def toy_graph():
    return load_graph(runio.bundled_data("toy.tsv"))


@pytest.fixture(scope="session")
def oracle_graph():
    return load_graph(runio.bundled_data("oracle.tsv"))
