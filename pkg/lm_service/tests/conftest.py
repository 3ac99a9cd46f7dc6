import pytest

from lm_service.service import MaskedLmService, ServiceConfig

TOY_WORDS = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    ".", ",", "?", "(", ")",
    "a", "an", "b", "c", "d", "e", "the", "is", "to", "of", "at", "be", "have", "has",
    "one", "that", "what", "person", "animal", "woman", "man", "place", "event", "work",
    "team", "sports", "lionel", "messi", "particular", "implies", "class", "therefore",
    "member", "player", "type", "##s", "##er",
]


@pytest.fixture(scope="session")
def vocab_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("vocab") / "vocab.txt"
    path.write_text("\n".join(TOY_WORDS) + "\n")
    return str(path)


@pytest.fixture(scope="session")
def service(vocab_file):
    return MaskedLmService.from_config(ServiceConfig(toy_vocab=vocab_file, toy_seed=7))
