import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontocloze.evaluation import (
    EvaluationError,
    classify_premises,
    compute_metrics,
    frequency_baseline,
    grade_answer,
    multiple_choice_accuracy,
)
from ontocloze.memorize import MemorizingSample, to_multiple_choice


def naive_metrics(results, ks):
    """Independent reimplementation with explicit loops over rank lists."""
    n = len(results)
    out = {}
    for k in ks:
        hits = 0
        for record in results:
            if any(rank <= k for rank in record["gold_ranks"].values()):
                hits += 1
        out[f"R@{k}"] = hits / n
    total = 0.0
    for record in results:
        best = None
        for rank in record["gold_ranks"].values():
            if best is None or rank < best:
                best = rank
        total += 1.0 / best
    out["MRR"] = total / n
    total = 0.0
    for record in results:
        ranks = list(record["gold_ranks"].values())
        total += 1.0 / (sum(ranks) / len(ranks))
    out["MRR_a"] = total / n
    return out


def random_results(rng, count, n_candidates=50):
    results = []
    for i in range(count):
        n_golds = rng.randint(1, 5)
        ranks = rng.sample(range(1, n_candidates + 1), n_golds)
        results.append({
            "input_id": f"r{i}",
            "gold_ranks": {f"g{j}": rank for j, rank in enumerate(ranks)},
        })
    return results


def test_two_gold_example():
    report = compute_metrics([{"gold_ranks": {"a": 2, "b": 4}}])
    assert report.mrr == pytest.approx(0.5)
    assert report.mrr_a == pytest.approx(1 / 3)
    assert report.recall[1] == 0.0
    assert report.recall[5] == 1.0


def test_all_golds_first():
    report = compute_metrics([{"gold_ranks": {"a": 1}}, {"gold_ranks": {"b": 1}}])
    assert report.recall[1] == report.recall[5] == report.mrr == report.mrr_a == 1.0


def test_matches_naive_scorer_on_random_lists():
    rng = random.Random(123)
    results = random_results(rng, 200)
    ks = (1, 3, 5, 10)
    report = compute_metrics(results, ks).as_dict()
    expected = naive_metrics(results, ks)
    for key, value in expected.items():
        assert abs(report[key] - value) < 1e-12, key
    assert report["MRR_a"] <= report["MRR"]


def test_empty_results_error():
    with pytest.raises(EvaluationError):
        compute_metrics([])


def test_error_record_rejected():
    with pytest.raises(EvaluationError):
        compute_metrics([{"input_id": "x", "error": "boom"}])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_mrr_a_never_exceeds_mrr(seed):
    rng = random.Random(seed)
    results = random_results(rng, rng.randint(1, 30))
    report = compute_metrics(results)
    assert report.mrr_a <= report.mrr + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_recall_monotone_in_k(seed):
    rng = random.Random(seed)
    results = random_results(rng, rng.randint(1, 30))
    report = compute_metrics(results, ks=(1, 2, 5, 10, 50))
    values = [report.recall[k] for k in (1, 2, 5, 10, 50)]
    assert values == sorted(values)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_improving_a_rank_never_hurts(seed):
    rng = random.Random(seed)
    results = random_results(rng, rng.randint(1, 20))
    record = rng.choice(results)
    gold = rng.choice(list(record["gold_ranks"]))
    if record["gold_ranks"][gold] == 1:
        return
    before = compute_metrics(results)
    record["gold_ranks"][gold] -= 1
    after = compute_metrics(results)
    assert after.mrr >= before.mrr - 1e-12
    assert after.mrr_a >= before.mrr_a - 1e-12


def mem_sample(subtask, subject, golds, candidates, split):
    return MemorizingSample(subtask=subtask, subject_id=subject, subject_label=subject,
                            golds=tuple(golds), candidates=tuple(candidates), split=split)


VOCAB = ("person", "animal", "place", "event", "work")


def test_frequency_head_order():
    train = (
        [mem_sample("TP", f"s{i}", ["person"], VOCAB, "train") for i in range(6)]
        + [mem_sample("TP", f"t{i}", ["animal"], VOCAB, "train") for i in range(3)]
    )
    test = [mem_sample("TP", "x", ["person"], VOCAB, "test")]
    (record,) = frequency_baseline(train, test, seed=0)
    assert record["prediction"][:2] == ["person", "animal"]
    assert record["gold_ranks"]["person"] == 1


def test_frequency_tie_breaks_by_first_occurrence():
    train = [
        mem_sample("TP", "a", ["animal"], VOCAB, "train"),
        mem_sample("TP", "b", ["person"], VOCAB, "train"),
    ]
    test = [mem_sample("TP", "x", ["person"], VOCAB, "test")]
    (record,) = frequency_baseline(train, test, seed=0)
    assert record["prediction"][:2] == ["animal", "person"]


def test_frequency_hand_computed_mrr():
    # Train golds: person x2, animal x1 -> head [person, animal]; test golds
    # rank person at 1 and place somewhere in the shuffled tail (>= 3).
    train = [
        mem_sample("TP", "a", ["person"], VOCAB, "train"),
        mem_sample("TP", "b", ["person", "animal"], VOCAB, "train"),
    ]
    test = [
        mem_sample("TP", "x", ["person"], VOCAB, "test"),
        mem_sample("TP", "y", ["animal"], VOCAB, "test"),
        mem_sample("TP", "z", ["place"], VOCAB, "test"),
    ]
    records = frequency_baseline(train, test, seed=7)
    report = compute_metrics(records)
    place_rank = records[2]["gold_ranks"]["place"]
    assert place_rank >= 3
    assert report.mrr == pytest.approx((1.0 + 0.5 + 1.0 / place_rank) / 3)


def test_frequency_invariant_to_test_order():
    train = [mem_sample("TP", "a", ["person"], VOCAB, "train")]
    test = [
        mem_sample("TP", "x", ["person"], VOCAB, "test"),
        mem_sample("TP", "y", ["animal"], VOCAB, "test"),
        mem_sample("TP", "z", ["place"], VOCAB, "test"),
    ]
    forward = {r["input_id"]: r for r in frequency_baseline(train, test, seed=3)}
    backward = {r["input_id"]: r for r in frequency_baseline(train, test[::-1], seed=3)}
    assert forward == backward


def test_frequency_requires_training_data():
    with pytest.raises(EvaluationError):
        frequency_baseline([], [mem_sample("TP", "x", ["person"], VOCAB, "test")], seed=0)


def test_classify_half_split():
    verdicts = classify_premises({"p1": 1.0, "p2": 0.5, "p3": 0.2, "p4": 0.1})
    assert [v.premise_id for v in verdicts] == ["p1", "p2", "p3", "p4"]
    assert [v.memorized for v in verdicts] == [True, True, False, False]


def test_classify_singleton_not_memorized():
    (verdict,) = classify_premises({"only": 0.9})
    assert not verdict.memorized


def test_classify_boundary_ties_by_id():
    verdicts = classify_premises({"b": 0.5, "a": 0.5, "c": 0.5, "d": 0.5})
    assert [v.premise_id for v in verdicts] == ["a", "b", "c", "d"]
    assert [v.memorized for v in verdicts] == [True, True, False, False]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=0.001, max_value=1.0), min_size=1, max_size=40))
def test_classify_marks_floor_half(ranks):
    entries = {f"p{i}": rr for i, rr in enumerate(ranks)}
    verdicts = classify_premises(entries)
    assert sum(v.memorized for v in verdicts) == len(ranks) // 2
    rrs = [v.reciprocal_rank for v in verdicts]
    assert rrs == sorted(rrs, reverse=True)


def test_missing_rank_rejected():
    with pytest.raises(EvaluationError):
        classify_premises({"p": None})


def test_grade_answer_parsing():
    assert grade_answer("(c) person", 20) == "c"
    assert grade_answer("The answer is b", 20) == "b"
    assert grade_answer("I think the answer is (A).", 20) == "a"
    assert grade_answer("no idea at all!", 4) is None
    assert grade_answer("(z) something", 4) is None


def test_multiple_choice_accuracy_counts_unparseable_as_wrong():
    sample = mem_sample("TP", "x", ["person"], VOCAB, "test")
    question = to_multiple_choice(sample, n_choices=3, seed=0)
    right = f"({question.answer_letter})"
    wrong_letter = next(l for l in "abc" if l != question.answer_letter)
    accuracy, unparsed = multiple_choice_accuracy(
        [question, question, question], [right, f"({wrong_letter})", "???"])
    assert accuracy == pytest.approx(1 / 3)
    assert unparsed == 1
