import numpy as np
import pytest

from ontocloze.pseudowords import (
    EmbeddingTable,
    PseudowordError,
    load_embedding_table,
    load_pseudowords,
    sample_pseudowords,
    sampling_distance,
    save_embedding_table,
    save_pseudowords,
    synthetic_table,
)


def table_with_rows(rows, tokens=None):
    rows = np.asarray(rows, dtype=np.float32)
    tokens = tokens or ["[MASK]"] + [f"t{i}" for i in range(rows.shape[0] - 1)]
    return EmbeddingTable(tokens=tuple(tokens), vectors=rows)


def exhaustive_min_distance(table):
    mask = table.mask_vector().astype(np.float64)
    best = None
    for token, row in zip(table.tokens, table.vectors):
        if token == table.mask_token:
            continue
        dist = float(np.linalg.norm(row.astype(np.float64) - mask))
        best = dist if best is None else min(best, dist)
    return best


def test_distance_formula():
    table = table_with_rows([[0.0, 0.0], [2.0, 0.0], [0.0, 5.0]])
    assert sampling_distance(table, 0.5) == pytest.approx(1.0)


def test_distance_excludes_mask_itself():
    table = table_with_rows([[1.0, 1.0], [1.0, 4.0]])
    assert sampling_distance(table, 0.5) == pytest.approx(1.5)


def test_distance_matches_exhaustive_scan():
    table = synthetic_table([f"w{i}" for i in range(5)], dim=8, seed=3)
    assert sampling_distance(table, 0.5) == pytest.approx(0.5 * exhaustive_min_distance(table))


def test_alpha_bounds():
    table = synthetic_table(["a"], dim=4, seed=0)
    for alpha in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(PseudowordError):
            sampling_distance(table, alpha)


def test_degenerate_table_rejected():
    table = table_with_rows([[1.0, 2.0], [1.0, 2.0]])
    with pytest.raises(PseudowordError):
        sampling_distance(table, 0.5)


@pytest.mark.parametrize("dim", [8, 64, 768])
def test_sampled_geometry(dim):
    table = synthetic_table([f"w{i}" for i in range(20)], dim=dim, seed=dim)
    pwset = sample_pseudowords(table, count=20, alpha=0.5, seed=42)
    mask = table.mask_vector().astype(np.float64)
    d = pwset.distance
    assert d == pytest.approx(sampling_distance(table, 0.5))
    for vector in pwset.vectors:
        assert abs(np.linalg.norm(vector - mask) - d) <= 1e-6 * d
    for i in range(pwset.count):
        for j in range(i + 1, pwset.count):
            assert np.linalg.norm(pwset.vectors[i] - pwset.vectors[j]) >= d


def test_single_vector():
    table = synthetic_table(["a", "b"], dim=16, seed=1)
    pwset = sample_pseudowords(table, count=1, alpha=0.5, seed=0)
    mask = table.mask_vector().astype(np.float64)
    assert np.linalg.norm(pwset.vectors[0] - mask) == pytest.approx(pwset.distance)


def test_determinism_per_seed():
    table = synthetic_table([f"w{i}" for i in range(10)], dim=32, seed=5)
    a = sample_pseudowords(table, count=6, alpha=0.5, seed=9)
    b = sample_pseudowords(table, count=6, alpha=0.5, seed=9)
    c = sample_pseudowords(table, count=6, alpha=0.5, seed=10)
    assert np.array_equal(a.vectors, b.vectors)
    assert not np.array_equal(a.vectors, c.vectors)


def test_budget_exhaustion_names_budget():
    table = synthetic_table(["a", "b"], dim=2, seed=2)
    with pytest.raises(PseudowordError) as exc:
        sample_pseudowords(table, count=40, alpha=0.9, seed=0, max_tries_per_vector=50)
    assert "budget" in str(exc.value)
    assert "2000" in str(exc.value)


def test_ball_mode_within_distance():
    table = synthetic_table([f"w{i}" for i in range(6)], dim=24, seed=8)
    pwset = sample_pseudowords(table, count=4, alpha=0.5, seed=3, mode="ball")
    mask = table.mask_vector().astype(np.float64)
    for vector in pwset.vectors:
        assert np.linalg.norm(vector - mask) <= pwset.distance + 1e-12


def test_pair_bindings():
    table = synthetic_table([f"w{i}" for i in range(8)], dim=16, seed=4)
    pwset = sample_pseudowords(table, count=6, alpha=0.5, seed=1)
    assert pwset.pair_count == 3
    bindings = pwset.pair(1)
    assert np.array_equal(bindings["X"], pwset.vectors[2])
    assert np.array_equal(bindings["Y"], pwset.vectors[3])
    with pytest.raises(PseudowordError):
        pwset.pair(3)


def test_embedding_table_roundtrip(tmp_path):
    table = synthetic_table(["alpha", "beta"], dim=12, seed=6)
    path = tmp_path / "table.embt"
    save_embedding_table(table, path)
    loaded = load_embedding_table(path)
    assert loaded.tokens == table.tokens
    assert loaded.mask_token == table.mask_token
    assert np.array_equal(loaded.vectors, table.vectors)


def test_pseudoword_set_roundtrip(tmp_path):
    table = synthetic_table([f"w{i}" for i in range(6)], dim=16, seed=7)
    pwset = sample_pseudowords(table, count=4, alpha=0.5, seed=11)
    path = tmp_path / "pws.bin"
    save_pseudowords(pwset, path)
    loaded = load_pseudowords(path)
    assert np.array_equal(loaded.vectors, pwset.vectors)
    assert loaded.distance == pwset.distance
    assert loaded.alpha == pwset.alpha
    assert loaded.seed == pwset.seed
    assert loaded.mode == pwset.mode


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" * 4)
    with pytest.raises(PseudowordError):
        load_embedding_table(path)
    with pytest.raises(PseudowordError):
        load_pseudowords(path)


def test_nonfinite_table_rejected():
    rows = np.array([[0.0, np.inf], [1.0, 2.0]], dtype=np.float32)
    with pytest.raises(PseudowordError):
        EmbeddingTable(tokens=("[MASK]", "a"), vectors=rows)


def test_soft_checkpoint_roundtrip(tmp_path):
    from ontocloze.pseudowords import load_soft_checkpoint, save_soft_checkpoint

    vectors = {"s1": np.arange(8, dtype=np.float32), "s2": np.ones(8, dtype=np.float32)}
    path = tmp_path / "soft.bin"
    save_soft_checkpoint(vectors, path, init_note="normal*0.02")
    loaded, note = load_soft_checkpoint(path)
    assert note == "normal*0.02"
    assert set(loaded) == {"s1", "s2"}
    assert np.array_equal(loaded["s1"], vectors["s1"])


def test_soft_checkpoint_dimension_check(tmp_path):
    from ontocloze.pseudowords import PseudowordError, save_soft_checkpoint

    with pytest.raises(PseudowordError):
        save_soft_checkpoint({"s1": np.ones(4), "s2": np.ones(5)}, tmp_path / "x.bin")
