"""Pseudoword embeddings: vectors at a calibrated distance from [MASK].

The sampling distance is ``d = alpha * min_t ||z_t - z_[MASK]||`` over the
non-mask vocabulary.  Vectors are drawn as ``z_[MASK] + d*u`` with ``u``
uniform on the unit sphere (or uniform in the ball with ``mode="ball"``),
rejected until all pairwise distances are at least ``d``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MASK_TOKEN = "[MASK]"

_EMBT_MAGIC = b"EMBT\x01"
_PSWD_MAGIC = b"PSWD\x01"


class PseudowordError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (vocab, dim) float32
    mask_token: str = MASK_TOKEN

    def __post_init__(self):
        if self.vectors.ndim != 2 or len(self.tokens) != self.vectors.shape[0]:
            raise PseudowordError("vector matrix must have one row per token")
        if not np.isfinite(self.vectors).all():
            raise PseudowordError("embedding table contains non-finite values")
        if self.mask_token not in self.tokens:
            raise PseudowordError(f"mask token {self.mask_token!r} missing from table")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def mask_vector(self) -> np.ndarray:
        return self.vectors[self.tokens.index(self.mask_token)]


def _write_str(handle, text: str) -> None:
    raw = text.encode("utf-8")
    handle.write(struct.pack("<H", len(raw)))
    handle.write(raw)


def _read_str(handle) -> str:
    (length,) = struct.unpack("<H", handle.read(2))
    return handle.read(length).decode("utf-8")


def save_embedding_table(table: EmbeddingTable, path: str | Path) -> None:
    """Binary layout: magic, vocab size, dim, mask token, then (token, row) pairs."""
    with open(path, "wb") as handle:
        handle.write(_EMBT_MAGIC)
        handle.write(struct.pack("<II", len(table.tokens), table.dim))
        _write_str(handle, table.mask_token)
        rows = table.vectors.astype("<f4")
        for token, row in zip(table.tokens, rows):
            _write_str(handle, token)
            handle.write(row.tobytes())


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    with open(path, "rb") as handle:
        magic = handle.read(len(_EMBT_MAGIC))
        if magic != _EMBT_MAGIC:
            raise PseudowordError(f"{path}: not an embedding table file")
        vocab, dim = struct.unpack("<II", handle.read(8))
        mask_token = _read_str(handle)
        tokens = []
        rows = np.empty((vocab, dim), dtype=np.float32)
        for i in range(vocab):
            tokens.append(_read_str(handle))
            rows[i] = np.frombuffer(handle.read(4 * dim), dtype="<f4")
    return EmbeddingTable(tokens=tuple(tokens), vectors=rows, mask_token=mask_token)


def sampling_distance(table: EmbeddingTable, alpha: float) -> float:
    """alpha times the minimum L2 distance between [MASK] and any other token."""
    if not 0 < alpha < 1:
        raise PseudowordError(f"alpha must lie in (0, 1), got {alpha}")
    mask_index = table.tokens.index(table.mask_token)
    rows = table.vectors.astype(np.float64)
    deltas = np.delete(rows, mask_index, axis=0) - rows[mask_index]
    if deltas.shape[0] == 0:
        raise PseudowordError("table has no tokens besides the mask")
    minimum = float(np.linalg.norm(deltas, axis=1).min())
    if minimum == 0.0:
        raise PseudowordError("degenerate table: another token sits exactly on [MASK]")
    return alpha * minimum


@dataclass(frozen=True)
class PseudowordSet:
    vectors: np.ndarray  # (count, dim) float64
    distance: float
    alpha: float
    seed: int
    mode: str = "sphere"

    @property
    def count(self) -> int:
        return int(self.vectors.shape[0])

    def pair(self, index: int) -> dict[str, np.ndarray]:
        """Bindings for pseudoword slots X/Y from consecutive vectors."""
        if 2 * index + 1 >= self.count:
            raise PseudowordError(f"pair {index} needs {2 * index + 2} vectors, have {self.count}")
        return {"X": self.vectors[2 * index], "Y": self.vectors[2 * index + 1]}

    @property
    def pair_count(self) -> int:
        return self.count // 2


def sample_pseudowords(table: EmbeddingTable, count: int, alpha: float, seed: int,
                       mode: str = "sphere", max_tries_per_vector: int = 1000
                       ) -> PseudowordSet:
    """Sample ``count`` pseudoword vectors around the mask embedding."""
    if count < 1:
        raise PseudowordError("count must be >= 1")
    if mode not in ("sphere", "ball"):
        raise PseudowordError(f"mode must be sphere or ball, got {mode!r}")
    distance = sampling_distance(table, alpha)
    center = table.mask_vector().astype(np.float64)
    rng = np.random.default_rng(seed)
    accepted: list[np.ndarray] = []
    budget = count * max_tries_per_vector
    tries = 0
    while len(accepted) < count:
        if tries >= budget:
            raise PseudowordError(
                f"rejection budget of {budget} draws exhausted after {len(accepted)}/{count} "
                f"vectors; the dimension is too small for this count at distance {distance:.4g}"
            )
        tries += 1
        direction = rng.standard_normal(table.dim)
        direction /= np.linalg.norm(direction)
        radius = distance if mode == "sphere" else distance * rng.random() ** (1.0 / table.dim)
        vector = center + radius * direction
        if all(np.linalg.norm(vector - prev) >= distance for prev in accepted):
            accepted.append(vector)
    return PseudowordSet(vectors=np.stack(accepted), distance=distance, alpha=alpha,
                         seed=seed, mode=mode)


def save_pseudowords(pwset: PseudowordSet, path: str | Path) -> None:
    with open(path, "wb") as handle:
        handle.write(_PSWD_MAGIC)
        handle.write(struct.pack("<II", pwset.count, pwset.vectors.shape[1]))
        handle.write(struct.pack("<ddq", pwset.distance, pwset.alpha, pwset.seed))
        _write_str(handle, pwset.mode)
        handle.write(pwset.vectors.astype("<f8").tobytes())


def load_pseudowords(path: str | Path) -> PseudowordSet:
    with open(path, "rb") as handle:
        magic = handle.read(len(_PSWD_MAGIC))
        if magic != _PSWD_MAGIC:
            raise PseudowordError(f"{path}: not a pseudoword set file")
        count, dim = struct.unpack("<II", handle.read(8))
        distance, alpha, seed = struct.unpack("<ddq", handle.read(24))
        mode = _read_str(handle)
        vectors = np.frombuffer(handle.read(8 * count * dim), dtype="<f8").reshape(count, dim)
    return PseudowordSet(vectors=vectors.copy(), distance=distance, alpha=alpha,
                         seed=int(seed), mode=mode)


def synthetic_table(vocab: Sequence[str], dim: int, seed: int,
                    mask_token: str = MASK_TOKEN) -> EmbeddingTable:
    """Random table for tests and mock-backed runs; mask token prepended."""
    rng = np.random.default_rng(seed)
    tokens = (mask_token, *vocab)
    vectors = rng.standard_normal((len(tokens), dim)).astype(np.float32)
    return EmbeddingTable(tokens=tokens, vectors=vectors, mask_token=mask_token)


_SOFT_MAGIC = b"SOFT\x01"


def save_soft_checkpoint(vectors: "dict[str, np.ndarray]", path: str | Path,
                         init_note: str = "") -> None:
    """Soft-token checkpoint: placeholder-id-keyed float32 vectors.

    Layout: magic, u32 dim, u32 count, init-note string, then
    (placeholder id, dim x f32) entries. Shared with the serving backend.
    """
    if not vectors:
        raise PseudowordError("soft checkpoint needs at least one vector")
    dims = {np.asarray(v).shape[-1] for v in vectors.values()}
    if len(dims) != 1:
        raise PseudowordError(f"soft vectors disagree on dimension: {sorted(dims)}")
    (dim,) = dims
    with open(path, "wb") as handle:
        handle.write(_SOFT_MAGIC)
        handle.write(struct.pack("<II", dim, len(vectors)))
        _write_str(handle, init_note)
        for name, vector in vectors.items():
            _write_str(handle, name)
            handle.write(np.asarray(vector, dtype="<f4").tobytes())


def load_soft_checkpoint(path: str | Path) -> "tuple[dict[str, np.ndarray], str]":
    with open(path, "rb") as handle:
        magic = handle.read(len(_SOFT_MAGIC))
        if magic != _SOFT_MAGIC:
            raise PseudowordError(f"{path}: not a soft checkpoint file")
        dim, count = struct.unpack("<II", handle.read(8))
        init_note = _read_str(handle)
        vectors = {}
        for _ in range(count):
            name = _read_str(handle)
            vectors[name] = np.frombuffer(handle.read(4 * dim), dtype="<f4").copy()
    return vectors, init_note
