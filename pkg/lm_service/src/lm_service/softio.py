"""Binary formats shared with the probing toolkit: embedding tables and
soft-token checkpoints.

Embedding table (EMBT): magic ``EMBT\\x01``, u32 vocab size, u32 dim,
mask-token string, then (token string, dim x little-endian f32) rows.
Soft checkpoint (SOFT): magic ``SOFT\\x01``, u32 dim, u32 count,
init-note string, then (placeholder id, dim x f32) entries.
Strings are u16 length + UTF-8 bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

EMBT_MAGIC = b"EMBT\x01"
SOFT_MAGIC = b"SOFT\x01"


class FormatError(ValueError):
    pass


def _write_str(handle, text: str) -> None:
    raw = text.encode("utf-8")
    handle.write(struct.pack("<H", len(raw)))
    handle.write(raw)


def _read_str(handle) -> str:
    (length,) = struct.unpack("<H", handle.read(2))
    return handle.read(length).decode("utf-8")


def write_embedding_table(path: str | Path, tokens: Sequence[str], vectors: np.ndarray,
                          mask_token: str = "[MASK]") -> None:
    vectors = np.asarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
        raise FormatError("need one vector row per token")
    with open(path, "wb") as handle:
        handle.write(EMBT_MAGIC)
        handle.write(struct.pack("<II", len(tokens), vectors.shape[1]))
        _write_str(handle, mask_token)
        for token, row in zip(tokens, vectors):
            _write_str(handle, token)
            handle.write(row.tobytes())


def read_embedding_table(path: str | Path) -> tuple[list[str], np.ndarray, str]:
    with open(path, "rb") as handle:
        if handle.read(len(EMBT_MAGIC)) != EMBT_MAGIC:
            raise FormatError(f"{path}: not an embedding table file")
        vocab, dim = struct.unpack("<II", handle.read(8))
        mask_token = _read_str(handle)
        tokens = []
        rows = np.empty((vocab, dim), dtype=np.float32)
        for i in range(vocab):
            tokens.append(_read_str(handle))
            rows[i] = np.frombuffer(handle.read(4 * dim), dtype="<f4")
    return tokens, rows, mask_token


def write_soft_checkpoint(path: str | Path, vectors: dict[str, np.ndarray],
                          init_note: str = "") -> None:
    if not vectors:
        raise FormatError("soft checkpoint needs at least one vector")
    dims = {np.asarray(v).shape[-1] for v in vectors.values()}
    if len(dims) != 1:
        raise FormatError(f"soft vectors disagree on dimension: {sorted(dims)}")
    (dim,) = dims
    with open(path, "wb") as handle:
        handle.write(SOFT_MAGIC)
        handle.write(struct.pack("<II", dim, len(vectors)))
        _write_str(handle, init_note)
        for name, vector in vectors.items():
            _write_str(handle, name)
            handle.write(np.asarray(vector, dtype="<f4").tobytes())


def read_soft_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], str]:
    with open(path, "rb") as handle:
        if handle.read(len(SOFT_MAGIC)) != SOFT_MAGIC:
            raise FormatError(f"{path}: not a soft checkpoint file")
        dim, count = struct.unpack("<II", handle.read(8))
        init_note = _read_str(handle)
        vectors = {}
        for _ in range(count):
            name = _read_str(handle)
            vectors[name] = np.frombuffer(handle.read(4 * dim), dtype="<f4").copy()
    return vectors, init_note
