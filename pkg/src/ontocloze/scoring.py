"""Candidate scoring over masked prompts: multi/single mask, pooled log-probs.

Multiple-mask mode sends one prompt per distinct candidate token count, so
all length-n candidates share a single n-mask backend call.  Single-mask
mode reads every composing token from the same one-mask distribution.
Ranking sorts by pooled score descending with stable ties in candidate
input order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ontocloze import runio
from ontocloze.backend import Backend, BackendError
from ontocloze.prompting import ClozePrompt, Segment

MASK_MODES = ("multiple", "single")
POOLINGS = ("mean", "max", "first")


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class ScoringConfig:
    mask_mode: str = "multiple"
    pooling: str = "mean"

    def __post_init__(self):
        if self.mask_mode not in MASK_MODES:
            raise ScoringError(f"mask_mode must be one of {MASK_MODES}")
        if self.pooling not in POOLINGS:
            raise ScoringError(f"pooling must be one of {POOLINGS}")

    def label(self) -> str:
        return f"{self.mask_mode}/{self.pooling}"


@dataclass(frozen=True)
class TokenizedCandidate:
    surface: str
    token_ids: tuple[int, ...]
    pieces: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.pieces)


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: TokenizedCandidate
    per_token_logprobs: tuple[float, ...]
    score: float
    rank: int


def pool(values: Sequence[float], pooling: str) -> float:
    if not values:
        raise ScoringError("cannot pool an empty log-prob list")
    if pooling == "mean":
        return sum(values) / len(values)
    if pooling == "max":
        return max(values)
    if pooling == "first":
        return values[0]
    raise ScoringError(f"unknown pooling {pooling!r}")


def with_mask_count(prompt: ClozePrompt, n: int) -> ClozePrompt:
    segments = tuple(
        Segment("mask", count=n) if seg.kind == "mask" else seg for seg in prompt.segments
    )
    return ClozePrompt(segments=segments, mask_count=n)


def tokenize_candidates(candidates: Sequence[str], backend: Backend,
                        lowercase: bool = False,
                        cache: dict[str, TokenizedCandidate] | None = None
                        ) -> list[TokenizedCandidate]:
    out = []
    for surface in candidates:
        normalized = surface.lower() if lowercase else surface
        if cache is not None and normalized in cache:
            tokenized = cache[normalized]
        else:
            ids, pieces = backend.tokenize(normalized)
            if not pieces:
                raise ScoringError(f"candidate {surface!r} tokenized to zero tokens")
            tokenized = TokenizedCandidate(surface=surface, token_ids=tuple(ids),
                                           pieces=tuple(pieces))
            if cache is not None:
                cache[normalized] = tokenized
        out.append(TokenizedCandidate(surface=surface, token_ids=tokenized.token_ids,
                                      pieces=tokenized.pieces))
    return out


def score_candidates(prompt: ClozePrompt, candidates: Sequence[str], config: ScoringConfig,
                     backend: Backend,
                     bindings: Mapping[str, Sequence[float]] | None = None,
                     lowercase: bool = False,
                     cache: dict[str, TokenizedCandidate] | None = None
                     ) -> list[ScoredCandidate]:
    """Score and rank candidate surfaces for one masked prompt."""
    if not candidates:
        raise ScoringError("candidate list is empty")
    tokenized = tokenize_candidates(candidates, backend, lowercase=lowercase, cache=cache)

    logprob_of: dict[int, tuple[float, ...]] = {}
    if config.mask_mode == "multiple":
        by_length: dict[int, list[int]] = {}
        for i, cand in enumerate(tokenized):
            by_length.setdefault(cand.n, []).append(i)
        for n, indices in sorted(by_length.items()):
            queries = []
            for position in range(n):
                seen = dict.fromkeys(tokenized[i].pieces[position] for i in indices)
                queries.append(list(seen))
            table = backend.logprobs(with_mask_count(prompt, n), queries, bindings)
            for i in indices:
                cand = tokenized[i]
                logprob_of[i] = tuple(table[pos][cand.pieces[pos]] for pos in range(n))
    else:
        seen = dict.fromkeys(piece for cand in tokenized for piece in cand.pieces)
        table = backend.logprobs(with_mask_count(prompt, 1), [list(seen)], bindings)
        for i, cand in enumerate(tokenized):
            logprob_of[i] = tuple(table[0][piece] for piece in cand.pieces)

    scored = [
        (pool(logprob_of[i], config.pooling), i, cand) for i, cand in enumerate(tokenized)
    ]
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [
        ScoredCandidate(candidate=cand, per_token_logprobs=logprob_of[i],
                        score=score, rank=rank)
        for rank, (score, i, cand) in enumerate(scored, start=1)
    ]


@dataclass(frozen=True)
class ProbeInput:
    input_id: str
    prompt: ClozePrompt
    candidates: tuple[str, ...]
    golds: tuple[str, ...]
    bindings: Mapping[str, Sequence[float]] | None = None


def result_record(probe: ProbeInput, ranked: Sequence[ScoredCandidate],
                  config: ScoringConfig) -> dict:
    gold_ranks = {}
    by_surface = {s.candidate.surface: s.rank for s in ranked}
    for gold in probe.golds:
        if gold not in by_surface:
            raise ScoringError(f"gold {gold!r} missing from candidates of {probe.input_id}")
        gold_ranks[gold] = by_surface[gold]
    return {
        "input_id": probe.input_id,
        "config": {"mask_mode": config.mask_mode, "pooling": config.pooling},
        "golds": list(probe.golds),
        "gold_ranks": gold_ranks,
        "candidates": [
            {"surface": s.candidate.surface, "score": s.score, "rank": s.rank,
             "token_logprobs": list(s.per_token_logprobs)}
            for s in ranked
        ],
    }


def batch_probe(inputs: Iterable[ProbeInput], config: ScoringConfig, backend: Backend,
                journal_path: str | Path | None = None,
                lowercase: bool = False) -> list[dict]:
    """Score a stream of probe inputs, resumable through an append-only journal.

    Already-journaled input ids are not re-scored; backend failures produce
    error records instead of dropping the input.
    """
    done: dict[str, dict] = {}
    journal = None
    if journal_path is not None:
        journal_path = Path(journal_path)
        if journal_path.exists():
            with open(journal_path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        record = json.loads(line)
                        done[record["input_id"]] = record
        journal = open(journal_path, "a", encoding="utf-8")

    cache: dict[str, TokenizedCandidate] = {}
    results = []
    try:
        for probe in inputs:
            if probe.input_id in done:
                results.append(done[probe.input_id])
                continue
            try:
                ranked = score_candidates(probe.prompt, probe.candidates, config, backend,
                                          bindings=probe.bindings, lowercase=lowercase,
                                          cache=cache)
                record = result_record(probe, ranked, config)
            except BackendError as exc:
                record = {"input_id": probe.input_id, "error": str(exc),
                          "config": {"mask_mode": config.mask_mode,
                                     "pooling": config.pooling}}
            if journal is not None:
                journal.write(runio.dumps(record) + "\n")
                journal.flush()
            done[probe.input_id] = record
            results.append(record)
    finally:
        if journal is not None:
            journal.close()
    return results
