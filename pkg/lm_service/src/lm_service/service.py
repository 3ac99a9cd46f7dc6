"""Masked-LM scoring service: tokenize, per-mask log-probs, embeddings.

Prompts arrive as wire segments (text, mask slots, soft placeholders,
pseudoword slots).  Soft and pseudoword vectors are injected at the
embedding layer: placeholder positions carry the mask token id, and their
rows in ``inputs_embeds`` are replaced before the encoder runs.  The model
stays in eval mode, so identical requests produce bit-identical floats.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import torch

from lm_service import softio


class ServiceError(RuntimeError):
    pass


@dataclass
class ServiceConfig:
    model: str | None = None
    device: str = "cpu"
    max_batch: int = 8
    soft_checkpoint: str | None = None
    toy_vocab: str | None = None
    toy_hidden: int = 32
    toy_layers: int = 2
    toy_heads: int = 2
    toy_seed: int = 0


def load_model(config: ServiceConfig):
    """Load a pretrained masked LM, or build a random toy one from a vocab file."""
    if config.toy_vocab:
        from transformers import BertConfig, BertForMaskedLM, BertTokenizer

        tokenizer = BertTokenizer(config.toy_vocab, do_lower_case=True)
        torch.manual_seed(config.toy_seed)
        model_config = BertConfig(
            vocab_size=len(tokenizer), hidden_size=config.toy_hidden,
            num_hidden_layers=config.toy_layers, num_attention_heads=config.toy_heads,
            intermediate_size=4 * config.toy_hidden, max_position_embeddings=128,
        )
        model = BertForMaskedLM(model_config)
        name = f"toy-bert-{config.toy_hidden}d"
    elif config.model:
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(config.model)
        model = AutoModelForMaskedLM.from_pretrained(config.model)
        name = config.model
    else:
        raise ServiceError("config needs either a model name or a toy vocab file")
    model.eval()
    model.to(config.device)
    return model, tokenizer, name


class MaskedLmService:
    """Request handlers behind the wire protocol."""

    def __init__(self, model, tokenizer, name: str, config: ServiceConfig | None = None):
        self.model = model
        self.tokenizer = tokenizer
        self.name = name
        self.config = config or ServiceConfig()
        self.device = next(model.parameters()).device
        if model.config.vocab_size != len(tokenizer):
            raise ServiceError(
                f"model vocab size {model.config.vocab_size} does not match tokenizer "
                f"size {len(tokenizer)}")
        self.soft_vectors: dict[str, np.ndarray] = {}
        if self.config.soft_checkpoint:
            vectors, _ = softio.read_soft_checkpoint(self.config.soft_checkpoint)
            self.load_soft_vectors(vectors)

    @classmethod
    def from_config(cls, config: ServiceConfig) -> "MaskedLmService":
        model, tokenizer, name = load_model(config)
        return cls(model, tokenizer, name, config)

    # -- introspection -----------------------------------------------------

    @property
    def vocab_size(self) -> int:
        return len(self.tokenizer)

    @property
    def dim(self) -> int:
        return int(self.model.get_input_embeddings().weight.shape[1])

    @property
    def casing(self) -> str:
        return "uncased" if getattr(self.tokenizer, "do_lower_case", False) else "cased"

    def handshake(self) -> dict:
        return {"kind": "handshake", "name": self.name, "vocab_size": self.vocab_size,
                "dim": self.dim, "casing": self.casing, "complete": True}

    def load_soft_vectors(self, vectors: Mapping[str, np.ndarray]) -> None:
        for name, vector in vectors.items():
            if np.asarray(vector).shape[-1] != self.dim:
                raise ServiceError(f"soft vector {name!r} has wrong dimension")
            self.soft_vectors[name] = np.asarray(vector, dtype=np.float32)

    # -- request handlers ----------------------------------------------------

    def tokenize(self, surface: str) -> tuple[list[int], list[str]]:
        if not surface.strip():
            raise ServiceError(f"cannot tokenize empty surface {surface!r}")
        pieces = self.tokenizer.tokenize(surface)
        if not pieces:
            raise ServiceError(f"surface {surface!r} produced no tokens")
        return self.tokenizer.convert_tokens_to_ids(pieces), pieces

    def _piece_id(self, piece: str) -> int:
        token_id = self.tokenizer.convert_tokens_to_ids(piece)
        unk = self.tokenizer.unk_token_id
        if token_id is None or (token_id == unk and piece != self.tokenizer.unk_token):
            raise ServiceError(f"unknown token {piece!r}")
        return token_id

    def _assemble(self, segments: Sequence[Mapping]) -> tuple[list[int], list[int],
                                                              list[tuple[int, np.ndarray]]]:
        """Token ids, mask positions, and (position, vector) embedding overrides."""
        mask_id = self.tokenizer.mask_token_id
        ids = [self.tokenizer.cls_token_id]
        mask_positions: list[int] = []
        overrides: list[tuple[int, np.ndarray]] = []
        for seg in segments:
            kind = seg.get("kind")
            if kind == "text":
                text = seg["text"].strip()
                if text:
                    ids.extend(self.tokenizer.convert_tokens_to_ids(
                        self.tokenizer.tokenize(text)))
            elif kind == "mask":
                count = int(seg["count"])
                if count < 1:
                    raise ServiceError("mask segment needs count >= 1")
                for _ in range(count):
                    mask_positions.append(len(ids))
                    ids.append(mask_id)
            elif kind == "soft":
                name = seg["id"]
                if name not in self.soft_vectors:
                    raise ServiceError(f"no soft vector loaded for placeholder {name!r}")
                overrides.append((len(ids), self.soft_vectors[name]))
                ids.append(mask_id)
            elif kind == "pseudo":
                vector = seg.get("vector")
                if vector is None:
                    raise ServiceError(
                        f"pseudoword slot {seg.get('id')!r} arrived without a vector")
                vector = np.asarray(vector, dtype=np.float32)
                if vector.shape != (self.dim,):
                    raise ServiceError(
                        f"pseudoword vector for {seg.get('id')!r} has shape {vector.shape}, "
                        f"expected ({self.dim},)")
                overrides.append((len(ids), vector))
                ids.append(mask_id)
            else:
                raise ServiceError(f"unknown segment kind {kind!r}")
        ids.append(self.tokenizer.sep_token_id)
        return ids, mask_positions, overrides

    def _mask_log_distributions(self, segments: Sequence[Mapping]) -> tuple[torch.Tensor,
                                                                            list[int]]:
        ids, mask_positions, overrides = self._assemble(segments)
        input_ids = torch.tensor([ids], dtype=torch.long, device=self.device)
        embeddings = self.model.get_input_embeddings()(input_ids)
        for position, vector in overrides:
            embeddings[0, position] = torch.from_numpy(vector).to(
                device=self.device, dtype=embeddings.dtype)
        attention = torch.ones_like(input_ids)
        with torch.no_grad():
            logits = self.model(inputs_embeds=embeddings, attention_mask=attention).logits
        log_probs = torch.log_softmax(logits[0].to(torch.float32), dim=-1)
        return log_probs, mask_positions

    def logprobs(self, segments: Sequence[Mapping],
                 queries: Sequence[Sequence[str]]) -> list[dict[str, float]]:
        log_probs, mask_positions = self._mask_log_distributions(segments)
        if len(mask_positions) != len(queries):
            raise ServiceError(
                f"prompt has {len(mask_positions)} masks but {len(queries)} query positions")
        out = []
        for position, position_queries in zip(mask_positions, queries):
            row = log_probs[position]
            out.append({piece: float(row[self._piece_id(piece)])
                        for piece in position_queries})
        return out

    def embeddings(self, tokens: Sequence[str] | None = None,
                   export_all: bool = False) -> tuple[list[str], np.ndarray]:
        weight = self.model.get_input_embeddings().weight.detach().cpu()
        weight = weight.to(torch.float32).numpy()
        if export_all or tokens is None:
            all_tokens = self.tokenizer.convert_ids_to_tokens(list(range(self.vocab_size)))
            return all_tokens, weight
        rows = np.stack([weight[self._piece_id(t)] for t in tokens])
        return list(tokens), rows

    def export_embeddings(self, path: str) -> int:
        tokens, rows = self.embeddings(export_all=True)
        softio.write_embedding_table(path, tokens, rows,
                                     mask_token=self.tokenizer.mask_token)
        return len(tokens)

    # -- multiple-choice adapter ---------------------------------------------

    _CHOICE_RE = re.compile(r"\(([a-z])\) ([^,]+?)(?=, \(|$)")

    def complete(self, prompt: str) -> str:
        """Answer a lettered multiple-choice prompt by mask-scoring each choice."""
        choices = [(m.group(1), m.group(2).strip())
                   for m in self._CHOICE_RE.finditer(prompt)]
        if not choices:
            raise ServiceError("complete prompt carries no lettered choices")
        stem = prompt[:prompt.index(f"({choices[0][0]})")].strip()
        best_letter, best_score = None, None
        for letter, choice in choices:
            pieces = self.tokenizer.tokenize(choice)
            if not pieces:
                continue
            segments = [{"kind": "text", "text": stem + " "},
                        {"kind": "mask", "count": len(pieces)},
                        {"kind": "text", "text": " ."}]
            table = self.logprobs(segments, [[p] for p in pieces])
            score = sum(row[p] for row, p in zip(table, pieces)) / len(pieces)
            if best_score is None or score > best_score:
                best_letter, best_score = letter, score
        return f"({best_letter})"
