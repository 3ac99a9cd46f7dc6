"""Soft-token training: tune placeholder embeddings with the model frozen.

Defaults follow the probing setup: AdamW, learning rate 0.5, 100 epochs,
linear warmup.  The training skeleton is a marker string ({subj}, {sN},
{mask}, optional {context}); only the {sN} vectors receive gradients.
Loss is BCE-with-logits over a multi-hot target of gold first tokens, or
NLL with one gold sampled per sample and epoch.  A non-finite loss aborts
the run and the last finite state is written out.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, field

import numpy as np
import torch

from lm_service import softio
from lm_service.service import MaskedLmService, ServiceError

_MARKER_RE = re.compile(r"(\{subj\}|\{context\}|\{mask\}|\{s[1-9]\})")


@dataclass
class TrainSample:
    subject_label: str
    golds: list[str]
    context: str | None = None


@dataclass
class TrainResult:
    checkpoint_path: str
    epochs_run: int
    final_loss: float | None
    aborted: bool = False
    losses: list[float] = field(default_factory=list)


def model_weights_digest(model) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def _skeleton_parts(skeleton: str) -> list[str]:
    parts = [p for p in _MARKER_RE.split(skeleton) if p]
    if sum(1 for p in parts if p == "{mask}") != 1:
        raise ServiceError(f"skeleton needs exactly one {{mask}}: {skeleton!r}")
    return parts


def _placeholders(skeleton: str) -> list[str]:
    return [p.strip("{}") for p in _skeleton_parts(skeleton) if re.fullmatch(r"\{s[1-9]\}", p)]


def train_soft_tokens(service: MaskedLmService, samples: list[TrainSample], skeleton: str,
                      out_path: str, loss: str = "bce", epochs: int = 100, lr: float = 0.5,
                      seed: int = 0, warmup_fraction: float = 0.1,
                      init: dict[str, np.ndarray] | None = None) -> TrainResult:
    if loss not in ("bce", "nll"):
        raise ServiceError(f"loss must be bce or nll, got {loss!r}")
    if not samples:
        raise ServiceError("soft-token training needs at least one sample")
    placeholders = _placeholders(skeleton)
    if not placeholders:
        raise ServiceError(f"skeleton has no soft placeholders: {skeleton!r}")

    model = service.model
    tokenizer = service.tokenizer
    device = service.device
    for parameter in model.parameters():
        parameter.requires_grad_(False)
    embedding_std = float(model.get_input_embeddings().weight.detach().std())

    torch.manual_seed(seed)
    soft: dict[str, torch.nn.Parameter] = {}
    for name in placeholders:
        if init and name in init:
            value = torch.tensor(np.asarray(init[name], dtype=np.float32))
        else:
            value = torch.randn(service.dim) * embedding_std
        soft[name] = torch.nn.Parameter(value.to(device))
    init_note = f"normal*embedding_std({embedding_std:.6g}); seed={seed}"

    def snapshot() -> dict[str, np.ndarray]:
        return {name: p.detach().cpu().numpy().copy() for name, p in soft.items()}

    parts = _skeleton_parts(skeleton)
    mask_id = tokenizer.mask_token_id

    def build(sample: TrainSample) -> tuple[torch.Tensor, int, list[tuple[int, str]]]:
        ids = [tokenizer.cls_token_id]
        soft_positions: list[tuple[int, str]] = []
        mask_position = -1
        for part in parts:
            if part == "{subj}":
                ids.extend(tokenizer.convert_tokens_to_ids(
                    tokenizer.tokenize(sample.subject_label)))
            elif part == "{context}":
                if sample.context:
                    ids.extend(tokenizer.convert_tokens_to_ids(
                        tokenizer.tokenize(sample.context)))
            elif part == "{mask}":
                mask_position = len(ids)
                ids.append(mask_id)
            elif re.fullmatch(r"\{s[1-9]\}", part):
                soft_positions.append((len(ids), part.strip("{}")))
                ids.append(mask_id)
            else:
                text = part.strip()
                if text:
                    ids.extend(tokenizer.convert_tokens_to_ids(tokenizer.tokenize(text)))
        ids.append(tokenizer.sep_token_id)
        return torch.tensor([ids], dtype=torch.long, device=device), mask_position, \
            soft_positions

    def gold_first_ids(sample: TrainSample) -> list[int]:
        ids = []
        for gold in sample.golds:
            pieces = tokenizer.tokenize(gold)
            if pieces:
                ids.append(tokenizer.convert_tokens_to_ids(pieces)[0])
        if not ids:
            raise ServiceError(f"sample {sample.subject_label!r} has no tokenizable gold")
        return ids

    built = [(build(s), gold_first_ids(s)) for s in samples]
    optimizer = torch.optim.AdamW(list(soft.values()), lr=lr)
    total_steps = max(epochs, 1)
    warmup_steps = max(int(total_steps * warmup_fraction), 1)

    def lr_lambda(step: int) -> float:
        if step < warmup_steps:
            return (step + 1) / warmup_steps
        remaining = max(total_steps - warmup_steps, 1)
        return max((total_steps - step) / remaining, 0.0)

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_lambda)
    bce = torch.nn.BCEWithLogitsLoss()
    rng = random.Random(seed)
    last_good = snapshot()
    losses: list[float] = []
    aborted = False

    for epoch in range(epochs):
        optimizer.zero_grad()
        total = None
        for (input_ids, mask_position, soft_positions), gold_ids in built:
            embeddings = model.get_input_embeddings()(input_ids)
            for position, name in soft_positions:
                embeddings = embeddings.clone()
                embeddings[0, position] = soft[name].to(embeddings.dtype)
            logits = model(inputs_embeds=embeddings,
                           attention_mask=torch.ones_like(input_ids)).logits
            mask_logits = logits[0, mask_position]
            if loss == "bce":
                target = torch.zeros_like(mask_logits)
                target[gold_ids] = 1.0
                sample_loss = bce(mask_logits, target)
            else:
                target = torch.tensor(rng.choice(gold_ids), device=device)
                sample_loss = torch.nn.functional.cross_entropy(
                    mask_logits.unsqueeze(0), target.unsqueeze(0))
            total = sample_loss if total is None else total + sample_loss
        total = total / len(built)
        if not torch.isfinite(total):
            aborted = True
            break
        total.backward()
        optimizer.step()
        scheduler.step()
        losses.append(float(total))
        if all(torch.isfinite(p).all() for p in soft.values()):
            last_good = snapshot()
        else:
            aborted = True
            break

    softio.write_soft_checkpoint(out_path, last_good, init_note=init_note)
    return TrainResult(checkpoint_path=str(out_path), epochs_run=len(losses),
                       final_loss=losses[-1] if losses else None, aborted=aborted,
                       losses=losses)
