"""Batch inference: posts JSONL in, embedding JSONL out.

The encoder is loaded frozen (no fine-tuning); each post's title and body are
joined with a blank-line separator, truncated to the token budget, and pooled
to one vector. Output rows keep the input order regardless of batching, and
values are float32 printed with shortest round-trip decimals so the consumer
side parses them bit-exactly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import torch

logger = logging.getLogger(__name__)

DEFAULT_ENCODER = "bert-base-cased"
POOLINGS = ("cls", "mean")


class ExtractorError(ValueError):
    pass


@dataclass(frozen=True)
class ExtractionConfig:
    encoder: str = DEFAULT_ENCODER
    pooling: str = "cls"
    max_tokens: int = 512
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.pooling not in POOLINGS:
            raise ExtractorError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.max_tokens < 8:
            raise ExtractorError("max_tokens must be at least 8")
        if self.batch_size < 1:
            raise ExtractorError("batch_size must be at least 1")


def _read_posts(path: str) -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                pid = str(row["id"])
                text = f"{row['title']}\n\n{row['body']}"
            except (KeyError, ValueError, TypeError) as exc:
                raise ExtractorError(f"{path}:{lineno}: malformed post line: {exc}") from exc
            if pid in seen:
                raise ExtractorError(f"{path}:{lineno}: duplicate post id {pid!r}")
            seen.add(pid)
            rows.append((pid, text))
    return rows


def _load_encoder(name: str):
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name)
    except Exception as exc:
        raise ExtractorError(f"could not load encoder {name!r}: {exc}") from exc
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return tokenizer, model


def _pool(last_hidden: torch.Tensor, attention_mask: torch.Tensor, pooling: str) -> torch.Tensor:
    if pooling == "cls":
        return last_hidden[:, 0, :]
    mask = attention_mask.unsqueeze(-1).to(last_hidden.dtype)
    return (last_hidden * mask).sum(dim=1) / mask.sum(dim=1)


def _format_f32(x: np.float32) -> str:
    return np.format_float_positional(np.float32(x), unique=True, trim="-")


def iter_embeddings(posts_path: str, config: ExtractionConfig) -> Iterator[tuple[str, np.ndarray]]:
    """Yield (post_id, float32 vector) in input order."""
    rows = _read_posts(posts_path)
    tokenizer, model = _load_encoder(config.encoder)
    hidden = int(model.config.hidden_size)
    logger.info("encoder %s loaded (hidden size %d), %d posts", config.encoder, hidden, len(rows))
    with torch.no_grad():
        for start in range(0, len(rows), config.batch_size):
            batch = rows[start : start + config.batch_size]
            enc = tokenizer(
                [text for _, text in batch],
                truncation=True,
                max_length=config.max_tokens,
                padding=True,
                return_tensors="pt",
            )
            out = model(**enc)
            pooled = _pool(out.last_hidden_state, enc["attention_mask"], config.pooling)
            vectors = pooled.to(torch.float32).cpu().numpy()
            if vectors.shape[1] != hidden:
                raise ExtractorError(
                    f"encoder produced dim {vectors.shape[1]}, expected hidden size {hidden}"
                )
            for (pid, _), vec in zip(batch, vectors):
                if not np.all(np.isfinite(vec)):
                    raise ExtractorError(f"non-finite embedding for post {pid!r}")
                yield pid, vec


def extract(posts_path: str, out_path: str, config: ExtractionConfig) -> int:
    """Write one embedding JSONL row per post; returns the row count."""
    n = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for pid, vec in iter_embeddings(posts_path, config):
            vals = ",".join(_format_f32(v) for v in vec)
            fh.write(f'{{"id": {json.dumps(pid)}, "v": [{vals}]}}\n')
            n += 1
    logger.info("wrote %d embedding rows to %s", n, out_path)
    return n
