"""A tiny local 768-dim encoder so tests run without network access.

The fixture saves a randomly initialized single-layer BERT (hidden size 768,
the production dimension) plus a small WordPiece vocab into a directory; the
extractor loads it through the same AutoModel/AutoTokenizer path it uses for
the real encoder.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import torch

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "i", "feel", "lonely", "alone", "title", "body", "post",
    "hello", "world", "campus", "friends", "##s", "##ing", ".", ",",
]


@pytest.fixture(scope="session")
def tiny_encoder_dir(tmp_path_factory) -> str:
    from transformers import BertConfig, BertModel, BertTokenizerFast

    d = tmp_path_factory.mktemp("tiny-encoder")
    (d / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    tokenizer = BertTokenizerFast.from_pretrained(str(d))
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=768,
        num_hidden_layers=1,
        num_attention_heads=4,
        intermediate_size=128,
        max_position_embeddings=128,
    )
    torch.manual_seed(0)
    model = BertModel(config)
    model.save_pretrained(str(d))
    tokenizer.save_pretrained(str(d))
    return str(d)


@pytest.fixture()
def posts_file(tmp_path) -> Path:
    path = tmp_path / "posts.jsonl"
    rows = [
        {"id": "p1", "subreddit": "lonely", "created_utc": 1515000000,
         "title": "hello world", "body": "i feel alone on campus"},
        {"id": "p2", "subreddit": "college", "created_utc": 1580000000,
         "title": "a post", "body": "the friends feel lonely " * 8},
        {"id": "p3", "subreddit": "youngadults", "created_utc": 1600000000,
         "title": "", "body": ""},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path
