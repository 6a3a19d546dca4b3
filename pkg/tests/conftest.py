"""Shared fixtures: the synthetic linear-rule dataset and a tiny JSONL corpus."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from hdlkit.schema import default_schema


@pytest.fixture(scope="session")
def schema():
    return default_schema()


def make_synthetic(n: int, dim: int, seed: int, margin: float = 0.5):
    """Seeded dataset whose labels follow known linear rules (the generator is the oracle).

    Binary label = sign(x0 + 0.4); each fine-grained block's label = argmax
    over its own group of coordinates. The winning coordinate gets a margin
    boost (which cannot change the argmax), so the rules stay exactly linear
    while boundary-hugging samples are rare. Non-lonely rows carry all-zero
    fine-grained targets.

    Returns (x (n, dim) float32, targets (n, 21) float32).
    """
    schema = default_schema()
    assert dim >= 1 + sum(b.size for b in schema.fine_grained_blocks)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 424242]))
    x = rng.normal(size=(n, dim)).astype(np.float32)
    s = np.sign(x[:, 0] + 0.4)
    s[s == 0] = 1.0
    x[:, 0] += margin * s
    lonely = (x[:, 0] + 0.4) > 0
    t = np.zeros((n, schema.total_dim), dtype=np.float32)
    t[np.arange(n), lonely.astype(int)] = 1.0
    start, coord = 2, 1
    for b in schema.fine_grained_blocks:
        grp = x[:, coord : coord + b.size]
        idx = np.argmax(grp, axis=1)
        grp[np.arange(n), idx] += margin
        rows = np.flatnonzero(lonely)
        t[rows, start + idx[rows]] = 1.0
        start += b.size
        coord += b.size
    return x, t


def split_synthetic(x, t):
    n = x.shape[0]
    n_tr = (7 * n) // 10
    n_val = (2 * n) // 10
    return (x[:n_tr], t[:n_tr]), (x[n_tr : n_tr + n_val], t[n_tr : n_tr + n_val]), (
        x[n_tr + n_val :],
        t[n_tr + n_val :],
    )


@pytest.fixture(scope="session")
def synthetic_1k():
    return make_synthetic(1000, 32, seed=0)


# --- tiny text corpus for CLI / pipeline tests --------------------------------

LONELY_FILLER = (
    "i have been feeling so alone lately and it keeps getting worse every single week "
    "no matter what i try to do about it or who i try to talk to these days honestly"
)
NEUTRAL_FILLER = (
    "looking for advice about which meal plan makes sense for the spring semester since "
    "the dining hall options changed a lot this year and i want to compare the prices"
)

# Months spanning 2018-2020 so ITS has both sides of March 2020.
_MONTH_STAMPS = [
    1515000000,  # 2018-01
    1525000000,  # 2018-05
    1535000000,  # 2018-08
    1545000000,  # 2018-12
    1552000000,  # 2019-03
    1560000000,  # 2019-06
    1570000000,  # 2019-10
    1578000000,  # 2020-01
    1584000000,  # 2020-03
    1590000000,  # 2020-05
    1598000000,  # 2020-08
    1606000000,  # 2020-11
]

_DURATIONS = ["transient", "enduring", "ambiguous", "na"]
_CONTEXTS = ["social", "physical", "somatic", "romantic", "na"]
_INTERPERSONAL = ["romantic", "friendship", "family", "peers", "na"]
_INTERACTIONS = ["seek-advice", "provide-support", "seek-validation-affirmation", "reach-out", "non-directed"]


def build_corpus(tmp_path: Path, n_posts: int = 48, seed: int = 5):
    """Write posts.jsonl + annotations.jsonl (3 annotators each) and return their paths."""
    rng = np.random.default_rng(seed)
    posts_path = tmp_path / "posts.jsonl"
    ann_path = tmp_path / "annotations.jsonl"
    annotators = [f"ann{i}" for i in range(6)]
    with open(posts_path, "w", encoding="utf-8") as pf, open(ann_path, "w", encoding="utf-8") as af:
        for i in range(n_posts):
            lonely_post = i % 2 == 0
            subreddit = (
                ["lonely", "college", "loneliness", "youngadults"][(i // 2) % 4]
                if lonely_post
                else ["college", "youngadults"][(i // 2) % 2]
            )
            body = LONELY_FILLER if lonely_post else NEUTRAL_FILLER
            stamp = _MONTH_STAMPS[i % len(_MONTH_STAMPS)] + (i % 28) * 3600
            pf.write(
                json.dumps(
                    {
                        "id": f"post{i:03d}",
                        "subreddit": subreddit,
                        "created_utc": stamp,
                        "title": "a post title with enough words",
                        "body": body,
                    }
                )
                + "\n"
            )
            trio = [annotators[j] for j in rng.choice(6, size=3, replace=False)]
            for who in trio:
                if lonely_post:
                    rec = {
                        "post_id": f"post{i:03d}",
                        "annotator_id": who,
                        "lonely": True,
                        "duration": _DURATIONS[int(rng.integers(0, 4))],
                        "context": _CONTEXTS[int(rng.integers(0, 5))],
                        "interpersonal": _INTERPERSONAL[int(rng.integers(0, 5))],
                        "interaction": _INTERACTIONS[int(rng.integers(0, 5))],
                    }
                else:
                    rec = {
                        "post_id": f"post{i:03d}",
                        "annotator_id": who,
                        "lonely": False,
                        "duration": None,
                        "context": None,
                        "interpersonal": None,
                        "interaction": None,
                    }
                af.write(json.dumps(rec) + "\n")
    return posts_path, ann_path


@pytest.fixture()
def tiny_corpus(tmp_path):
    return build_corpus(tmp_path)
