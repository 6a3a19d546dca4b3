"""Corpus ingestion: candidate filters, sampling, featurization, splits, and JSONL I/O.

File formats (one JSON object per line):

- posts:      ``{"id", "subreddit", "created_utc", "title", "body"}``
- embeddings: ``{"id": str, "v": [floats]}`` -- values are 32-bit floats written
  with shortest round-trip decimals, so write->read is bit-exact
- labeled:    ``{"post_id", "lonely": [2], "duration": [4], "context": [5],
  "interpersonal": [5], "interaction": [5], "month_index": int}``
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .schema import LabelSchema, PostLabelSet, default_schema
from .seeding import substream

__all__ = [
    "Post",
    "FeatureVector",
    "LabeledTarget",
    "LabeledExample",
    "SplitAssignment",
    "JoinReport",
    "DEFAULT_KEYWORDS",
    "DEFAULT_LONELINESS_SUBREDDITS",
    "EXCLUDED",
    "candidate_filter",
    "stratified_sample",
    "split_dataset",
    "hash_featurize",
    "month_index_of",
    "era_of",
    "load_embeddings",
    "write_embeddings",
    "join",
    "read_posts",
    "read_labeled",
    "write_labeled",
]

# Candidate routing constants; the keyword list includes stems, matched as
# case-insensitive substrings (so "loneli" catches "loneliness").
DEFAULT_KEYWORDS = (
    "alone",
    "lonely",
    "lonesome",
    "loner",
    "loneli",
    "loneness",
    "isolated",
    "left out",
)
DEFAULT_LONELINESS_SUBREDDITS = frozenset({"lonely", "loneliness"})

EXCLUDED = "excluded"
MIN_WORDS = 25


class CorpusError(ValueError):
    """Raised on malformed corpus files or inconsistent joins."""


@dataclass(frozen=True)
class Post:
    id: str
    subreddit: str
    created_utc: int
    title: str
    body: str


@dataclass(frozen=True)
class FeatureVector:
    """A post's embedded representation; ``values`` is a finite float32 vector."""

    post_id: str
    values: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class LabeledTarget:
    """A labeled-dataset row: the distributional target plus the post's month index."""

    post_id: str
    labels: PostLabelSet
    month_index: int


@dataclass(frozen=True)
class LabeledExample:
    """A target joined with its feature vector; the unit consumed by training."""

    post_id: str
    features: FeatureVector
    labels: PostLabelSet
    month_index: int


@dataclass(frozen=True)
class SplitAssignment:
    assignment: dict[str, str]
    seed: int

    def ids(self, split: str) -> list[str]:
        return sorted(pid for pid, s in self.assignment.items() if s == split)


@dataclass(frozen=True)
class JoinReport:
    n_joined: int
    missing_features: int
    missing_labels: int

    def as_dict(self) -> dict[str, int]:
        return {
            "n_joined": self.n_joined,
            "missing_features": self.missing_features,
            "missing_labels": self.missing_labels,
        }


def _joined_text(post: Post) -> str:
    return f"{post.title} {post.body}"


def candidate_filter(
    post: Post,
    loneliness_subreddits: frozenset[str] | set[str] = DEFAULT_LONELINESS_SUBREDDITS,
    keywords: Sequence[str] = DEFAULT_KEYWORDS,
) -> str:
    """Route a post to lonely-candidate / nonlonely-candidate, or exclude it as too short.

    A post needs at least 25 whitespace-delimited words across title+body.
    It is a lonely-candidate when it comes from a loneliness subreddit or any
    keyword occurs case-insensitively as a substring of title+body.
    """
    text = _joined_text(post)
    if len(text.split()) < MIN_WORDS:
        return EXCLUDED
    if post.subreddit in loneliness_subreddits:
        return "lonely-candidate"
    lowered = text.lower()
    if any(k.lower() in lowered for k in keywords):
        return "lonely-candidate"
    return "nonlonely-candidate"


def month_index_of(created_utc: int) -> int:
    """Months since January 2018 (January 2018 -> 0), in UTC."""
    dt = datetime.fromtimestamp(created_utc, tz=timezone.utc)
    return (dt.year - 2018) * 12 + (dt.month - 1)


def era_of(created_utc: int) -> str:
    """The sampling era: '2020' for 2020 onward, else 'pre-2020'."""
    dt = datetime.fromtimestamp(created_utc, tz=timezone.utc)
    return "2020" if dt.year >= 2020 else "pre-2020"


def stratified_sample(
    posts: Sequence[Post],
    strata_of: Callable[[Post], object],
    target_n: int,
    seed: int,
) -> list[Post]:
    """Sample ``target_n`` posts keeping per-stratum proportions of the population.

    Per-stratum counts come from largest-remainder rounding of the exact
    proportional quota, so they always sum to ``target_n``. Sampling within a
    stratum is uniform without replacement and deterministic given the seed.
    """
    if target_n > len(posts):
        raise CorpusError(f"target_n={target_n} exceeds population size {len(posts)}")
    if target_n < 0:
        raise CorpusError("target_n must be nonnegative")

    groups: dict[object, list[Post]] = {}
    for p in posts:
        groups.setdefault(strata_of(p), []).append(p)
    keys = sorted(groups, key=repr)

    n_total = len(posts)
    quotas = {k: Fraction(target_n * len(groups[k]), n_total) for k in keys}
    counts = {k: int(quotas[k]) for k in keys}
    leftover = target_n - sum(counts.values())
    by_remainder = sorted(
        keys, key=lambda k: (quotas[k] - counts[k], len(groups[k]), repr(k)), reverse=True
    )
    for k in by_remainder[:leftover]:
        counts[k] += 1

    rng = substream(seed, "sample")
    sampled: list[Post] = []
    for k in keys:
        group = groups[k]
        take = counts[k]
        idx = sorted(rng.choice(len(group), size=take, replace=False).tolist())
        sampled.extend(group[i] for i in idx)
    return sampled


def split_dataset(examples: Sequence, seed: int) -> SplitAssignment:
    """Assign 70/20/10 train/validation/test splits, floor-sized and seed-deterministic.

    Accepts anything with a ``post_id`` attribute, or bare id strings. The
    assignment depends only on the id set and the seed.
    """
    ids = [getattr(e, "post_id", e) for e in examples]
    ids = [str(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise CorpusError("duplicate post ids in split input")
    n = len(ids)
    if n < 10:
        raise CorpusError(f"need at least 10 examples to split, got {n}")
    n_train = (7 * n) // 10
    n_val = (2 * n) // 10

    ordered = sorted(ids)
    perm = substream(seed, "split").permutation(n)
    shuffled = [ordered[i] for i in perm]
    assignment = {}
    for i, pid in enumerate(shuffled):
        if i < n_train:
            assignment[pid] = "train"
        elif i < n_train + n_val:
            assignment[pid] = "validation"
        else:
            assignment[pid] = "test"
    return SplitAssignment(assignment=assignment, seed=seed)


def hash_featurize(post: Post, dim: int, seed: int) -> FeatureVector:
    """Seeded signed bag-of-tokens hashing into ``dim`` buckets, L2-normalized.

    Stable across runs and platforms (keyed blake2b, no interpreter hash).
    An empty post maps to the zero vector, which is left unnormalized.
    """
    if dim <= 0:
        raise CorpusError("hash dim must be positive")
    key = hashlib.blake2b(f"hash-featurize:{seed}".encode("utf-8"), digest_size=16).digest()
    acc = np.zeros(dim, dtype=np.float64)
    for token in _joined_text(post).lower().split():
        digest = hashlib.blake2b(token.encode("utf-8"), key=key, digest_size=9).digest()
        bucket = int.from_bytes(digest[:8], "little") % dim
        sign = 1.0 if digest[8] & 1 else -1.0
        acc[bucket] += sign
    norm = float(np.linalg.norm(acc))
    if norm > 0.0:
        acc /= norm
    return FeatureVector(post_id=post.id, values=acc.astype(np.float32))


def _format_f32(x: np.float32) -> str:
    # Shortest decimal that parses back to the same float32 bit pattern.
    return np.format_float_positional(np.float32(x), unique=True, trim="-")


def write_embeddings(path: str, vectors: Iterable[FeatureVector]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for fv in vectors:
            vals = ",".join(_format_f32(v) for v in fv.values)
            fh.write(f'{{"id": {json.dumps(fv.post_id)}, "v": [{vals}]}}\n')
            n += 1
    return n


def load_embeddings(path: str) -> dict[str, FeatureVector]:
    """Read an embeddings JSONL file into a map post_id -> FeatureVector.

    All rows must share one dimension; duplicate ids and malformed lines are
    errors (reported with the offending id / line number).
    """
    out: dict[str, FeatureVector] = {}
    dim: Optional[int] = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                pid = str(row["id"])
                values = np.asarray(row["v"], dtype=np.float32)
            except (KeyError, ValueError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed embedding line: {exc}") from exc
            if values.ndim != 1 or values.size == 0:
                raise CorpusError(f"{path}:{lineno}: embedding for {pid!r} is not a nonempty vector")
            if not np.all(np.isfinite(values)):
                raise CorpusError(f"{path}:{lineno}: non-finite embedding values for {pid!r}")
            if pid in out:
                raise CorpusError(f"{path}:{lineno}: duplicate post_id {pid!r} in embedding file")
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise CorpusError(
                    f"{path}:{lineno}: mixed dims: {pid!r} has dim {values.size}, expected {dim}"
                )
            out[pid] = FeatureVector(post_id=pid, values=values)
    return out


def join(
    posts: Sequence[Post] | Sequence[str],
    targets: Sequence[LabeledTarget],
    features: Mapping[str, FeatureVector],
) -> tuple[list[LabeledExample], JoinReport]:
    """Join posts with their targets and features, dropping (and counting) incomplete ones.

    Output is sorted by post_id so parallel upstream parsing cannot reorder it.
    """
    by_id = {}
    for t in targets:
        if t.post_id in by_id:
            raise CorpusError(f"duplicate post_id {t.post_id!r} in labeled targets")
        by_id[t.post_id] = t

    dims = {fv.dim for fv in features.values()}
    if len(dims) > 1:
        raise CorpusError(f"mixed feature dims in join input: {sorted(dims)}")

    ids = [getattr(p, "id", p) for p in posts]
    missing_labels = 0
    missing_features = 0
    examples: list[LabeledExample] = []
    for pid in sorted(str(i) for i in ids):
        target = by_id.get(pid)
        if target is None:
            missing_labels += 1
            continue
        fv = features.get(pid)
        if fv is None:
            missing_features += 1
            continue
        examples.append(
            LabeledExample(post_id=pid, features=fv, labels=target.labels, month_index=target.month_index)
        )
    report = JoinReport(
        n_joined=len(examples), missing_features=missing_features, missing_labels=missing_labels
    )
    return examples, report


def read_posts(path: str) -> list[Post]:
    out: list[Post] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                post = Post(
                    id=str(row["id"]),
                    subreddit=str(row["subreddit"]),
                    created_utc=int(row["created_utc"]),
                    title=str(row["title"]),
                    body=str(row["body"]),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed post line: {exc}") from exc
            if post.created_utc <= 0:
                raise CorpusError(f"{path}:{lineno}: created_utc must be positive")
            if post.id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate post id {post.id!r}")
            seen.add(post.id)
            out.append(post)
    return out


def write_labeled(path: str, targets: Iterable[LabeledTarget]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for t in targets:
            row: dict[str, object] = {"post_id": t.post_id}
            for d in t.labels.blocks:
                row[d.block.name] = list(d.values)
            row["month_index"] = t.month_index
            fh.write(json.dumps(row, separators=(", ", ": ")) + "\n")
            n += 1
    return n


def read_labeled(path: str, schema: Optional[LabelSchema] = None) -> list[LabeledTarget]:
    schema = schema or default_schema()
    out: list[LabeledTarget] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                values = [v for b in schema.blocks for v in row[b.name]]
                labels = PostLabelSet.from_values(schema, values)
                target = LabeledTarget(
                    post_id=str(row["post_id"]),
                    labels=labels,
                    month_index=int(row["month_index"]),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed labeled row: {exc}") from exc
            out.append(target)
    return out
