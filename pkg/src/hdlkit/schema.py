"""Hierarchical label space: blocks, distributional labels, and annotation aggregation.

The label space has a fixed two-tier structure: a binary root block (is the
post lonely or not) gating four fine-grained category blocks. Targets are
*distributional*: each block carries the fraction of annotators who chose each
label, not a resolved one-hot. A post whose root is pure non-lonely carries
all-zero fine-grained vectors.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

__all__ = [
    "CategoryBlock",
    "LabelSchema",
    "DistributionalLabel",
    "PostLabelSet",
    "AnnotationRecord",
    "LONELY_CANDIDATE",
    "NONLONELY_CANDIDATE",
    "default_schema",
    "aggregate_annotations",
    "normalize_drop_na",
    "interrater_agreement",
    "read_annotations",
]

LONELY_CANDIDATE = "lonely-candidate"
NONLONELY_CANDIDATE = "nonlonely-candidate"

NA_LABEL = "na"
SUM_TOL = 1e-9


class SchemaError(ValueError):
    """Raised when labels or records violate the label-space contract."""


@dataclass(frozen=True)
class CategoryBlock:
    """One category and its ordered label names.

    ``has_na`` marks blocks that include a trailing not-applicable option;
    composition-style reporting removes that option and renormalizes.
    """

    name: str
    labels: tuple[str, ...]
    has_na: bool

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise SchemaError(f"duplicate label names in block {self.name!r}")
        if self.has_na and NA_LABEL not in self.labels:
            raise SchemaError(f"block {self.name!r} declared has_na without an {NA_LABEL!r} label")

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def na_index(self) -> Optional[int]:
        return self.labels.index(NA_LABEL) if self.has_na else None

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SchemaError(f"unknown label {label!r} for block {self.name!r}; expected one of {self.labels}") from None

    def without_na(self) -> "CategoryBlock":
        """The same block with the NA option removed (for renormalized views)."""
        if not self.has_na:
            raise SchemaError(f"block {self.name!r} has no NA label to drop")
        kept = tuple(l for l in self.labels if l != NA_LABEL)
        return CategoryBlock(name=self.name, labels=kept, has_na=False)


@dataclass(frozen=True)
class LabelSchema:
    """The fixed, ordered collection of category blocks."""

    blocks: tuple[CategoryBlock, ...]

    def __post_init__(self) -> None:
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate block names in schema")

    @property
    def total_dim(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    @property
    def lonely_block(self) -> CategoryBlock:
        return self.blocks[0]

    @property
    def fine_grained_blocks(self) -> tuple[CategoryBlock, ...]:
        return self.blocks[1:]

    def block(self, name: str) -> CategoryBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise SchemaError(f"unknown block {name!r}; expected one of {[b.name for b in self.blocks]}")

    def schema_hash(self) -> str:
        """Stable 16-hex-digit digest of the block structure (checkpoint compatibility key)."""
        canon = json.dumps(
            [[b.name, list(b.labels), b.has_na] for b in self.blocks],
            separators=(",", ":"),
        )
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def default_schema() -> LabelSchema:
    """The five-block loneliness schema: binary root plus four fine-grained categories (21 dims)."""
    schema = LabelSchema(
        blocks=(
            CategoryBlock("lonely", ("non-lonely", "lonely"), has_na=False),
            CategoryBlock("duration", ("transient", "enduring", "ambiguous", NA_LABEL), has_na=True),
            CategoryBlock("context", ("social", "physical", "somatic", "romantic", NA_LABEL), has_na=True),
            CategoryBlock("interpersonal", ("romantic", "friendship", "family", "peers", NA_LABEL), has_na=True),
            CategoryBlock(
                "interaction",
                ("seek-advice", "provide-support", "seek-validation-affirmation", "reach-out", "non-directed"),
                has_na=False,
            ),
        )
    )
    assert schema.total_dim == 21
    return schema


@dataclass(frozen=True)
class DistributionalLabel:
    """A nonnegative vector over one block: either a probability vector or all-zero.

    The all-zero form is reserved for fine-grained blocks of pure non-lonely
    posts; every other label must sum to 1 within 1e-9.
    """

    block: CategoryBlock
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != self.block.size:
            raise SchemaError(
                f"{self.block.name}: got {len(self.values)} values for a {self.block.size}-label block"
            )
        if any(v < 0.0 for v in self.values):
            raise SchemaError(f"{self.block.name}: negative entry in {self.values}")
        if not self.is_zero and abs(sum(self.values) - 1.0) > SUM_TOL:
            raise SchemaError(f"{self.block.name}: values sum to {sum(self.values)!r}, expected 1 or all-zero")

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    @staticmethod
    def zero(block: CategoryBlock) -> "DistributionalLabel":
        return DistributionalLabel(block, (0.0,) * block.size)


@dataclass(frozen=True)
class PostLabelSet:
    """The full distributional target of one post: root block plus the four fine-grained blocks."""

    lonely: DistributionalLabel
    fine_grained: tuple[DistributionalLabel, ...]

    def __post_init__(self) -> None:
        if self.lonely.block.size != 2:
            raise SchemaError("lonely block must be binary")
        if self.lonely.values == (1.0, 0.0):
            for d in self.fine_grained:
                if not d.is_zero:
                    raise SchemaError(
                        f"pure non-lonely post carries mass in fine-grained block {d.block.name!r}"
                    )

    def by_name(self, name: str) -> DistributionalLabel:
        if name == self.lonely.block.name:
            return self.lonely
        for d in self.fine_grained:
            if d.block.name == name:
                return d
        raise SchemaError(f"no block named {name!r} in this label set")

    @property
    def blocks(self) -> tuple[DistributionalLabel, ...]:
        return (self.lonely,) + self.fine_grained

    def to_values(self) -> list[float]:
        """Concatenated block values in schema order (length = schema total_dim)."""
        return [v for d in self.blocks for v in d.values]

    @staticmethod
    def from_values(schema: LabelSchema, values: Sequence[float]) -> "PostLabelSet":
        if len(values) != schema.total_dim:
            raise SchemaError(f"expected {schema.total_dim} values, got {len(values)}")
        out: list[DistributionalLabel] = []
        i = 0
        for b in schema.blocks:
            out.append(DistributionalLabel(b, tuple(float(v) for v in values[i : i + b.size])))
            i += b.size
        return PostLabelSet(lonely=out[0], fine_grained=tuple(out[1:]))


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's judgement of one post.

    ``choices`` maps fine-grained block name -> chosen label; a record with
    ``lonely=False`` carries no usable fine-grained choices.
    """

    post_id: str
    annotator_id: str
    lonely: bool
    choices: Mapping[str, Optional[str]] = field(default_factory=dict)


def validate_record(record: AnnotationRecord, schema: LabelSchema) -> None:
    """Check a record against the schema; lonely records need one valid choice per fine-grained block."""
    for block in schema.fine_grained_blocks:
        chosen = record.choices.get(block.name)
        if record.lonely:
            if chosen is None:
                raise SchemaError(
                    f"post {record.post_id!r}, annotator {record.annotator_id!r}: "
                    f"lonely record missing a {block.name!r} choice"
                )
            block.index_of(chosen)  # raises on unknown label
        elif chosen is not None:
            block.index_of(chosen)


def aggregate_annotations(
    records: Sequence[AnnotationRecord],
    kind: str,
    schema: Optional[LabelSchema] = None,
) -> Optional[PostLabelSet]:
    """Aggregate one post's annotations into a distributional target, or discard it.

    Majority rule: a lonely-candidate is retained only when a strict majority
    voted lonely; a nonlonely-candidate only when a strict majority voted
    non-lonely. Even splits never reach a majority and are discarded. Returns
    ``None`` for a discarded post.

    Retained lonely posts get the vote-fraction binary target and, per
    fine-grained block, vote fractions over the lonely-voting annotators only.
    Retained non-lonely posts get the exact (1, 0) binary target and all-zero
    fine-grained vectors. Fractions are formed in exact rational arithmetic
    and converted to float at the end.
    """
    schema = schema or default_schema()
    if kind not in (LONELY_CANDIDATE, NONLONELY_CANDIDATE):
        raise ValueError(f"unknown candidate kind {kind!r}")
    if not records:
        raise SchemaError("cannot aggregate an empty record list")
    post_ids = {r.post_id for r in records}
    if len(post_ids) != 1:
        raise SchemaError(f"records span multiple posts: {sorted(post_ids)}")
    for r in records:
        validate_record(r, schema)

    n = len(records)
    n_lonely = sum(1 for r in records if r.lonely)
    majority_lonely = 2 * n_lonely > n
    majority_nonlonely = 2 * (n - n_lonely) > n

    if kind == LONELY_CANDIDATE and not majority_lonely:
        return None
    if kind == NONLONELY_CANDIDATE and not majority_nonlonely:
        return None

    if kind == NONLONELY_CANDIDATE:
        lonely = DistributionalLabel(schema.lonely_block, (1.0, 0.0))
        fine = tuple(DistributionalLabel.zero(b) for b in schema.fine_grained_blocks)
        return PostLabelSet(lonely=lonely, fine_grained=fine)

    lonely_frac = Fraction(n_lonely, n)
    lonely = DistributionalLabel(
        schema.lonely_block, (float(1 - lonely_frac), float(lonely_frac))
    )
    lonely_voters = [r for r in records if r.lonely]
    fine: list[DistributionalLabel] = []
    for block in schema.fine_grained_blocks:
        counts = [0] * block.size
        for r in lonely_voters:
            counts[block.index_of(r.choices[block.name])] += 1
        fracs = [Fraction(c, len(lonely_voters)) for c in counts]
        assert sum(fracs) == 1
        fine.append(DistributionalLabel(block, tuple(float(f) for f in fracs)))
    return PostLabelSet(lonely=lonely, fine_grained=tuple(fine))


def normalize_drop_na(d: DistributionalLabel) -> DistributionalLabel:
    """Remove the NA entry and rescale the rest to sum to 1.

    Requires positive non-NA mass; an NA-only distribution has no meaningful
    renormalization and raises.
    """
    if not d.block.has_na:
        raise SchemaError(f"block {d.block.name!r} has no NA label")
    na = d.block.na_index
    kept = [v for i, v in enumerate(d.values) if i != na]
    total = sum(kept)
    if total <= 0.0:
        raise SchemaError(f"NA-only distribution in block {d.block.name!r}")
    return DistributionalLabel(d.block.without_na(), tuple(v / total for v in kept))


def _chosen_label(record: AnnotationRecord, category: str, schema: LabelSchema) -> Optional[str]:
    if category == schema.lonely_block.name:
        return schema.lonely_block.labels[1 if record.lonely else 0]
    return record.choices.get(category) if record.lonely else None


def interrater_agreement(
    records: Iterable[AnnotationRecord],
    category: str,
    schema: Optional[LabelSchema] = None,
) -> dict[tuple[str, str], float]:
    """Pairwise exact-match agreement rates for one category.

    For each annotator pair, the fraction of co-annotated posts (both gave a
    label in that category) where the two labels are identical. Pairs with no
    shared posts are omitted; raises if no pair shares any post.
    """
    schema = schema or default_schema()
    schema.block(category)  # validate the name
    by_post: dict[str, dict[str, str]] = {}
    for r in records:
        validate_record(r, schema)
        label = _chosen_label(r, category, schema)
        if label is not None:
            by_post.setdefault(r.post_id, {})[r.annotator_id] = label

    shared: dict[tuple[str, str], int] = {}
    matched: dict[tuple[str, str], int] = {}
    for labels_by_annotator in by_post.values():
        for a, b in itertools.combinations(sorted(labels_by_annotator), 2):
            pair = (a, b)
            shared[pair] = shared.get(pair, 0) + 1
            if labels_by_annotator[a] == labels_by_annotator[b]:
                matched[pair] = matched.get(pair, 0) + 1
    if not shared:
        raise SchemaError(f"no annotator pair shares a post in category {category!r}")
    return {pair: matched.get(pair, 0) / count for pair, count in sorted(shared.items())}


def read_annotations(path: str) -> list[AnnotationRecord]:
    """Read annotation records from JSONL; label strings must match schema names byte-exactly."""
    schema = default_schema()
    fine_names = [b.name for b in schema.fine_grained_blocks]
    out: list[AnnotationRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rec = AnnotationRecord(
                    post_id=str(row["post_id"]),
                    annotator_id=str(row["annotator_id"]),
                    lonely=bool(row["lonely"]),
                    choices={name: row.get(name) for name in fine_names},
                )
                validate_record(rec, schema)
            except (KeyError, ValueError, TypeError) as exc:
                raise SchemaError(f"{path}:{lineno}: malformed annotation record: {exc}") from exc
            out.append(rec)
    return out
