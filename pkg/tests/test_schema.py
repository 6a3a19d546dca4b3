"""Label space, aggregation, NA renormalization, and inter-rater agreement."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdlkit.schema import (
    AnnotationRecord,
    CategoryBlock,
    DistributionalLabel,
    PostLabelSet,
    SchemaError,
    aggregate_annotations,
    default_schema,
    interrater_agreement,
    normalize_drop_na,
    read_annotations,
)

SCHEMA = default_schema()


def lonely_record(post_id, annotator, duration="transient", context="social",
                  interpersonal="friendship", interaction="seek-advice"):
    return AnnotationRecord(
        post_id=post_id,
        annotator_id=annotator,
        lonely=True,
        choices={
            "duration": duration,
            "context": context,
            "interpersonal": interpersonal,
            "interaction": interaction,
        },
    )


def nonlonely_record(post_id, annotator):
    return AnnotationRecord(post_id=post_id, annotator_id=annotator, lonely=False, choices={})


class TestSchemaStructure:
    def test_block_layout(self):
        assert SCHEMA.total_dim == 21
        assert SCHEMA.block_sizes == (2, 4, 5, 5, 5)
        assert [b.name for b in SCHEMA.blocks] == [
            "lonely", "duration", "context", "interpersonal", "interaction",
        ]
        assert [b.has_na for b in SCHEMA.blocks] == [False, True, True, True, False]

    def test_schema_hash_stable(self):
        assert default_schema().schema_hash() == SCHEMA.schema_hash()

    def test_distributional_label_rejects_bad_sum(self):
        block = SCHEMA.block("duration")
        with pytest.raises(SchemaError):
            DistributionalLabel(block, (0.5, 0.1, 0.0, 0.0))

    def test_distributional_label_rejects_negative(self):
        block = SCHEMA.block("lonely")
        with pytest.raises(SchemaError):
            DistributionalLabel(block, (-0.1, 1.1))

    def test_pure_nonlonely_requires_zero_fine_grained(self):
        lonely = DistributionalLabel(SCHEMA.lonely_block, (1.0, 0.0))
        fine = [DistributionalLabel.zero(b) for b in SCHEMA.fine_grained_blocks]
        fine[0] = DistributionalLabel(SCHEMA.block("duration"), (1.0, 0.0, 0.0, 0.0))
        with pytest.raises(SchemaError):
            PostLabelSet(lonely=lonely, fine_grained=tuple(fine))


class TestAggregation:
    def test_vote_pattern_fractions(self):
        # Two annotators pick seek-advice, one picks seek-validation.
        records = [
            lonely_record("p", "a1", interaction="seek-advice"),
            lonely_record("p", "a2", interaction="seek-advice"),
            lonely_record("p", "a3", interaction="seek-validation-affirmation"),
        ]
        out = aggregate_annotations(records, "lonely-candidate")
        assert out.by_name("interaction").values == (2 / 3, 0.0, 1 / 3, 0.0, 0.0)
        assert out.lonely.values == (0.0, 1.0)

    def test_nonlonely_candidate_all_nonlonely(self):
        records = [nonlonely_record("p", f"a{i}") for i in range(3)]
        out = aggregate_annotations(records, "nonlonely-candidate")
        assert out.lonely.values == (1.0, 0.0)
        assert all(d.is_zero for d in out.fine_grained)

    def test_lonely_candidate_minority_lonely_discarded(self):
        records = [
            lonely_record("p", "a1"),
            nonlonely_record("p", "a2"),
            nonlonely_record("p", "a3"),
        ]
        assert aggregate_annotations(records, "lonely-candidate") is None

    @pytest.mark.parametrize(
        "n_lonely,n_total,kind,retained",
        [
            (3, 3, "lonely-candidate", True),
            (2, 3, "lonely-candidate", True),
            (1, 3, "lonely-candidate", False),
            (0, 3, "lonely-candidate", False),
            (3, 3, "nonlonely-candidate", False),
            (2, 3, "nonlonely-candidate", False),
            (1, 3, "nonlonely-candidate", True),
            (0, 3, "nonlonely-candidate", True),
            # Even splits never reach a majority.
            (1, 2, "lonely-candidate", False),
            (1, 2, "nonlonely-candidate", False),
            (2, 4, "lonely-candidate", False),
            (2, 4, "nonlonely-candidate", False),
        ],
    )
    def test_majority_rule_retention(self, n_lonely, n_total, kind, retained):
        records = [lonely_record("p", f"a{i}") for i in range(n_lonely)]
        records += [nonlonely_record("p", f"b{i}") for i in range(n_total - n_lonely)]
        out = aggregate_annotations(records, kind)
        assert (out is not None) == retained

    def test_binary_target_is_vote_fraction(self):
        records = [
            lonely_record("p", "a1"),
            lonely_record("p", "a2"),
            nonlonely_record("p", "a3"),
        ]
        out = aggregate_annotations(records, "lonely-candidate")
        assert out.lonely.values == (1 / 3, 2 / 3)
        # Fine-grained fractions are over the two lonely voters only.
        assert out.by_name("interaction").values[0] == 1.0

    def test_permutation_invariance(self):
        records = [
            lonely_record("p", "a1", duration="transient"),
            lonely_record("p", "a2", duration="enduring"),
            lonely_record("p", "a3", duration="na"),
            nonlonely_record("p", "a4"),
            lonely_record("p", "a5", duration="enduring"),
        ]
        base = aggregate_annotations(records, "lonely-candidate")
        for shift in range(1, len(records)):
            rotated = records[shift:] + records[:shift]
            assert aggregate_annotations(rotated, "lonely-candidate") == base

    def test_exact_rational_sums(self):
        # Denominator = lonely-vote count; reconstructed Fractions sum to 1.
        records = [
            lonely_record("p", "a1", context="social"),
            lonely_record("p", "a2", context="physical"),
            lonely_record("p", "a3", context="romantic"),
            lonely_record("p", "a4", context="social"),
            lonely_record("p", "a5", context="na"),
            nonlonely_record("p", "a6"),
            nonlonely_record("p", "a7"),
        ]
        out = aggregate_annotations(records, "lonely-candidate")
        n_lonely = 5
        for d in out.fine_grained:
            fracs = [Fraction(round(v * n_lonely), n_lonely) for v in d.values]
            assert sum(fracs) == 1
            for v, f in zip(d.values, fracs):
                assert v == float(f)

    def test_empty_records_error(self):
        with pytest.raises(SchemaError):
            aggregate_annotations([], "lonely-candidate")

    def test_multiple_posts_error(self):
        with pytest.raises(SchemaError, match="multiple posts"):
            aggregate_annotations(
                [lonely_record("p1", "a1"), lonely_record("p2", "a2"), lonely_record("p1", "a3")],
                "lonely-candidate",
            )

    def test_lonely_record_missing_choice_error(self):
        bad = AnnotationRecord("p", "a1", True, {"duration": "transient"})
        with pytest.raises(SchemaError, match="missing"):
            aggregate_annotations([bad, lonely_record("p", "a2"), lonely_record("p", "a3")], "lonely-candidate")

    def test_unknown_label_error(self):
        bad = lonely_record("p", "a1", duration="forever")
        with pytest.raises(SchemaError, match="unknown label"):
            aggregate_annotations([bad, lonely_record("p", "a2"), lonely_record("p", "a3")], "lonely-candidate")

    def test_unknown_kind_error(self):
        with pytest.raises(ValueError):
            aggregate_annotations([lonely_record("p", "a1")], "maybe-candidate")


class TestNormalizeDropNa:
    def test_uniform_with_na(self):
        d = DistributionalLabel(SCHEMA.block("duration"), (1 / 3, 1 / 3, 0.0, 1 / 3))
        out = normalize_drop_na(d)
        assert out.values == (0.5, 0.5, 0.0)
        assert out.block.labels == ("transient", "enduring", "ambiguous")

    def test_no_na_mass(self):
        d = DistributionalLabel(SCHEMA.block("duration"), (1.0, 0.0, 0.0, 0.0))
        assert normalize_drop_na(d).values == (1.0, 0.0, 0.0)

    def test_hand_renormalization(self):
        d = DistributionalLabel(SCHEMA.block("context"), (0.5, 0.25, 0.0, 0.0, 0.25))
        out = normalize_drop_na(d)
        assert out.values == pytest.approx((2 / 3, 1 / 3, 0.0, 0.0), abs=1e-12)

    def test_na_only_error(self):
        d = DistributionalLabel(SCHEMA.block("duration"), (0.0, 0.0, 0.0, 1.0))
        with pytest.raises(SchemaError, match="NA-only"):
            normalize_drop_na(d)

    def test_block_without_na_error(self):
        d = DistributionalLabel(SCHEMA.block("interaction"), (1.0, 0.0, 0.0, 0.0, 0.0))
        with pytest.raises(SchemaError):
            normalize_drop_na(d)

    @given(
        st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=3, max_size=3).filter(
            lambda vs: sum(vs) > 1e-6
        ),
        st.floats(min_value=0.0, max_value=5.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_sum_and_order_preserved(self, masses, na_mass):
        total = sum(masses) + na_mass
        values = tuple(m / total for m in masses) + (na_mass / total,)
        d = DistributionalLabel(SCHEMA.block("duration"), values)
        out = normalize_drop_na(d)
        assert abs(sum(out.values) - 1.0) < 1e-12
        # Relative order of the non-NA masses is preserved.
        for i in range(3):
            for j in range(3):
                if values[i] < values[j]:
                    assert out.values[i] < out.values[j]


class TestInterraterAgreement:
    def test_identical_pair(self):
        records = []
        for pid in ("p1", "p2", "p3"):
            records += [lonely_record(pid, "a1"), lonely_record(pid, "a2")]
        scores = interrater_agreement(records, "duration")
        assert scores[("a1", "a2")] == 1.0

    def test_total_disagreement(self):
        records = [
            lonely_record("p1", "a1", duration="transient"),
            lonely_record("p1", "a2", duration="enduring"),
            lonely_record("p2", "a1", duration="ambiguous"),
            lonely_record("p2", "a2", duration="na"),
        ]
        assert interrater_agreement(records, "duration")[("a1", "a2")] == 0.0

    def test_two_of_three_match(self):
        records = []
        durations = [("transient", "transient"), ("enduring", "enduring"), ("na", "ambiguous")]
        for pid, (d1, d2) in zip(("p1", "p2", "p3"), durations):
            records += [lonely_record(pid, "a1", duration=d1), lonely_record(pid, "a2", duration=d2)]
        assert interrater_agreement(records, "duration")[("a1", "a2")] == pytest.approx(2 / 3)

    def test_binary_category_uses_lonely_flag(self):
        records = [
            lonely_record("p1", "a1"),
            nonlonely_record("p1", "a2"),
            lonely_record("p2", "a1"),
            lonely_record("p2", "a2"),
        ]
        assert interrater_agreement(records, "lonely")[("a1", "a2")] == 0.5

    def test_no_shared_posts_error(self):
        records = [lonely_record("p1", "a1"), lonely_record("p2", "a2")]
        with pytest.raises(SchemaError, match="no annotator pair"):
            interrater_agreement(records, "duration")

    def test_nonlonely_records_invisible_to_fine_grained(self):
        # a2 never labels fine-grained categories, so only (a1, a3) pairs up.
        records = [
            lonely_record("p1", "a1"),
            nonlonely_record("p1", "a2"),
            lonely_record("p1", "a3"),
        ]
        scores = interrater_agreement(records, "interaction")
        assert set(scores) == {("a1", "a3")}


class TestAnnotationIo:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text(
            '{"post_id": "p1", "annotator_id": "a1", "lonely": true, "duration": "transient", '
            '"context": "social", "interpersonal": "peers", "interaction": "reach-out"}\n'
            '{"post_id": "p1", "annotator_id": "a2", "lonely": false, "duration": null, '
            '"context": null, "interpersonal": null, "interaction": null}\n'
        )
        records = read_annotations(str(path))
        assert len(records) == 2
        assert records[0].choices["interaction"] == "reach-out"
        assert records[1].lonely is False

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text('{"post_id": "p1", "annotator_id": "a1", "lonely": true}\n')
        with pytest.raises(SchemaError, match=":1:"):
            read_annotations(str(path))

    def test_label_strings_must_match_exactly(self, tmp_path):
        path = tmp_path / "ann.jsonl"
        path.write_text(
            '{"post_id": "p1", "annotator_id": "a1", "lonely": true, "duration": "Transient", '
            '"context": "social", "interpersonal": "peers", "interaction": "reach-out"}\n'
        )
        with pytest.raises(SchemaError):
            read_annotations(str(path))
