"""File parsing, canonical serialization, and study validation."""

import json
import logging

import pytest

from dbleu.corpusio import (
    HypothesisRecord,
    RatingRecord,
    ReferenceRecord,
    load_hypotheses,
    load_ratings,
    load_references,
    read_hypothesis_records,
    read_rating_records,
    read_reference_records,
    rescale_rating,
    segments_from_records,
    serialize_hypotheses,
    serialize_ratings,
    serialize_references,
    validate_study,
)
from dbleu.errors import CorpusFormatError
from dbleu.metrics import Segment, WeightedReference


def write(tmp_path, name, content):
    p = tmp_path / name
    p.write_text(content, encoding="utf-8", newline="")
    return p


REFS_TSV = (
    "s1\tr1\t0.8\t1\tit 's a good day\n"
    "s1\tr2\t-0.7\t0\tno it is not\n"
    "s2\tr1\t1.0\t1\tfine\n"
)


class TestReadReferences:
    def test_groups_records_into_segments(self, tmp_path):
        p = write(tmp_path, "refs.tsv", REFS_TSV)
        segments = load_references(p)
        assert [s.segment_id for s in segments] == ["s1", "s2"]
        s1 = segments[0]
        assert len(s1.references) == 2
        assert s1.references[0].weight == 0.8
        assert s1.references[0].is_original
        assert s1.references[0].tokens == ("it", "'s", "a", "good", "day")
        assert s1.references[1].weight == -0.7

    def test_out_of_range_weight_names_the_line(self, tmp_path):
        p = write(tmp_path, "refs.tsv", "s1\tr1\t0.5\t0\tok\ns1\tr2\t1.5\t0\tbad\n")
        with pytest.raises(CorpusFormatError) as err:
            load_references(p)
        assert "refs.tsv:2" in str(err.value)
        assert "1.5" in str(err.value)

    def test_non_numeric_weight_rejected(self, tmp_path):
        p = write(tmp_path, "refs.tsv", "s1\tr1\thigh\t0\tok\n")
        with pytest.raises(CorpusFormatError, match="high"):
            load_references(p)

    def test_bad_flag_rejected(self, tmp_path):
        p = write(tmp_path, "refs.tsv", "s1\tr1\t0.5\tyes\tok\n")
        with pytest.raises(CorpusFormatError, match="is_original"):
            load_references(p)

    def test_duplicate_reference_id_rejected(self, tmp_path):
        p = write(tmp_path, "refs.tsv", "s1\tr1\t0.5\t0\ta\ns1\tr1\t0.6\t0\tb\n")
        with pytest.raises(CorpusFormatError, match="duplicate"):
            load_references(p)

    def test_wrong_field_count_names_the_line(self, tmp_path):
        p = write(tmp_path, "refs.tsv", "s1\tr1\t0.5\t0\ta\ns1\tr2\t0.5\n")
        with pytest.raises(CorpusFormatError) as err:
            load_references(p)
        assert ":2" in str(err.value)

    def test_empty_file_warns_and_loads_nothing(self, tmp_path, caplog):
        p = write(tmp_path, "refs.tsv", "")
        with caplog.at_level(logging.WARNING, logger="dbleu"):
            assert load_references(p) == []
        assert "no reference records" in caplog.text

    def test_header_row_skipped_on_request(self, tmp_path):
        p = write(tmp_path, "refs.tsv", "segment_id\tref_id\tweight\tis_original\ttext\n" + REFS_TSV)
        assert len(load_references(p, header=True)) == 2

    def test_crlf_parsed_like_lf(self, tmp_path):
        p = write(tmp_path, "refs.tsv", REFS_TSV.replace("\n", "\r\n"))
        assert load_references(p) == load_references(write(tmp_path, "lf.tsv", REFS_TSV))

    def test_blank_lines_skipped(self, tmp_path):
        p = write(tmp_path, "refs.tsv", "\n" + REFS_TSV + "\n\n")
        assert len(read_reference_records(p)) == 3

    def test_text_preserved_verbatim(self, tmp_path):
        text = "  zwei  Wörter — mit Satzzeichen! "
        p = write(tmp_path, "refs.tsv", f"s1\tr1\t0.5\t0\t{text}\n")
        [rec] = read_reference_records(p)
        assert rec.text == text

    def test_jsonl_equivalent(self, tmp_path):
        rows = [
            {"segment_id": "s1", "ref_id": "r1", "weight": 0.8, "is_original": True,
             "text": "it 's a good day"},
            {"segment_id": "s1", "ref_id": "r2", "weight": -0.7, "is_original": False,
             "text": "no it is not"},
            {"segment_id": "s2", "ref_id": "r1", "weight": 1.0, "is_original": True,
             "text": "fine"},
        ]
        p = write(tmp_path, "refs.jsonl", "".join(json.dumps(r) + "\n" for r in rows))
        tsv = write(tmp_path, "refs.tsv", REFS_TSV)
        assert load_references(p, format="jsonl") == load_references(tsv)

    def test_jsonl_missing_field_rejected(self, tmp_path):
        p = write(tmp_path, "refs.jsonl", json.dumps({"segment_id": "s1"}) + "\n")
        with pytest.raises(CorpusFormatError, match="missing field"):
            read_reference_records(p, format="jsonl")

    def test_jsonl_malformed_line_rejected(self, tmp_path):
        p = write(tmp_path, "refs.jsonl", "{not json\n")
        with pytest.raises(CorpusFormatError, match="invalid JSON"):
            read_reference_records(p, format="jsonl")

    def test_unknown_format_rejected(self, tmp_path):
        p = write(tmp_path, "refs.xml", "")
        with pytest.raises(ValueError, match="format"):
            read_reference_records(p, format="xml")

    def test_line_order_does_not_matter(self, tmp_path):
        lines = REFS_TSV.splitlines(keepends=True)
        a = write(tmp_path, "a.tsv", "".join(lines))
        b = write(tmp_path, "b.tsv", "".join(reversed(lines)))
        assert load_references(a) == load_references(b)

    def test_ineligible_segments_logged_not_fatal(self, tmp_path, caplog):
        p = write(tmp_path, "refs.tsv", "s1\tr1\t-0.3\t0\tbad only\n")
        with caplog.at_level(logging.WARNING, logger="dbleu"):
            [seg] = load_references(p)
        assert not seg.has_positive_reference
        assert "dBLEU-ineligible" in caplog.text

    def test_normalize_flag_lowercases(self, tmp_path):
        p = write(tmp_path, "refs.tsv", "s1\tr1\t0.5\t0\tThe CAT\n")
        [seg] = load_references(p, normalize=True)
        assert seg.references[0].tokens == ("the", "cat")


HYPS_TSV = (
    "s1\tsysA\tfirst response\n"
    "s2\tsysA\tsecond response\n"
    "s1\tsysB\tanother one\n"
    "s2\tsysB\tlast one\n"
)


class TestReadHypotheses:
    def test_grouped_by_system_then_segment(self, tmp_path):
        p = write(tmp_path, "hyps.tsv", HYPS_TSV)
        hyps = load_hypotheses(p)
        assert list(hyps) == ["sysA", "sysB"]
        assert list(hyps["sysA"]) == ["s1", "s2"]
        assert hyps["sysB"]["s1"] == ("another", "one")

    def test_duplicate_pair_rejected(self, tmp_path):
        p = write(tmp_path, "hyps.tsv", "s1\tA\tx\ns1\tA\ty\n")
        with pytest.raises(CorpusFormatError, match="duplicate"):
            load_hypotheses(p)

    def test_jsonl_equivalent(self, tmp_path):
        rows = [
            {"segment_id": "s1", "system_id": "sysA", "text": "first response"},
            {"segment_id": "s2", "system_id": "sysA", "text": "second response"},
            {"segment_id": "s1", "system_id": "sysB", "text": "another one"},
            {"segment_id": "s2", "system_id": "sysB", "text": "last one"},
        ]
        p = write(tmp_path, "h.jsonl", "".join(json.dumps(r) + "\n" for r in rows))
        tsv = write(tmp_path, "h.tsv", HYPS_TSV)
        assert load_hypotheses(p, format="jsonl") == load_hypotheses(tsv)

    def test_empty_hypothesis_text_allowed(self, tmp_path):
        p = write(tmp_path, "hyps.tsv", "s1\tA\t\n")
        assert load_hypotheses(p)["A"]["s1"] == ()


class TestReadRatings:
    def test_repeated_rows_averaged_then_rescaled(self, tmp_path):
        lines = "".join(f"s1\tA\t{r}\n" for r in (4, 4, 5, 3, 4))
        p = write(tmp_path, "ratings.tsv", lines)
        [sr] = load_ratings(p)
        assert sr.system_id == "A"
        assert sr.ratings["s1"] == pytest.approx(0.5)  # mean 4.0 on (1,5)

    def test_raw_means_when_rescaling_disabled(self, tmp_path):
        p = write(tmp_path, "ratings.tsv", "s1\tA\t4\ns1\tA\t5\n")
        [sr] = load_ratings(p, rescale=False)
        assert sr.ratings["s1"] == pytest.approx(4.5)

    def test_out_of_scale_rating_names_the_line(self, tmp_path):
        p = write(tmp_path, "ratings.tsv", "s1\tA\t4\ns1\tA\t6\n")
        with pytest.raises(CorpusFormatError) as err:
            load_ratings(p)
        assert ":2" in str(err.value)

    def test_custom_scale(self, tmp_path):
        p = write(tmp_path, "ratings.tsv", "s1\tA\t10\ns2\tA\t0\n")
        [sr] = load_ratings(p, raw_scale=(0, 10))
        assert sr.ratings == {"s1": 1.0, "s2": -1.0}

    def test_degenerate_scale_rejected(self, tmp_path):
        p = write(tmp_path, "r.tsv", "s1\tA\t3\n")
        with pytest.raises(ValueError):
            load_ratings(p, raw_scale=(5, 5))

    def test_non_numeric_rating_rejected(self, tmp_path):
        p = write(tmp_path, "r.tsv", "s1\tA\tgood\n")
        with pytest.raises(CorpusFormatError, match="good"):
            load_ratings(p)

    @pytest.mark.parametrize(
        "raw,expected", [(1.0, -1.0), (3.0, 0.0), (4.0, 0.5), (5.0, 1.0)]
    )
    def test_rescale_mapping(self, raw, expected):
        assert rescale_rating(raw) == pytest.approx(expected)


class TestSerialization:
    def records(self):
        return [
            ReferenceRecord("s2", "r1", 1.0, True, "fine"),
            ReferenceRecord("s1", "r2", -0.7, False, "no it is not"),
            ReferenceRecord("s1", "r1", 0.8, True, "it 's a good day"),
        ]

    def test_references_serialize_sorted(self):
        out = serialize_references(self.records())
        assert out == REFS_TSV

    def test_reference_round_trip_is_byte_stable(self, tmp_path):
        canonical = serialize_references(self.records())
        p = write(tmp_path, "refs.tsv", canonical)
        assert serialize_references(read_reference_records(p)) == canonical

    def test_hypotheses_round_trip(self, tmp_path):
        recs = [
            HypothesisRecord("s1", "sysA", "first response"),
            HypothesisRecord("s1", "sysB", "another one"),
            HypothesisRecord("s2", "sysA", "second response"),
            HypothesisRecord("s2", "sysB", "last one"),
        ]
        canonical = serialize_hypotheses(recs)
        p = write(tmp_path, "h.tsv", canonical)
        assert serialize_hypotheses(read_hypothesis_records(p)) == canonical

    def test_ratings_round_trip(self, tmp_path):
        recs = [RatingRecord("s1", "A", 4.0), RatingRecord("s1", "B", 2.5)]
        canonical = serialize_ratings(recs)
        p = write(tmp_path, "r.tsv", canonical)
        assert serialize_ratings(read_rating_records(p)) == canonical

    def test_weights_keep_full_precision(self, tmp_path):
        rec = ReferenceRecord("s1", "r1", 0.123456789012345, False, "x")
        p = write(tmp_path, "refs.tsv", serialize_references([rec]))
        [back] = read_reference_records(p)
        assert back.weight == rec.weight


def make_segments():
    return segments_from_records([
        ReferenceRecord("s1", "r1", 0.8, True, "a b"),
        ReferenceRecord("s1", "r2", -0.7, False, "c d"),
        ReferenceRecord("s2", "r1", 0.6, True, "e f"),
    ])


class TestValidateStudy:
    def consistent_inputs(self):
        segments = make_segments()
        hyps = {
            "A": {"s1": ("a",), "s2": ("e",)},
            "B": {"s1": ("b",), "s2": ("f",)},
        }
        from dbleu.correlation import SystemRatings

        ratings = [
            SystemRatings("A", {"s1": 0.5, "s2": 0.5}),
            SystemRatings("B", {"s1": 0.0, "s2": -0.5}),
        ]
        return segments, hyps, ratings

    def test_consistent_study_has_no_issues(self):
        report = validate_study(*self.consistent_inputs())
        assert report.ok
        assert report.issues == ()
        assert report.n_segments == 2
        assert report.n_references == 3
        assert report.n_systems == 2
        assert report.n_rated_systems == 2
        assert report.observed_weights == (0.8, 0.6, -0.7)

    def test_unknown_hypothesis_segment_reported(self):
        segments, hyps, ratings = self.consistent_inputs()
        hyps["A"]["s9"] = ("x",)
        report = validate_study(segments, hyps, ratings)
        assert any("unknown segment" in i and "s9" in i for i in report.issues)

    def test_missing_hypothesis_coverage_reported(self):
        segments, hyps, ratings = self.consistent_inputs()
        del hyps["B"]["s2"]
        report = validate_study(segments, hyps, ratings)
        assert any("missing hypotheses" in i and "'B'" in i for i in report.issues)

    def test_ineligible_segment_reported(self):
        segments = make_segments() + segments_from_records(
            [ReferenceRecord("s3", "r1", -0.2, False, "x y")]
        )
        report = validate_study(segments)
        assert report.dbleu_ineligible == ("s3",)
        assert any("positive-weight" in i for i in report.issues)

    def test_missing_ratings_reported(self):
        segments, hyps, ratings = self.consistent_inputs()
        ratings[0].ratings.pop("s2")
        report = validate_study(segments, hyps, ratings)
        assert any("missing ratings" in i and "'A'" in i for i in report.issues)

    def test_rated_system_without_hypotheses_reported(self):
        segments, hyps, ratings = self.consistent_inputs()
        del hyps["B"]
        report = validate_study(segments, hyps, ratings)
        assert any("rated but has no hypotheses" in i for i in report.issues)

    def test_unrated_system_reported(self):
        segments, hyps, ratings = self.consistent_inputs()
        report = validate_study(segments, hyps, ratings[:1])
        assert any("without any ratings" in i and "B" in i for i in report.issues)

    def test_empty_corpus_reported(self):
        report = validate_study([])
        assert any("empty" in i for i in report.issues)

    def test_references_sorted_by_ref_id_within_segment(self):
        segments = segments_from_records([
            ReferenceRecord("s1", "r2", 0.5, False, "later"),
            ReferenceRecord("s1", "r1", 0.9, True, "earlier"),
        ])
        assert segments[0].references[0].tokens == ("earlier",)
