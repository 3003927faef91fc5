"""Reading, validating, and writing study files.

Three record kinds, each available as TSV (primary) or JSON lines:

  references  segment_id <TAB> ref_id <TAB> weight <TAB> is_original <TAB> text
  hypotheses  segment_id <TAB> system_id <TAB> text
  ratings     segment_id <TAB> system_id <TAB> rating

Files are UTF-8 with no header row by default (``header=True`` skips one
line); LF and CRLF are both accepted and LF is emitted. The free-text field
is last and may contain anything except tab and newline. JSON-lines files
carry one object per line with the same field names.

Serialization is canonical: records sorted by their identifying fields,
numbers written in shortest round-trip form. Serializing a canonicalized
file's records reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .correlation import SystemRatings
from .errors import CorpusFormatError, StudyDataError
from .metrics import Segment, WeightedReference, dbleu_ineligible
from .tokens import TokenSeq, tokenize

logger = logging.getLogger("dbleu")

FORMATS = ("tsv", "jsonl")

DEFAULT_RAW_SCALE = (1.0, 5.0)


@dataclass(frozen=True)
class ReferenceRecord:
    segment_id: str
    ref_id: str
    weight: float
    is_original: bool
    text: str


@dataclass(frozen=True)
class HypothesisRecord:
    segment_id: str
    system_id: str
    text: str


@dataclass(frozen=True)
class RatingRecord:
    segment_id: str
    system_id: str
    rating: float


def _normalize_format(fmt: str) -> str:
    fmt = fmt.lower().replace("json-lines", "jsonl")
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    return fmt


def _iter_lines(path: str | Path, header: bool) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, line) with the newline stripped."""
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if line.endswith("\r"):
                line = line[:-1]
            if header and lineno == 1:
                continue
            if not line:
                continue
            yield lineno, line


def _split_fields(path, lineno, line, n_fields, kind):
    fields = line.split("\t")
    if len(fields) != n_fields:
        raise CorpusFormatError(
            f"expected {n_fields} tab-separated {kind} fields, got {len(fields)}",
            path=path, line=lineno,
        )
    return fields


def _parse_json_line(path, lineno, line, keys):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"invalid JSON: {e.msg}", path=path, line=lineno) from None
    if not isinstance(obj, dict):
        raise CorpusFormatError("expected a JSON object", path=path, line=lineno)
    missing = [k for k in keys if k not in obj]
    if missing:
        raise CorpusFormatError(
            "missing field(s): " + ", ".join(missing), path=path, line=lineno
        )
    return obj


def _parse_weight(path, lineno, value) -> float:
    try:
        w = float(value)
    except (TypeError, ValueError):
        raise CorpusFormatError(f"weight {value!r} is not a number", path=path, line=lineno) from None
    if not -1.0 <= w <= 1.0:
        raise CorpusFormatError(f"weight {w} outside [-1, 1]", path=path, line=lineno)
    return w


def _parse_flag(path, lineno, value) -> bool:
    if isinstance(value, bool):
        return value
    if value in ("0", "1"):
        return value == "1"
    raise CorpusFormatError(
        f"is_original must be 0 or 1, got {value!r}", path=path, line=lineno
    )


def read_reference_records(
    path: str | Path, format: str = "tsv", header: bool = False
) -> list[ReferenceRecord]:
    fmt = _normalize_format(format)
    records: list[ReferenceRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in _iter_lines(path, header):
        if fmt == "tsv":
            sid, rid, weight, flag, text = _split_fields(path, lineno, line, 5, "reference")
        else:
            obj = _parse_json_line(
                path, lineno, line, ("segment_id", "ref_id", "weight", "is_original", "text")
            )
            sid, rid, weight, flag, text = (
                str(obj["segment_id"]), str(obj["ref_id"]),
                obj["weight"], obj["is_original"], str(obj["text"]),
            )
        key = (sid, rid)
        if key in seen:
            raise CorpusFormatError(
                f"duplicate reference ({sid!r}, {rid!r})", path=path, line=lineno
            )
        seen.add(key)
        records.append(
            ReferenceRecord(
                sid, rid, _parse_weight(path, lineno, weight),
                _parse_flag(path, lineno, flag), text,
            )
        )
    if not records:
        logger.warning("%s: no reference records found", path)
    return records


def read_hypothesis_records(
    path: str | Path, format: str = "tsv", header: bool = False
) -> list[HypothesisRecord]:
    fmt = _normalize_format(format)
    records: list[HypothesisRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in _iter_lines(path, header):
        if fmt == "tsv":
            sid, system, text = _split_fields(path, lineno, line, 3, "hypothesis")
        else:
            obj = _parse_json_line(path, lineno, line, ("segment_id", "system_id", "text"))
            sid, system, text = str(obj["segment_id"]), str(obj["system_id"]), str(obj["text"])
        key = (sid, system)
        if key in seen:
            raise CorpusFormatError(
                f"duplicate hypothesis ({sid!r}, {system!r})", path=path, line=lineno
            )
        seen.add(key)
        records.append(HypothesisRecord(sid, system, text))
    if not records:
        logger.warning("%s: no hypothesis records found", path)
    return records


def read_rating_records(
    path: str | Path,
    format: str = "tsv",
    header: bool = False,
    raw_scale: tuple[float, float] = DEFAULT_RAW_SCALE,
) -> list[RatingRecord]:
    fmt = _normalize_format(format)
    lo, hi = _check_scale(raw_scale)
    records: list[RatingRecord] = []
    for lineno, line in _iter_lines(path, header):
        if fmt == "tsv":
            sid, system, value = _split_fields(path, lineno, line, 3, "rating")
        else:
            obj = _parse_json_line(path, lineno, line, ("segment_id", "system_id", "rating"))
            sid, system, value = str(obj["segment_id"]), str(obj["system_id"]), obj["rating"]
        try:
            rating = float(value)
        except (TypeError, ValueError):
            raise CorpusFormatError(
                f"rating {value!r} is not a number", path=path, line=lineno
            ) from None
        if not lo <= rating <= hi:
            raise CorpusFormatError(
                f"rating {rating} outside the raw scale [{lo}, {hi}]",
                path=path, line=lineno,
            )
        records.append(RatingRecord(sid, system, rating))
    if not records:
        logger.warning("%s: no rating records found", path)
    return records


def _check_scale(raw_scale: tuple[float, float]) -> tuple[float, float]:
    lo, hi = float(raw_scale[0]), float(raw_scale[1])
    if not lo < hi:
        raise ValueError(f"raw scale must satisfy min < max, got ({lo}, {hi})")
    return lo, hi


def rescale_rating(value: float, raw_scale: tuple[float, float] = DEFAULT_RAW_SCALE) -> float:
    """Affine map of the raw rating scale onto [-1, +1]."""
    lo, hi = _check_scale(raw_scale)
    return 2.0 * (value - lo) / (hi - lo) - 1.0


def segments_from_records(
    records: Iterable[ReferenceRecord], normalize: bool = False
) -> list[Segment]:
    """Group reference records into Segments, sorted by segment id.

    Segments with no strictly-positive-weight reference load fine but are
    logged, since dBLEU will refuse them.
    """
    grouped: dict[str, list[ReferenceRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.segment_id, []).append(rec)
    segments = [
        Segment(
            sid,
            tuple(
                WeightedReference(tokenize(r.text, normalize), r.weight, r.is_original)
                for r in sorted(recs, key=lambda r: r.ref_id)
            ),
        )
        for sid, recs in sorted(grouped.items())
    ]
    bad = dbleu_ineligible(segments)
    if bad:
        logger.warning(
            "%d segment(s) have no positive-weight reference (dBLEU-ineligible): %s",
            len(bad), ", ".join(bad[:10]),
        )
    return segments


def load_references(
    path: str | Path, format: str = "tsv", header: bool = False, normalize: bool = False
) -> list[Segment]:
    return segments_from_records(read_reference_records(path, format, header), normalize)


def hypotheses_from_records(
    records: Iterable[HypothesisRecord], normalize: bool = False
) -> dict[str, dict[str, TokenSeq]]:
    """Group hypothesis records as {system_id: {segment_id: tokens}}, keys sorted."""
    grouped: dict[str, dict[str, TokenSeq]] = {}
    for rec in records:
        per_system = grouped.setdefault(rec.system_id, {})
        if rec.segment_id in per_system:
            raise StudyDataError(
                f"duplicate hypothesis ({rec.segment_id!r}, {rec.system_id!r})"
            )
        per_system[rec.segment_id] = tokenize(rec.text, normalize)
    return {
        system: dict(sorted(grouped[system].items())) for system in sorted(grouped)
    }


def load_hypotheses(
    path: str | Path, format: str = "tsv", header: bool = False, normalize: bool = False
) -> dict[str, dict[str, TokenSeq]]:
    """Hypotheses as {system_id: {segment_id: tokens}}, keys sorted."""
    return hypotheses_from_records(read_hypothesis_records(path, format, header), normalize)


def ratings_from_records(
    records: Iterable[RatingRecord],
    raw_scale: tuple[float, float] = DEFAULT_RAW_SCALE,
    rescale: bool = True,
) -> list[SystemRatings]:
    """Mean rating per (system, segment), optionally rescaled to [-1, +1].

    Multiple rows for one (segment, system) pair are averaged on the raw
    scale before rescaling.
    """
    lo, hi = _check_scale(raw_scale)
    sums: dict[str, dict[str, list[float]]] = {}
    for rec in records:
        if not lo <= rec.rating <= hi:
            raise StudyDataError(
                f"rating {rec.rating} for ({rec.segment_id!r}, {rec.system_id!r}) "
                f"outside the raw scale [{lo}, {hi}]"
            )
        sums.setdefault(rec.system_id, {}).setdefault(rec.segment_id, []).append(rec.rating)
    out = []
    for system in sorted(sums):
        ratings = {}
        for sid in sorted(sums[system]):
            mean = sum(sums[system][sid]) / len(sums[system][sid])
            ratings[sid] = rescale_rating(mean, raw_scale) if rescale else mean
        out.append(SystemRatings(system, ratings))
    return out


def load_ratings(
    path: str | Path,
    format: str = "tsv",
    header: bool = False,
    raw_scale: tuple[float, float] = DEFAULT_RAW_SCALE,
    rescale: bool = True,
) -> list[SystemRatings]:
    """Mean rating per (system, segment), optionally rescaled to [-1, +1]."""
    return ratings_from_records(
        read_rating_records(path, format, header, raw_scale), raw_scale, rescale
    )


# ---------------------------------------------------------------------------
# Canonical serialization.


def _format_number(x: float) -> str:
    return repr(float(x))


def serialize_references(records: Iterable[ReferenceRecord]) -> str:
    lines = [
        "\t".join(
            (r.segment_id, r.ref_id, _format_number(r.weight),
             "1" if r.is_original else "0", r.text)
        )
        for r in sorted(records, key=lambda r: (r.segment_id, r.ref_id))
    ]
    return "".join(line + "\n" for line in lines)


def serialize_hypotheses(records: Iterable[HypothesisRecord]) -> str:
    lines = [
        "\t".join((r.segment_id, r.system_id, r.text))
        for r in sorted(records, key=lambda r: (r.segment_id, r.system_id))
    ]
    return "".join(line + "\n" for line in lines)


def serialize_ratings(records: Iterable[RatingRecord]) -> str:
    lines = [
        "\t".join((r.segment_id, r.system_id, _format_number(r.rating)))
        for r in sorted(records, key=lambda r: (r.segment_id, r.system_id, r.rating))
    ]
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# Study-level validation.


@dataclass(frozen=True)
class StudyValidation:
    """Cross-file consistency report; never raises, only lists issues."""

    n_segments: int
    n_references: int
    n_systems: int
    n_rated_systems: int
    issues: tuple[str, ...]
    dbleu_ineligible: tuple[str, ...]
    observed_weights: tuple[float, ...]

    @property
    def ok(self) -> bool:
        return not self.issues


def _preview(ids: Sequence[str], limit: int = 5) -> str:
    shown = ", ".join(list(ids)[:limit])
    if len(ids) > limit:
        shown += f" (+{len(ids) - limit} more)"
    return shown


def validate_study(
    segments: Sequence[Segment],
    hypotheses: Mapping[str, Mapping[str, TokenSeq]] | None = None,
    ratings: Sequence[SystemRatings] | None = None,
) -> StudyValidation:
    """Cross-check id coverage and dBLEU eligibility across the study files."""
    issues: list[str] = []
    seg_ids = {s.segment_id for s in segments}
    if not segments:
        issues.append("reference corpus is empty")

    weights = sorted(
        {r.weight for s in segments for r in s.references}, reverse=True
    )
    ineligible = tuple(dbleu_ineligible(segments))
    if ineligible:
        issues.append(
            f"{len(ineligible)} segment(s) have no positive-weight reference "
            f"(dBLEU-ineligible): {_preview(ineligible)}"
        )

    hypotheses = hypotheses or {}
    for system in sorted(hypotheses):
        sys_hyps = hypotheses[system]
        unknown = sorted(set(sys_hyps) - seg_ids)
        if unknown:
            issues.append(
                f"system {system!r} has hypotheses for unknown segment(s): {_preview(unknown)}"
            )
        missing = sorted(seg_ids - set(sys_hyps))
        if missing:
            issues.append(
                f"system {system!r} is missing hypotheses for "
                f"{len(missing)} segment(s): {_preview(missing)}"
            )

    ratings = ratings or []
    rated_systems = {sr.system_id for sr in ratings}
    for sr in sorted(ratings, key=lambda r: r.system_id):
        unknown = sorted(set(sr.ratings) - seg_ids)
        if unknown:
            issues.append(
                f"system {sr.system_id!r} has ratings for unknown segment(s): {_preview(unknown)}"
            )
        if hypotheses:
            if sr.system_id not in hypotheses:
                issues.append(f"system {sr.system_id!r} is rated but has no hypotheses")
            else:
                unrated = sorted(set(hypotheses[sr.system_id]) & seg_ids - set(sr.ratings))
                if unrated:
                    issues.append(
                        f"system {sr.system_id!r} is missing ratings for "
                        f"{len(unrated)} segment(s): {_preview(unrated)}"
                    )
    if hypotheses and ratings:
        unrated_systems = sorted(set(hypotheses) - rated_systems)
        if unrated_systems:
            issues.append("system(s) without any ratings: " + _preview(unrated_systems))

    return StudyValidation(
        n_segments=len(segments),
        n_references=sum(len(s.references) for s in segments),
        n_systems=len(hypotheses),
        n_rated_systems=len(rated_systems),
        issues=tuple(issues),
        dbleu_ineligible=ineligible,
        observed_weights=tuple(weights),
    )
