"""Corpus-level BLEU, weighted-reference dBLEU, and macro-averaged sentence BLEU.

Scores are computed from per-segment sufficient statistics that are additive
over segments, so a corpus score, a score on any subset of segments (an
observation unit), and the precomputed fast path used by the correlation
harness all agree.

Conventions pinned here:
  * n-gram precisions use uniform 1/N weights in the geometric mean;
  * the brevity penalty penalizes short hypotheses: BP = 1 iff the
    hypothesis total is >= the reference total, else e^(1 - ref/hyp);
  * the reference length of a segment is the one closest in length to the
    hypothesis, ties going to the shorter reference;
  * if any aggregated precision is <= 0 (possible for dBLEU, whose n-gram
    matches carry reference weights that may be negative), the score is 0
    and the offending orders are flagged on the report.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import IneligibleSegmentError, StudyDataError
from .tokens import TokenSeq, extract_ngrams

logger = logging.getLogger("dbleu")

METRIC_KINDS = ("bleu", "dbleu", "sbleu")
SMOOTHINGS = ("none", "add-one")


@dataclass(frozen=True)
class WeightedReference:
    """A reference token sequence with its human quality weight in [-1, +1]."""

    tokens: TokenSeq
    weight: float
    is_original: bool = False

    def __post_init__(self):
        if not -1.0 <= self.weight <= 1.0:
            raise ValueError(f"reference weight must be in [-1, 1], got {self.weight}")


@dataclass(frozen=True)
class Segment:
    """One test item: an id and its weighted reference set."""

    segment_id: str
    references: tuple[WeightedReference, ...]

    def __post_init__(self):
        if not self.references:
            raise ValueError(f"segment {self.segment_id!r} has no references")

    @property
    def max_weight(self) -> float:
        return max(r.weight for r in self.references)

    @property
    def has_positive_reference(self) -> bool:
        return self.max_weight > 0.0


@dataclass(frozen=True)
class MetricConfig:
    """Metric family plus the knobs shared by all of them.

    ``smoothing=None`` resolves to the family default: "none" for corpus
    bleu/dbleu, "add-one" (numerator and denominator of p_n for n >= 2)
    for sentence-level bleu.
    """

    kind: str = "bleu"
    max_order: int = 2
    smoothing: str | None = None
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ValueError(f"metric kind must be one of {METRIC_KINDS}, got {self.kind!r}")
        if not 1 <= self.max_order <= 9:
            raise ValueError(f"max_order must be in [1, 9], got {self.max_order}")
        if self.smoothing is not None and self.smoothing not in SMOOTHINGS:
            raise ValueError(f"smoothing must be one of {SMOOTHINGS}, got {self.smoothing!r}")

    @property
    def resolved_smoothing(self) -> str:
        if self.smoothing is not None:
            return self.smoothing
        return "add-one" if self.kind == "sbleu" else "none"

    @property
    def label(self) -> str:
        name = {"bleu": "BLEU", "dbleu": "dBLEU", "sbleu": "sBLEU"}[self.kind]
        return f"{name}-{self.max_order}"


@dataclass(frozen=True)
class MetricReport:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    segments_scored: int
    nonpositive_orders: tuple[int, ...] = ()


def brevity_penalty(hyp_len: int, ref_len: int) -> float:
    """e^(1 - ref_len/hyp_len) when the hypothesis total is shorter, else 1."""
    if hyp_len < 1 or ref_len < 1:
        raise ValueError(f"length totals must be >= 1, got hyp={hyp_len} ref={ref_len}")
    if hyp_len >= ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def closest_ref_length(hyp_len: int, ref_lens: Sequence[int]) -> int:
    """The reference length closest to ``hyp_len``; ties go to the shorter one."""
    if not ref_lens:
        raise ValueError("ref_lens must be nonempty")
    return min(ref_lens, key=lambda n: (abs(n - hyp_len), n))


def parse_ref_mode(mode: str) -> tuple[str, float | None]:
    """Parse a reference-selection mode: "all", "single", or "threshold:<w>"."""
    if mode in ("all", "single"):
        return mode, None
    if mode.startswith("threshold:"):
        try:
            w = float(mode.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad threshold in ref mode {mode!r}") from None
        if not -1.0 <= w <= 1.0:
            raise ValueError(f"ref-mode threshold must be in [-1, 1], got {w}")
        return "threshold", w
    raise ValueError(f"unknown ref mode {mode!r} (expected all, single, or threshold:<w>)")


def filter_references(segments: Iterable[Segment], threshold: float) -> list[Segment]:
    """Keep only references with weight >= threshold.

    Segments left with no references at all are dropped (and logged);
    segments left without any positive-weight reference are kept but logged,
    since only dBLEU refuses them.
    """
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [-1, 1], got {threshold}")
    kept: list[Segment] = []
    emptied: list[str] = []
    nonpositive: list[str] = []
    for seg in segments:
        refs = tuple(r for r in seg.references if r.weight >= threshold)
        if not refs:
            emptied.append(seg.segment_id)
            continue
        if max(r.weight for r in refs) <= 0.0:
            nonpositive.append(seg.segment_id)
        kept.append(Segment(seg.segment_id, refs))
    if emptied:
        logger.warning(
            "threshold %s left %d segment(s) without references; dropped: %s",
            threshold, len(emptied), ", ".join(emptied[:10]),
        )
    if nonpositive:
        logger.warning(
            "threshold %s left %d segment(s) without a positive-weight reference "
            "(dBLEU-ineligible): %s",
            threshold, len(nonpositive), ", ".join(nonpositive[:10]),
        )
    return kept


def select_references(segments: Iterable[Segment], mode: str) -> list[Segment]:
    """Apply a reference-selection mode: "all", "single", or "threshold:<w>"."""
    name, thr = parse_ref_mode(mode)
    if name == "all":
        return list(segments)
    if name == "threshold":
        return filter_references(segments, thr)
    kept: list[Segment] = []
    emptied: list[str] = []
    for seg in segments:
        refs = tuple(r for r in seg.references if r.is_original)
        if not refs:
            emptied.append(seg.segment_id)
            continue
        kept.append(Segment(seg.segment_id, refs))
    if emptied:
        logger.warning(
            "ref mode 'single' dropped %d segment(s) with no original reference: %s",
            len(emptied), ", ".join(emptied[:10]),
        )
    return kept


def dbleu_ineligible(segments: Iterable[Segment]) -> list[str]:
    """Ids of segments with no strictly-positive-weight reference."""
    return [s.segment_id for s in segments if not s.has_positive_reference]


# ---------------------------------------------------------------------------
# Per-segment sufficient statistics.


def _ref_counters(seg: Segment, n: int) -> list[tuple[float, Counter]]:
    return [(r.weight, extract_ngrams(r.tokens, n)) for r in seg.references]


def _segment_lengths(hyp: TokenSeq, seg: Segment) -> tuple[int, int]:
    hyp_len = len(hyp)
    ref_len = closest_ref_length(hyp_len, [len(r.tokens) for r in seg.references])
    return hyp_len, ref_len


def _bleu_segment_stats(hyp: TokenSeq, seg: Segment, max_order: int) -> tuple[list[int], list[int]]:
    """Clipped match and candidate counts per order, references unweighted."""
    matches = [0] * max_order
    totals = [0] * max_order
    for n in range(1, max_order + 1):
        hyp_counts = extract_ngrams(hyp, n)
        if not hyp_counts:
            continue
        totals[n - 1] = sum(hyp_counts.values())
        ref_counts = [extract_ngrams(r.tokens, n) for r in seg.references]
        matched = 0
        for gram, c in hyp_counts.items():
            best = 0
            for rc in ref_counts:
                rcount = rc.get(gram, 0)
                if rcount > c:
                    rcount = c
                if rcount > best:
                    best = rcount
            matched += best
        matches[n - 1] = matched
    return matches, totals


def _dbleu_segment_stats(
    hyp: TokenSeq, seg: Segment, max_order: int
) -> tuple[list[float], list[float]]:
    """Weighted numerator/denominator per order.

    Each n-gram match contributes the best ``weight * clipped_count`` over the
    references containing it (0 if none does, negative if only bad references
    do); each candidate n-gram contributes ``max_weight * count`` to the
    denominator.
    """
    max_w = seg.max_weight
    nums = [0.0] * max_order
    dens = [0.0] * max_order
    for n in range(1, max_order + 1):
        hyp_counts = extract_ngrams(hyp, n)
        if not hyp_counts:
            continue
        ref_counts = _ref_counters(seg, n)
        num = 0.0
        den = 0.0
        for gram, c in hyp_counts.items():
            den += max_w * c
            best = None
            for w, rc in ref_counts:
                rcount = rc.get(gram, 0)
                if rcount == 0:
                    continue
                v = w * (c if rcount > c else rcount)
                if best is None or v > best:
                    best = v
            if best is not None:
                num += best
        nums[n - 1] = num
        dens[n - 1] = den
    return nums, dens


def _score_from_sums(
    matches: Sequence[float],
    totals: Sequence[float],
    hyp_len: int,
    ref_len: int,
    cfg: MetricConfig,
) -> tuple[float, tuple[float, ...], float, tuple[int, ...]]:
    """Turn aggregated statistics into (score, precisions, bp, nonpositive)."""
    smooth = cfg.resolved_smoothing
    precisions = []
    for i in range(cfg.max_order):
        num = float(matches[i])
        den = float(totals[i])
        if smooth == "add-one" and i >= 1:
            num += 1.0
            den += 1.0
        precisions.append(num / den if den > 0.0 else 0.0)
    nonpositive = tuple(i + 1 for i, p in enumerate(precisions) if p <= 0.0)
    if hyp_len == 0 or hyp_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    if nonpositive:
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / cfg.max_order)
    return score, tuple(precisions), bp, nonpositive


def _check_ids(hyps: Mapping[str, TokenSeq], by_id: Mapping[str, Segment]) -> list[str]:
    if not hyps:
        raise StudyDataError("empty hypothesis set: nothing to score")
    unknown = sorted(set(hyps) - set(by_id))
    if unknown:
        raise StudyDataError(
            "hypotheses reference unknown segment id(s): " + ", ".join(unknown[:10])
        )
    return sorted(hyps)


def corpus_bleu(
    hyps: Mapping[str, TokenSeq], segments: Sequence[Segment], cfg: MetricConfig | None = None
) -> MetricReport:
    """Corpus-level BLEU of one system's hypotheses; reference weights ignored.

    ``hyps`` maps segment ids to token tuples; only segments with a
    hypothesis are scored, and every hypothesis id must name a segment.
    """
    cfg = cfg or MetricConfig(kind="bleu")
    by_id = {s.segment_id: s for s in segments}
    ids = _check_ids(hyps, by_id)
    matches = [0.0] * cfg.max_order
    totals = [0.0] * cfg.max_order
    hyp_total = 0
    ref_total = 0
    for sid in ids:
        seg = by_id[sid]
        m, t = _bleu_segment_stats(hyps[sid], seg, cfg.max_order)
        for i in range(cfg.max_order):
            matches[i] += m[i]
            totals[i] += t[i]
        h, r = _segment_lengths(hyps[sid], seg)
        hyp_total += h
        ref_total += r
    score, precisions, bp, nonpos = _score_from_sums(matches, totals, hyp_total, ref_total, cfg)
    return MetricReport(score, precisions, bp, hyp_total, ref_total, len(ids), nonpos)


def corpus_dbleu(
    hyps: Mapping[str, TokenSeq], segments: Sequence[Segment], cfg: MetricConfig | None = None
) -> MetricReport:
    """Corpus-level dBLEU: n-gram matches weighted by the best-scoring reference.

    Refuses to score if any scored segment lacks a strictly-positive-weight
    reference (the weighted denominator would lose its meaning).
    """
    cfg = cfg or MetricConfig(kind="dbleu")
    by_id = {s.segment_id: s for s in segments}
    ids = _check_ids(hyps, by_id)
    bad = dbleu_ineligible(by_id[sid] for sid in ids)
    if bad:
        raise IneligibleSegmentError(bad)
    nums = [0.0] * cfg.max_order
    dens = [0.0] * cfg.max_order
    hyp_total = 0
    ref_total = 0
    for sid in ids:
        seg = by_id[sid]
        n, d = _dbleu_segment_stats(hyps[sid], seg, cfg.max_order)
        for i in range(cfg.max_order):
            nums[i] += n[i]
            dens[i] += d[i]
        h, r = _segment_lengths(hyps[sid], seg)
        hyp_total += h
        ref_total += r
    score, precisions, bp, nonpos = _score_from_sums(nums, dens, hyp_total, ref_total, cfg)
    return MetricReport(score, precisions, bp, hyp_total, ref_total, len(ids), nonpos)


def sentence_bleu(hyp: TokenSeq, seg: Segment, cfg: MetricConfig | None = None) -> float:
    """Smoothed single-sentence BLEU; an empty hypothesis scores 0."""
    cfg = cfg or MetricConfig(kind="sbleu")
    if not hyp:
        return 0.0
    m, t = _bleu_segment_stats(hyp, seg, cfg.max_order)
    h, r = _segment_lengths(hyp, seg)
    score, _, _, _ = _score_from_sums(m, t, h, r, cfg)
    return score


def macro_sbleu(
    hyps: Mapping[str, TokenSeq], segments: Sequence[Segment], cfg: MetricConfig | None = None
) -> MetricReport:
    """Arithmetic mean of per-sentence smoothed BLEU over the scored segments.

    The precision and brevity-penalty fields are unweighted means of the
    per-sentence values (informational only); length fields are totals.
    """
    cfg = cfg or MetricConfig(kind="sbleu")
    by_id = {s.segment_id: s for s in segments}
    ids = _check_ids(hyps, by_id)
    score_sum = 0.0
    prec_sums = [0.0] * cfg.max_order
    bp_sum = 0.0
    hyp_total = 0
    ref_total = 0
    for sid in ids:
        seg = by_id[sid]
        hyp = hyps[sid]
        h, r = _segment_lengths(hyp, seg)
        hyp_total += h
        ref_total += r
        if not hyp:
            continue  # scores 0; contributes 0 to every mean numerator
        m, t = _bleu_segment_stats(hyp, seg, cfg.max_order)
        s, precs, bp, _ = _score_from_sums(m, t, h, r, cfg)
        score_sum += s
        bp_sum += bp
        for i in range(cfg.max_order):
            prec_sums[i] += precs[i]
    n = len(ids)
    report = MetricReport(
        score=score_sum / n,
        precisions=tuple(p / n for p in prec_sums),
        brevity_penalty=bp_sum / n,
        hyp_length=hyp_total,
        ref_length=ref_total,
        segments_scored=n,
    )
    return report


# ---------------------------------------------------------------------------
# Precomputed per-segment statistics for the correlation harness.
#
# Corpus scores are additive over segments, so once the per-segment rows are
# known, the score of any observation unit is a reduction over its row
# indices. This is what makes 1K-assignment studies tractable.


@dataclass(frozen=True)
class SegmentStatsTable:
    cfg: MetricConfig
    matches: np.ndarray  # (I, N) float64
    totals: np.ndarray  # (I, N) float64
    hyp_len: np.ndarray  # (I,) int64
    ref_len: np.ndarray  # (I,) int64
    sent_scores: np.ndarray | None = None  # (I,) float64 when kind == "sbleu"

    def score_unit(self, idx: np.ndarray) -> float:
        """Metric score on the unit of segment rows ``idx``."""
        if self.sent_scores is not None:
            return float(np.sum(self.sent_scores[idx]) / len(idx))
        m = self.matches[idx].sum(axis=0)
        t = self.totals[idx].sum(axis=0)
        h = int(self.hyp_len[idx].sum())
        r = int(self.ref_len[idx].sum())
        score, _, _, _ = _score_from_sums(m, t, h, r, self.cfg)
        return score


def _scores_from_sums_array(
    matches: np.ndarray,
    totals: np.ndarray,
    hyp_len: np.ndarray,
    ref_len: np.ndarray,
    cfg: MetricConfig,
) -> np.ndarray:
    """Vectorized counterpart of _score_from_sums over (..., N) stat arrays."""
    num = matches.astype(np.float64, copy=True)
    den = totals.astype(np.float64, copy=True)
    if cfg.resolved_smoothing == "add-one":
        num[..., 1:] += 1.0
        den[..., 1:] += 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
    nonpositive = (p <= 0.0).any(axis=-1)
    hf = hyp_len.astype(np.float64)
    rf = ref_len.astype(np.float64)
    bp = np.where(
        (hf == 0.0) | (hf >= rf), 1.0, np.exp(1.0 - rf / np.where(hf > 0.0, hf, 1.0))
    )
    logs = np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    score = bp * np.exp(logs.sum(axis=-1) / cfg.max_order)
    return np.where(nonpositive, 0.0, score)


def score_units_array(table: SegmentStatsTable, idx: np.ndarray) -> np.ndarray:
    """Score every unit of an (..., M) segment-row index array at once.

    Each size-M index vector along the last axis is one observation unit;
    the result drops that axis. Work is chunked along the leading axis to
    bound peak memory.
    """
    if idx.ndim < 2:
        raise ValueError("idx must have at least 2 dimensions (units, unit size)")
    lead = idx.shape[0]
    per_block = idx[0].size * table.cfg.max_order
    chunk = max(1, (1 << 24) // max(1, per_block))
    parts = []
    for lo in range(0, lead, chunk):
        block = idx[lo : lo + chunk]
        if table.sent_scores is not None:
            parts.append(table.sent_scores[block].mean(axis=-1))
            continue
        m = table.matches[block].sum(axis=-2)
        t = table.totals[block].sum(axis=-2)
        h = table.hyp_len[block].sum(axis=-1)
        r = table.ref_len[block].sum(axis=-1)
        parts.append(_scores_from_sums_array(m, t, h, r, table.cfg))
    return np.concatenate(parts, axis=0)


def build_stats_table(
    hyps: Mapping[str, TokenSeq],
    ordered_ids: Sequence[str],
    segments_by_id: Mapping[str, Segment],
    cfg: MetricConfig,
) -> SegmentStatsTable:
    """Per-segment statistic rows for one system, aligned to ``ordered_ids``."""
    n_seg = len(ordered_ids)
    matches = np.zeros((n_seg, cfg.max_order))
    totals = np.zeros((n_seg, cfg.max_order))
    hyp_len = np.zeros(n_seg, dtype=np.int64)
    ref_len = np.zeros(n_seg, dtype=np.int64)
    sent = np.zeros(n_seg) if cfg.kind == "sbleu" else None
    if cfg.kind == "dbleu":
        bad = dbleu_ineligible(segments_by_id[sid] for sid in ordered_ids)
        if bad:
            raise IneligibleSegmentError(bad)
    for i, sid in enumerate(ordered_ids):
        seg = segments_by_id[sid]
        try:
            hyp = hyps[sid]
        except KeyError:
            raise StudyDataError(f"no hypothesis for segment {sid!r}") from None
        if cfg.kind == "dbleu":
            m, t = _dbleu_segment_stats(hyp, seg, cfg.max_order)
        else:
            m, t = _bleu_segment_stats(hyp, seg, cfg.max_order)
        matches[i] = m
        totals[i] = t
        hyp_len[i], ref_len[i] = _segment_lengths(hyp, seg)
        if sent is not None:
            sent[i] = sentence_bleu(hyp, seg, cfg)
    return SegmentStatsTable(cfg, matches, totals, hyp_len, ref_len, sent)
