"""Assembling full correlation studies and parameter sweeps.

A study takes the loaded corpus, every system's hypotheses, and every
system's mean ratings, then evaluates one or more metric variants (metric
kind x reference-selection mode) over the same sampled assignments.

The segments actually used — the study universe — are those usable under
EVERY requested variant (present after reference selection, dBLEU-eligible
where needed) AND covered by a hypothesis and a rating from every system.
Anything else is excluded up front, with a logged reason, so that all
variants see identical observation units; this is what makes coefficients
comparable across rows of one report.

A sweep is a series of studies sharing one seed, one per axis value
(reference-weight threshold, unit size, or maximum n-gram order); axis
values that make the study degenerate are skipped with a warning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .correlation import (
    CorrelationSummary,
    SystemRatings,
    assignment_index_array,
    correlate,
)
from .errors import DegenerateStatisticsError, StudyDataError
from .metrics import (
    MetricConfig,
    Segment,
    build_stats_table,
    score_units_array,
    select_references,
)
from .tokens import TokenSeq

logger = logging.getLogger("dbleu")

SWEEP_AXES = ("threshold", "unit-size", "max-n")

DEFAULT_UNIT_SIZES = (1, 10, 25, 50, 100)
DEFAULT_MAX_ORDERS = (1, 2, 3, 4)


@dataclass(frozen=True)
class MetricVariant:
    """One row of a study: a metric configuration plus a reference mode."""

    config: MetricConfig
    ref_mode: str = "all"

    @property
    def label(self) -> str:
        return self.config.label


@dataclass(frozen=True)
class StudyRow:
    metric: str
    ref_mode: str
    summary: CorrelationSummary


@dataclass(frozen=True)
class StudyResult:
    rows: tuple[StudyRow, ...]
    systems: tuple[str, ...]
    pairs: tuple[tuple[str, str], ...]
    n_segments_used: int
    excluded: tuple[tuple[str, str], ...]  # (segment_id, reason)
    unit_size: int
    assignments: int
    seed: int


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float | int
    metric: str
    ref_mode: str
    summary: CorrelationSummary


@dataclass(frozen=True)
class SweepResult:
    axis: str
    rows: tuple[SweepRow, ...]
    skipped: tuple[tuple[float | int, str], ...]  # (axis value, reason)
    seed: int


def build_variants(
    metrics: Sequence[str],
    ref_modes: Sequence[str] = ("all",),
    max_order: int = 2,
    smoothing: str | None = None,
) -> list[MetricVariant]:
    if not metrics:
        raise ValueError("at least one metric kind is required")
    if not ref_modes:
        raise ValueError("at least one ref mode is required")
    return [
        MetricVariant(MetricConfig(kind=kind, max_order=max_order, smoothing=smoothing), mode)
        for kind in metrics
        for mode in ref_modes
    ]


def _ratings_by_system(ratings: Sequence[SystemRatings]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for sr in ratings:
        if sr.system_id in out:
            raise StudyDataError(f"duplicate ratings entry for system {sr.system_id!r}")
        out[sr.system_id] = sr.ratings
    return out


def _transformed_segment_maps(
    segments: Sequence[Segment], variants: Sequence[MetricVariant]
) -> dict[str, dict[str, Segment]]:
    """Reference selection applied once per distinct ref mode."""
    out = {}
    for mode in {v.ref_mode for v in variants}:
        out[mode] = {s.segment_id: s for s in select_references(segments, mode)}
    return out


def resolve_universe(
    segments: Sequence[Segment],
    hypotheses: Mapping[str, Mapping[str, TokenSeq]],
    ratings: Sequence[SystemRatings],
    variants: Sequence[MetricVariant],
) -> tuple[list[str], dict[str, dict[str, Segment]], list[tuple[str, str]]]:
    """The segment ids usable by every variant and covered by every system.

    Returns (sorted ids, per-ref-mode segment maps, excluded (id, reason))."""
    systems = sorted(hypotheses)
    if len(systems) < 2:
        raise StudyDataError(f"a study needs at least 2 systems, got {len(systems)}")
    by_system = _ratings_by_system(ratings)
    missing_ratings = [s for s in systems if s not in by_system]
    if missing_ratings:
        raise StudyDataError(
            "no ratings for system(s): " + ", ".join(missing_ratings)
        )
    extra = sorted(set(by_system) - set(systems))
    if extra:
        logger.warning("ignoring ratings for system(s) without hypotheses: %s", ", ".join(extra))

    seg_maps = _transformed_segment_maps(segments, variants)
    excluded: list[tuple[str, str]] = []
    universe: list[str] = []
    for seg in segments:
        sid = seg.segment_id
        reason = None
        for variant in variants:
            seg_map = seg_maps[variant.ref_mode]
            if sid not in seg_map:
                reason = f"no references left under ref mode {variant.ref_mode!r}"
                break
            if variant.config.kind == "dbleu" and not seg_map[sid].has_positive_reference:
                reason = (
                    f"no positive-weight reference under ref mode {variant.ref_mode!r} "
                    "(dBLEU-ineligible)"
                )
                break
        if reason is None:
            for system in systems:
                if sid not in hypotheses[system]:
                    reason = f"system {system!r} has no hypothesis"
                    break
                if sid not in by_system[system]:
                    reason = f"system {system!r} has no rating"
                    break
        if reason is None:
            universe.append(sid)
        else:
            excluded.append((sid, reason))
    if excluded:
        logger.warning(
            "excluded %d segment(s) from the study: %s",
            len(excluded),
            "; ".join(f"{sid}: {why}" for sid, why in excluded[:5]),
        )
    if not universe:
        raise StudyDataError("no segments remain after applying the study constraints")
    return universe, seg_maps, excluded


def run_correlation_study(
    segments: Sequence[Segment],
    hypotheses: Mapping[str, Mapping[str, TokenSeq]],
    ratings: Sequence[SystemRatings],
    variants: Sequence[MetricVariant],
    *,
    unit_size: int = 100,
    n_assignments: int = 1000,
    n_bootstrap: int = 1000,
    seed: int = 0,
    pairs: Sequence[tuple[str, str]] | None = None,
    threads: int | None = None,
) -> StudyResult:
    """Evaluate every metric variant over one shared set of sampled assignments."""
    universe, seg_maps, excluded = resolve_universe(segments, hypotheses, ratings, variants)
    systems = sorted(hypotheses)
    if pairs is None:
        pairs = list(combinations(systems, 2))
    else:
        pairs = [tuple(p) for p in pairs]
        for a, b in pairs:
            for system in (a, b):
                if system not in hypotheses:
                    raise StudyDataError(f"pair references unknown system {system!r}")
    if not pairs:
        raise StudyDataError("no system pairs to correlate")

    if unit_size > len(universe):
        raise StudyDataError(
            f"unit size {unit_size} exceeds the {len(universe)} usable segment(s)"
        )
    idx = assignment_index_array(len(universe), unit_size, n_assignments, seed)

    by_system_ratings = _ratings_by_system(ratings)
    unit_ratings: dict[str, np.ndarray] = {}
    for system in systems:
        vec = np.array([by_system_ratings[system][sid] for sid in universe])
        unit_ratings[system] = vec[idx].mean(axis=-1)

    rows = []
    for variant in variants:
        seg_map = seg_maps[variant.ref_mode]
        unit_scores = {}
        for system in systems:
            table = build_stats_table(hypotheses[system], universe, seg_map, variant.config)
            unit_scores[system] = score_units_array(table, idx)
        summary = correlate(
            unit_scores,
            unit_ratings,
            pairs,
            unit_size=unit_size,
            seed=seed,
            n_bootstrap=n_bootstrap,
            threads=threads,
        )
        rows.append(StudyRow(variant.label, variant.ref_mode, summary))

    return StudyResult(
        rows=tuple(rows),
        systems=tuple(systems),
        pairs=tuple(pairs),
        n_segments_used=len(universe),
        excluded=tuple(excluded),
        unit_size=unit_size,
        assignments=n_assignments,
        seed=seed,
    )


def default_threshold_grid(segments: Sequence[Segment]) -> list[float]:
    """Distinct reference weights observed in the corpus, descending."""
    return sorted({r.weight for s in segments for r in s.references}, reverse=True)


def run_sweep(
    segments: Sequence[Segment],
    hypotheses: Mapping[str, Mapping[str, TokenSeq]],
    ratings: Sequence[SystemRatings],
    *,
    axis: str,
    values: Sequence[float | int] | None = None,
    metrics: Sequence[str] = ("bleu", "dbleu"),
    ref_mode: str = "all",
    max_order: int = 2,
    smoothing: str | None = None,
    unit_size: int = 100,
    n_assignments: int = 1000,
    n_bootstrap: int = 1000,
    seed: int = 0,
    pairs: Sequence[tuple[str, str]] | None = None,
    threads: int | None = None,
) -> SweepResult:
    """One study per axis value, all sharing the same seed.

    threshold: the axis value becomes the ref mode ``threshold:<v>``;
    unit-size: the axis value replaces ``unit_size``;
    max-n: the axis value replaces ``max_order``.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if values is None:
        if axis == "threshold":
            values = default_threshold_grid(segments)
        elif axis == "unit-size":
            values = list(DEFAULT_UNIT_SIZES)
        else:
            values = list(DEFAULT_MAX_ORDERS)
    if not values:
        raise ValueError("sweep values must be nonempty")

    rows: list[SweepRow] = []
    skipped: list[tuple[float | int, str]] = []
    for value in values:
        kwargs = dict(
            unit_size=unit_size,
            n_assignments=n_assignments,
            n_bootstrap=n_bootstrap,
            seed=seed,
            pairs=pairs,
            threads=threads,
        )
        if axis == "threshold":
            variants = build_variants(metrics, (f"threshold:{value}",), max_order, smoothing)
        elif axis == "unit-size":
            variants = build_variants(metrics, (ref_mode,), max_order, smoothing)
            kwargs["unit_size"] = int(value)
        else:
            variants = build_variants(metrics, (ref_mode,), int(value), smoothing)
        try:
            result = run_correlation_study(segments, hypotheses, ratings, variants, **kwargs)
        except (DegenerateStatisticsError, StudyDataError) as e:
            logger.warning("sweep %s=%s skipped: %s", axis, value, e)
            skipped.append((value, str(e)))
            continue
        for row in result.rows:
            rows.append(SweepRow(axis, value, row.metric, row.ref_mode, row.summary))

    if not rows:
        raise DegenerateStatisticsError(
            f"every value of the {axis} sweep was degenerate or unusable"
        )
    return SweepResult(axis=axis, rows=tuple(rows), skipped=tuple(skipped), seed=seed)
