"""Request handlers shared by the HTTP app and the in-process CLI client.

Each handler turns a request model into a response model, translating
library exceptions into a ServiceError with a stable error code:

  usage       bad parameter combinations (exit code 1 at the CLI)
  data        study data fails validation (exit code 2)
  degenerate  statistics undefined on the given data (exit code 3)
"""

from __future__ import annotations

from functools import wraps

from .. import __version__
from ..corpusio import (
    HypothesisRecord,
    RatingRecord,
    ReferenceRecord,
    hypotheses_from_records,
    ratings_from_records,
    segments_from_records,
    validate_study,
)
from ..errors import (
    CorpusFormatError,
    DegenerateStatisticsError,
    IneligibleSegmentError,
    StudyDataError,
)
from ..metrics import (
    MetricConfig,
    MetricReport,
    corpus_bleu,
    corpus_dbleu,
    macro_sbleu,
    select_references,
)
from ..study import build_variants, run_correlation_study, run_sweep
from . import schemas


class ServiceError(Exception):
    """An error with a wire-stable code, rendered as HTTP 422 / a CLI exit code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def to_detail(self) -> schemas.ErrorDetail:
        return schemas.ErrorDetail(code=self.code, message=self.message)


def _translating(fn):
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ServiceError:
            raise
        except DegenerateStatisticsError as e:
            raise ServiceError("degenerate", str(e)) from e
        except (CorpusFormatError, StudyDataError, IneligibleSegmentError) as e:
            raise ServiceError("data", str(e)) from e
        except ValueError as e:
            raise ServiceError("usage", str(e)) from e

    return wrapper


def _segments(references: list[schemas.ReferenceIn], normalize: bool):
    records = []
    seen = set()
    for r in references:
        key = (r.segment_id, r.ref_id)
        if key in seen:
            raise StudyDataError(f"duplicate reference ({r.segment_id!r}, {r.ref_id!r})")
        seen.add(key)
        records.append(
            ReferenceRecord(r.segment_id, r.ref_id, r.weight, r.is_original, r.text)
        )
    return segments_from_records(records, normalize)


def _hypotheses(hypotheses: list[schemas.HypothesisIn], normalize: bool):
    return hypotheses_from_records(
        [HypothesisRecord(h.segment_id, h.system_id, h.text) for h in hypotheses],
        normalize,
    )


def _ratings(ratings: list[schemas.RatingIn], raw_scale: tuple[float, float]):
    return ratings_from_records(
        [RatingRecord(r.segment_id, r.system_id, r.rating) for r in ratings], raw_scale
    )


def _summary_out(summary) -> schemas.SummaryOut:
    return schemas.SummaryOut(
        spearman_rho=summary.spearman_rho,
        kendall_tau=summary.kendall_tau,
        rho_ci=summary.rho_ci,
        tau_ci=summary.tau_ci,
        assignments=summary.assignments,
        unit_size=summary.unit_size,
        observations_per_assignment=summary.observations_per_assignment,
    )


@_translating
def handle_score(req: schemas.ScoreRequest) -> schemas.ScoreResponse:
    """Score one system's hypotheses over the (mode-filtered) reference corpus."""
    opts = req.options
    if not req.hypotheses:
        raise StudyDataError("empty hypothesis set: nothing to score")
    by_system = _hypotheses(req.hypotheses, opts.normalize)
    if req.system_id is not None:
        if req.system_id not in by_system:
            raise StudyDataError(f"no hypotheses for system {req.system_id!r}")
        system = req.system_id
    elif len(by_system) == 1:
        system = next(iter(by_system))
    else:
        raise ServiceError(
            "usage",
            "hypotheses span several systems; pass system_id to pick one: "
            + ", ".join(by_system),
        )
    segments = select_references(_segments(req.references, opts.normalize), opts.ref_mode)
    cfg = MetricConfig(kind=opts.metric, max_order=opts.max_n, smoothing=opts.smoothing)
    scorer = {"bleu": corpus_bleu, "dbleu": corpus_dbleu, "sbleu": macro_sbleu}[opts.metric]
    report: MetricReport = scorer(by_system[system], segments, cfg)
    return schemas.ScoreResponse(
        metric=cfg.label,
        ref_mode=opts.ref_mode,
        system_id=system,
        score=report.score,
        precisions=list(report.precisions),
        brevity_penalty=report.brevity_penalty,
        hyp_length=report.hyp_length,
        ref_length=report.ref_length,
        segments_scored=report.segments_scored,
        nonpositive_orders=list(report.nonpositive_orders),
    )


@_translating
def handle_correlate(req: schemas.CorrelateRequest) -> schemas.CorrelateResponse:
    opts = req.options
    segments = _segments(req.references, opts.normalize)
    hypotheses = _hypotheses(req.hypotheses, opts.normalize)
    ratings = _ratings(req.ratings, req.raw_scale)
    variants = build_variants(opts.metrics, opts.ref_modes, opts.max_n, opts.smoothing)
    result = run_correlation_study(
        segments,
        hypotheses,
        ratings,
        variants,
        unit_size=opts.unit_size,
        n_assignments=opts.assignments,
        n_bootstrap=opts.bootstrap,
        seed=opts.seed,
        threads=opts.threads,
    )
    return schemas.CorrelateResponse(
        rows=[
            schemas.StudyRowOut(
                metric=row.metric, ref_mode=row.ref_mode, summary=_summary_out(row.summary)
            )
            for row in result.rows
        ],
        systems=list(result.systems),
        pairs=list(result.pairs),
        segments_used=result.n_segments_used,
        excluded=[
            schemas.ExcludedSegment(segment_id=sid, reason=why)
            for sid, why in result.excluded
        ],
        unit_size=result.unit_size,
        assignments=result.assignments,
        seed=result.seed,
    )


@_translating
def handle_sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
    opts = req.options
    segments = _segments(req.references, opts.normalize)
    hypotheses = _hypotheses(req.hypotheses, opts.normalize)
    ratings = _ratings(req.ratings, req.raw_scale)
    if len(opts.ref_modes) != 1:
        raise ServiceError("usage", "a sweep uses exactly one base ref mode")
    result = run_sweep(
        segments,
        hypotheses,
        ratings,
        axis=opts.axis,
        values=opts.values,
        metrics=opts.metrics,
        ref_mode=opts.ref_modes[0],
        max_order=opts.max_n,
        smoothing=opts.smoothing,
        unit_size=opts.unit_size,
        n_assignments=opts.assignments,
        n_bootstrap=opts.bootstrap,
        seed=opts.seed,
        threads=opts.threads,
    )
    return schemas.SweepResponse(
        axis=result.axis,
        rows=[
            schemas.SweepRowOut(
                axis=row.axis,
                value=float(row.value),
                metric=row.metric,
                ref_mode=row.ref_mode,
                summary=_summary_out(row.summary),
            )
            for row in result.rows
        ],
        skipped=[
            schemas.SkippedValue(value=float(v), reason=why) for v, why in result.skipped
        ],
        seed=result.seed,
    )


@_translating
def handle_validate(req: schemas.ValidateRequest) -> schemas.ValidateResponse:
    segments = _segments(req.references, req.normalize)
    hypotheses = _hypotheses(req.hypotheses, req.normalize) if req.hypotheses else None
    ratings = _ratings(req.ratings, req.raw_scale) if req.ratings else None
    report = validate_study(segments, hypotheses, ratings)
    return schemas.ValidateResponse(
        ok=report.ok,
        n_segments=report.n_segments,
        n_references=report.n_references,
        n_systems=report.n_systems,
        n_rated_systems=report.n_rated_systems,
        issues=list(report.issues),
        dbleu_ineligible=list(report.dbleu_ineligible),
        observed_weights=list(report.observed_weights),
    )


def handle_health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)
