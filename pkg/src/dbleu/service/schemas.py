"""Wire models for the scoring and correlation service.

Requests carry the study data inline as record lists — the same fields as
the TSV/JSON-lines file formats — so any client that can read those files
can post them. Responses mirror the library's report types.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

MetricKind = Literal["bleu", "dbleu", "sbleu"]
Smoothing = Literal["none", "add-one"]
SweepAxis = Literal["threshold", "unit-size", "max-n"]


class ReferenceIn(BaseModel):
    segment_id: str
    ref_id: str
    weight: float = Field(ge=-1.0, le=1.0)
    is_original: bool = False
    text: str


class HypothesisIn(BaseModel):
    segment_id: str
    system_id: str
    text: str


class RatingIn(BaseModel):
    segment_id: str
    system_id: str
    rating: float


class MetricOptions(BaseModel):
    metric: MetricKind = "bleu"
    max_n: int = Field(default=2, ge=1, le=9)
    smoothing: Optional[Smoothing] = None
    normalize: bool = False
    ref_mode: str = "all"


class ScoreRequest(BaseModel):
    references: list[ReferenceIn]
    hypotheses: list[HypothesisIn]
    system_id: Optional[str] = None  # required if hypotheses span several systems
    options: MetricOptions = Field(default_factory=MetricOptions)


class ScoreResponse(BaseModel):
    metric: str
    ref_mode: str
    system_id: str
    score: float
    precisions: list[float]
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    segments_scored: int
    nonpositive_orders: list[int]


class StudyOptions(BaseModel):
    metrics: list[MetricKind] = Field(default_factory=lambda: ["bleu", "dbleu", "sbleu"])
    ref_modes: list[str] = Field(default_factory=lambda: ["all"])
    max_n: int = Field(default=2, ge=1, le=9)
    smoothing: Optional[Smoothing] = None
    normalize: bool = False
    unit_size: int = Field(default=100, ge=1)
    assignments: int = Field(default=1000, ge=1)
    bootstrap: int = Field(default=1000, ge=0)
    seed: int = Field(default=0, ge=0)
    threads: Optional[int] = Field(default=None, ge=1)


class CorrelateRequest(BaseModel):
    references: list[ReferenceIn]
    hypotheses: list[HypothesisIn]
    ratings: list[RatingIn]
    raw_scale: tuple[float, float] = (1.0, 5.0)
    options: StudyOptions = Field(default_factory=StudyOptions)


class SummaryOut(BaseModel):
    spearman_rho: float
    kendall_tau: float
    rho_ci: tuple[float, float]
    tau_ci: tuple[float, float]
    assignments: int
    unit_size: int
    observations_per_assignment: int


class StudyRowOut(BaseModel):
    metric: str
    ref_mode: str
    summary: SummaryOut


class ExcludedSegment(BaseModel):
    segment_id: str
    reason: str


class CorrelateResponse(BaseModel):
    rows: list[StudyRowOut]
    systems: list[str]
    pairs: list[tuple[str, str]]
    segments_used: int
    excluded: list[ExcludedSegment]
    unit_size: int
    assignments: int
    seed: int


class SweepOptions(StudyOptions):
    # sweeps fix one reference mode and vary a single axis instead
    ref_modes: list[str] = Field(default_factory=lambda: ["all"])
    axis: SweepAxis = "threshold"
    values: Optional[list[float]] = None


class SweepRequest(BaseModel):
    references: list[ReferenceIn]
    hypotheses: list[HypothesisIn]
    ratings: list[RatingIn]
    raw_scale: tuple[float, float] = (1.0, 5.0)
    options: SweepOptions = Field(default_factory=SweepOptions)


class SweepRowOut(BaseModel):
    axis: str
    value: float
    metric: str
    ref_mode: str
    summary: SummaryOut


class SkippedValue(BaseModel):
    value: float
    reason: str


class SweepResponse(BaseModel):
    axis: str
    rows: list[SweepRowOut]
    skipped: list[SkippedValue]
    seed: int


class ValidateRequest(BaseModel):
    references: list[ReferenceIn]
    hypotheses: list[HypothesisIn] = Field(default_factory=list)
    ratings: list[RatingIn] = Field(default_factory=list)
    raw_scale: tuple[float, float] = (1.0, 5.0)
    normalize: bool = False


class ValidateResponse(BaseModel):
    ok: bool
    n_segments: int
    n_references: int
    n_systems: int
    n_rated_systems: int
    issues: list[str]
    dbleu_ineligible: list[str]
    observed_weights: list[float]


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorDetail(BaseModel):
    code: Literal["usage", "data", "degenerate"]
    message: str
