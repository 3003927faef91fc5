"""Weighted multi-reference BLEU variants and rank-correlation studies.

The package scores machine-generated text against reference sets whose
references carry human quality weights (possibly negative), and measures how
well each metric variant tracks human ratings via Spearman/Kendall
correlation over bootstrapped observation units.
"""

from .errors import (
    CorpusFormatError,
    DbleuError,
    DegenerateStatisticsError,
    IneligibleSegmentError,
    StudyDataError,
)
from .metrics import (
    MetricConfig,
    MetricReport,
    Segment,
    WeightedReference,
    brevity_penalty,
    closest_ref_length,
    corpus_bleu,
    corpus_dbleu,
    dbleu_ineligible,
    filter_references,
    macro_sbleu,
    select_references,
    sentence_bleu,
)
from .tokens import clipped_count, extract_ngrams, tokenize

__version__ = "0.1.0"

__all__ = [
    "CorpusFormatError",
    "DbleuError",
    "DegenerateStatisticsError",
    "IneligibleSegmentError",
    "StudyDataError",
    "MetricConfig",
    "MetricReport",
    "Segment",
    "WeightedReference",
    "brevity_penalty",
    "closest_ref_length",
    "corpus_bleu",
    "corpus_dbleu",
    "dbleu_ineligible",
    "filter_references",
    "macro_sbleu",
    "select_references",
    "sentence_bleu",
    "clipped_count",
    "extract_ngrams",
    "tokenize",
    "__version__",
]
