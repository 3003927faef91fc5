"""Rank correlation between metric-score and human-rating differences.

A study partitions the segment ids into observation units of M segments,
once per sampled assignment. For every declared system pair and unit, one
paired observation is built: the difference in metric score and in mean
human rating between the two systems on that unit. Spearman's rho and
Kendall's tau-b are computed on the observations pooled across pairs,
per assignment, and averaged over assignments; the same assignments are
reused for every metric variant in a study.

95% confidence intervals come from a nonparametric bootstrap: observations
are resampled within each assignment (the same resample indices for every
metric variant), the coefficient of each resample is averaged over
assignments, and the percentile interval is taken over those replicate
means.

The scalar ``spearman_rho`` / ``kendall_tau`` use exact integer pair counts
and exact fractional midranks, so independent brute-force implementations
reproduce them bit-for-bit. The batched bootstrap path is vectorized but
follows the same definitions.
"""

from __future__ import annotations

import math
import os
from bisect import bisect_left, bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateStatisticsError, StudyDataError

# Child-stream tags: rng([seed, tag, k]) gives independent deterministic
# streams per assignment k for partition sampling and bootstrap resampling.
_ASSIGN_STREAM = 1
_BOOT_STREAM = 2

# Upper bound on elements per (chunk, n, n) pairwise block in the batched
# tau computation; keeps peak memory around tens of MB.
_TAU_CHUNK_ELEMS = 1 << 24


class PairedObservation(NamedTuple):
    """Metric-score difference and mean-rating difference on one unit."""

    m: float
    q: float


@dataclass(frozen=True)
class SystemRatings:
    """Mean human rating per segment for one system, on the common scale."""

    system_id: str
    ratings: dict[str, float]


@dataclass(frozen=True)
class CorrelationSummary:
    spearman_rho: float
    kendall_tau: float
    rho_ci: tuple[float, float]
    tau_ci: tuple[float, float]
    assignments: int
    unit_size: int
    observations_per_assignment: int


def resolve_threads(threads: int | None = None) -> int:
    """Explicit argument, else the DBLEU_THREADS environment variable, else 1."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("DBLEU_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"DBLEU_THREADS must be an integer, got {env!r}") from None
    return 1


# ---------------------------------------------------------------------------
# Scalar coefficients.


def _midranks(values: Sequence[float]) -> list[float]:
    """1-based fractional ranks; ties share the mean rank of their group.

    The rank of v is (#{x < v} + #{x <= v} + 1) / 2, an exact multiple of
    one half.
    """
    s = sorted(values)
    return [(bisect_left(s, v) + bisect_right(s, v) + 1) / 2 for v in values]


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    num = 0.0
    dx = 0.0
    dy = 0.0
    for a, b in zip(xs, ys):
        num += (a - mx) * (b - my)
        dx += (a - mx) * (a - mx)
        dy += (b - my) * (b - my)
    if dx == 0.0 or dy == 0.0:
        raise DegenerateStatisticsError(
            "correlation undefined: a vector is constant across observations"
        )
    return num / math.sqrt(dx * dy)


def _split_pairs(pairs: Sequence[tuple[float, float]]) -> tuple[list[float], list[float]]:
    if len(pairs) < 2:
        raise DegenerateStatisticsError(
            f"correlation needs at least 2 observations, got {len(pairs)}"
        )
    ms = [float(p[0]) for p in pairs]
    qs = [float(p[1]) for p in pairs]
    return ms, qs


def spearman_rho(pairs: Sequence[tuple[float, float]]) -> float:
    """Pearson correlation of midranks of the (m, q) observation pairs."""
    ms, qs = _split_pairs(pairs)
    return _pearson(_midranks(ms), _midranks(qs))


def _tau_from_counts(c: int, d: int, tx: int, ty: int, n: int) -> float:
    n0 = n * (n - 1) // 2
    d1 = n0 - tx
    d2 = n0 - ty
    if d1 == 0 or d2 == 0:
        raise DegenerateStatisticsError(
            "correlation undefined: all observation pairs are tied in a vector"
        )
    return (c - d) / math.sqrt(d1 * d2)


def kendall_tau(pairs: Sequence[tuple[float, float]]) -> float:
    """Tau-b over the (m, q) observation pairs (tie-corrected)."""
    ms, qs = _split_pairs(pairs)
    n = len(ms)
    c = d = tx = ty = 0
    for i in range(n):
        mi = ms[i]
        qi = qs[i]
        for j in range(i + 1, n):
            dm = mi - ms[j]
            dq = qi - qs[j]
            if dm == 0.0 or dq == 0.0:
                if dm == 0.0:
                    tx += 1
                if dq == 0.0:
                    ty += 1
            elif (dm > 0.0) == (dq > 0.0):
                c += 1
            else:
                d += 1
    return _tau_from_counts(c, d, tx, ty, n)


def _pairwise_tau_counts(m: np.ndarray, q: np.ndarray) -> tuple[int, int, int, int]:
    """Exact (concordant, discordant, ties_m, ties_q) over all index pairs."""
    n = len(m)
    sm = np.sign(m[:, None] - m[None, :])
    sq = np.sign(q[:, None] - q[None, :])
    prod = sm * sq
    c = int(np.count_nonzero(prod > 0)) // 2
    d = int(np.count_nonzero(prod < 0)) // 2
    tx = (int(np.count_nonzero(sm == 0)) - n) // 2
    ty = (int(np.count_nonzero(sq == 0)) - n) // 2
    return c, d, tx, ty


# ---------------------------------------------------------------------------
# Assignment sampling.


def assignment_index_array(
    n_segments: int, unit_size: int, n_assignments: int, seed: int
) -> np.ndarray:
    """Segment-index partitions, shape (K, floor(I/M), M).

    Assignment k is an independent deterministic stream derived from
    (seed, k): a uniform permutation of 0..I-1 chopped into units of M,
    leftovers dropped.
    """
    if unit_size < 1:
        raise ValueError(f"unit size must be >= 1, got {unit_size}")
    if unit_size > n_segments:
        raise ValueError(
            f"unit size {unit_size} exceeds the {n_segments} available segments"
        )
    if n_assignments < 1:
        raise ValueError(f"assignment count must be >= 1, got {n_assignments}")
    if seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed}")
    n_units = n_segments // unit_size
    out = np.empty((n_assignments, n_units, unit_size), dtype=np.int64)
    for k in range(n_assignments):
        rng = np.random.default_rng([seed, _ASSIGN_STREAM, k])
        perm = rng.permutation(n_segments)
        out[k] = perm[: n_units * unit_size].reshape(n_units, unit_size)
    return out


def sample_assignments(
    segment_ids: Sequence[str], unit_size: int, n_assignments: int, seed: int
) -> list[list[tuple[str, ...]]]:
    """K random partitions of the ids into disjoint units of exactly M ids.

    Ids are put in sorted order before permuting, so the result depends only
    on the id set, the parameters, and the seed.
    """
    ids = sorted(segment_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("segment ids must be unique")
    idx = assignment_index_array(len(ids), unit_size, n_assignments, seed)
    return [
        [tuple(ids[i] for i in unit) for unit in assignment] for assignment in idx
    ]


def build_observations(
    assignment: Sequence[Sequence[str]],
    pair: tuple[str, str],
    unit_scores: Mapping[str, Sequence[float]],
    ratings: Mapping[str, Mapping[str, float]],
) -> list[PairedObservation]:
    """Paired observations for one system pair on one assignment.

    ``unit_scores[system][u]`` is the metric score of that system on unit u
    of this assignment; ``ratings[system]`` maps segment id to mean rating.
    """
    sys_a, sys_b = pair
    out = []
    for u, unit in enumerate(assignment):
        q_parts = []
        for system in pair:
            sys_ratings = ratings[system]
            try:
                q_parts.append(sum(sys_ratings[sid] for sid in unit) / len(unit))
            except KeyError:
                missing = [sid for sid in unit if sid not in sys_ratings]
                raise StudyDataError(
                    f"system {system!r} has no rating for segment(s): "
                    + ", ".join(missing[:10])
                ) from None
        m = float(unit_scores[sys_a][u]) - float(unit_scores[sys_b][u])
        q = q_parts[0] - q_parts[1]
        if not (math.isfinite(m) and math.isfinite(q)):
            raise StudyDataError(f"non-finite observation on unit {u}: m={m} q={q}")
        out.append(PairedObservation(m, q))
    return out


# ---------------------------------------------------------------------------
# Batched coefficients for bootstrap replicates.


def _batched_midranks(a: np.ndarray) -> np.ndarray:
    """Row-wise fractional midranks of a (B, n) array."""
    _, n = a.shape
    order = np.argsort(a, axis=1, kind="stable")
    s = np.take_along_axis(a, order, axis=1)
    idx = np.arange(n)
    # group start per sorted position: last position that began a tie group
    is_start = np.ones_like(a, dtype=bool)
    is_start[:, 1:] = s[:, 1:] != s[:, :-1]
    start = np.where(is_start, idx, 0)
    np.maximum.accumulate(start, axis=1, out=start)
    # group end per sorted position: next position that ends a tie group
    is_end = np.ones_like(a, dtype=bool)
    is_end[:, :-1] = s[:, 1:] != s[:, :-1]
    end = np.where(is_end, idx, n - 1)
    end = np.flip(np.minimum.accumulate(np.flip(end, axis=1), axis=1), axis=1)
    mid = (start + end) / 2 + 1
    ranks = np.empty_like(mid)
    np.put_along_axis(ranks, order, mid, axis=1)
    return ranks


def _batched_rho(m: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Spearman's rho per row of two (B, n) arrays; NaN where degenerate."""
    rm = _batched_midranks(m)
    rq = _batched_midranks(q)
    rm -= rm.mean(axis=1, keepdims=True)
    rq -= rq.mean(axis=1, keepdims=True)
    num = np.einsum("ij,ij->i", rm, rq)
    d1 = np.einsum("ij,ij->i", rm, rm)
    d2 = np.einsum("ij,ij->i", rq, rq)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / np.sqrt(d1 * d2)
    out[(d1 == 0) | (d2 == 0)] = np.nan
    return out


def _batched_tau(m: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Tau-b per row of two (B, n) arrays; NaN where degenerate."""
    n_rows, n = m.shape
    n0 = n * (n - 1) // 2
    out = np.empty(n_rows)
    chunk = max(1, _TAU_CHUNK_ELEMS // (n * n))
    for lo in range(0, n_rows, chunk):
        hi = min(lo + chunk, n_rows)
        sm = np.sign(m[lo:hi, :, None] - m[lo:hi, None, :]).astype(np.int8)
        sq = np.sign(q[lo:hi, :, None] - q[lo:hi, None, :]).astype(np.int8)
        prod = sm * sq
        c = (prod > 0).sum(axis=(1, 2)) // 2
        d = (prod < 0).sum(axis=(1, 2)) // 2
        tx = ((sm == 0).sum(axis=(1, 2)).astype(np.int64) - n) // 2
        ty = ((sq == 0).sum(axis=(1, 2)).astype(np.int64) - n) // 2
        d1 = n0 - tx
        d2 = n0 - ty
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = (c - d) / np.sqrt((d1 * d2).astype(np.float64))
        vals[(d1 == 0) | (d2 == 0)] = np.nan
        out[lo:hi] = vals
    return out


# ---------------------------------------------------------------------------
# The study engine.


def _point_rho(m_row: np.ndarray, q_row: np.ndarray) -> float:
    try:
        return _pearson(_midranks(m_row.tolist()), _midranks(q_row.tolist()))
    except DegenerateStatisticsError:
        return math.nan


def _point_tau(m_row: np.ndarray, q_row: np.ndarray) -> float:
    try:
        return _tau_from_counts(*_pairwise_tau_counts(m_row, q_row), len(m_row))
    except DegenerateStatisticsError:
        return math.nan


def _percentile_ci(replicates: np.ndarray, point: float) -> tuple[float, float]:
    finite = replicates[np.isfinite(replicates)]
    if len(finite) == 0:
        return (point, point)
    lo, hi = np.percentile(finite, [2.5, 97.5])
    # the interval must bracket the point estimate it accompanies
    return (min(float(lo), point), max(float(hi), point))


def correlate(
    unit_scores: Mapping[str, np.ndarray],
    unit_ratings: Mapping[str, np.ndarray],
    pairs: Sequence[tuple[str, str]],
    *,
    unit_size: int,
    seed: int,
    n_bootstrap: int = 1000,
    threads: int | None = None,
) -> CorrelationSummary:
    """Correlation of metric and rating differences over sampled assignments.

    ``unit_scores[s]`` and ``unit_ratings[s]`` are (K, U) arrays: system s's
    metric score / mean rating on unit u of assignment k. Observations are
    pooled across the declared pairs within each assignment; coefficients
    are averaged over the assignments where they are defined. Assignments
    degenerate on every axis contribute nothing; if every assignment is
    degenerate the study fails.
    """
    if not pairs:
        raise ValueError("at least one system pair is required")
    for a, b in pairs:
        for system in (a, b):
            if system not in unit_scores:
                raise StudyDataError(f"no unit scores for system {system!r}")
            if system not in unit_ratings:
                raise StudyDataError(f"no unit ratings for system {system!r}")
    if seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed}")

    m_mat = np.concatenate(
        [np.asarray(unit_scores[a]) - np.asarray(unit_scores[b]) for a, b in pairs], axis=1
    )
    q_mat = np.concatenate(
        [np.asarray(unit_ratings[a]) - np.asarray(unit_ratings[b]) for a, b in pairs], axis=1
    )
    n_assignments, n_obs = m_mat.shape
    if n_obs < 2:
        raise DegenerateStatisticsError(
            f"each assignment yields only {n_obs} observation(s); need at least 2"
        )

    rho_points = np.empty(n_assignments)
    tau_points = np.empty(n_assignments)
    rho_boot = np.empty((n_assignments, n_bootstrap))
    tau_boot = np.empty((n_assignments, n_bootstrap))

    def evaluate(k: int) -> None:
        m_row = m_mat[k]
        q_row = q_mat[k]
        rho_points[k] = _point_rho(m_row, q_row)
        tau_points[k] = _point_tau(m_row, q_row)
        if n_bootstrap > 0:
            rng = np.random.default_rng([seed, _BOOT_STREAM, k])
            idx = rng.integers(0, n_obs, size=(n_bootstrap, n_obs))
            rho_boot[k] = _batched_rho(m_row[idx], q_row[idx])
            tau_boot[k] = _batched_tau(m_row[idx], q_row[idx])

    n_threads = resolve_threads(threads)
    if n_threads == 1:
        for k in range(n_assignments):
            evaluate(k)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(evaluate, range(n_assignments)))

    defined = np.isfinite(rho_points)
    if not defined.any():
        raise DegenerateStatisticsError(
            "correlation undefined on every sampled assignment"
        )
    rho = float(np.mean(rho_points[defined]))
    tau = float(np.mean(tau_points[np.isfinite(tau_points)]))

    if n_bootstrap > 0:
        # replicate value = coefficient averaged over assignments where defined
        rho_ci = _percentile_ci(_nanmean_cols(rho_boot), rho)
        tau_ci = _percentile_ci(_nanmean_cols(tau_boot), tau)
    else:
        rho_ci = (rho, rho)
        tau_ci = (tau, tau)

    return CorrelationSummary(
        spearman_rho=rho,
        kendall_tau=tau,
        rho_ci=rho_ci,
        tau_ci=tau_ci,
        assignments=n_assignments,
        unit_size=unit_size,
        observations_per_assignment=n_obs,
    )


def _nanmean_cols(a: np.ndarray) -> np.ndarray:
    """Column means ignoring NaN; all-NaN columns become NaN without warning."""
    mask = np.isfinite(a)
    counts = mask.sum(axis=0)
    sums = np.where(mask, a, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = sums / counts
    out[counts == 0] = np.nan
    return out
