"""Command-line client for scoring and correlation studies.

The CLI is a thin client over the service handlers: it reads the corpus
files, builds the same request models the HTTP API accepts, and either
calls the handlers in process (the default) or posts the request to a
running server (``--server`` or the ``DBLEU_SERVER`` environment
variable). Either way the output is rendered from the response model,
so local and remote runs print identical bytes.

Exit codes: 0 success, 1 usage errors, 2 data errors, 3 degenerate
statistics. ``validate`` exits 2 when the study has consistency issues.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Callable

from pydantic import ValidationError

from .corpusio import (
    DEFAULT_RAW_SCALE,
    FORMATS,
    read_hypothesis_records,
    read_rating_records,
    read_reference_records,
)
from .errors import CorpusFormatError
from .metrics import METRIC_KINDS, SMOOTHINGS
from .service import handlers, schemas
from .study import SWEEP_AXES

EXIT_CODES = {"usage": 1, "data": 2, "degenerate": 3}


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2; reserve that for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _scale(text: str) -> tuple[float, float]:
    parts = text.split(",")
    try:
        lo, hi = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI numbers, got {text!r}")
    return (lo, hi)


def _name_list(text: str) -> list[str]:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _value_list(text: str) -> list[float]:
    try:
        return [float(p) for p in _name_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_io_options(sub: argparse.ArgumentParser, *,
                    hyps: str | None = None, ratings: str | None = None) -> None:
    sub.add_argument("--refs", required=True, metavar="PATH",
                     help="reference file (segment_id, ref_id, weight, is_original, text)")
    if hyps:
        sub.add_argument("--hyps", required=hyps == "required", metavar="PATH",
                         help="hypothesis file (segment_id, system_id, text)")
    if ratings:
        sub.add_argument("--ratings", required=ratings == "required", metavar="PATH",
                         help="rating file (segment_id, system_id, rating)")
    sub.add_argument("--format", choices=FORMATS, default="tsv",
                     help="input file format (default: tsv)")
    sub.add_argument("--header", action="store_true",
                     help="skip the first line of each input file")
    sub.add_argument("--normalize", action="store_true",
                     help="lowercase text before tokenizing")


def _add_output_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--json", action="store_true", dest="as_json",
                     help="emit the full response as JSON")
    sub.add_argument("--out", metavar="PATH", help="write output to a file instead of stdout")
    sub.add_argument("--server", default=None, metavar="URL",
                     help="post the request to a running server instead of "
                          "computing in process (default: $DBLEU_SERVER)")


def _add_study_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--raw-scale", type=_scale, default=DEFAULT_RAW_SCALE, metavar="LO,HI",
                     help="raw rating scale rescaled to [-1, 1] (default: 1,5)")
    sub.add_argument("--max-n", type=int, default=2, metavar="N",
                     help="highest n-gram order (default: 2)")
    sub.add_argument("--smoothing", choices=SMOOTHINGS, default=None,
                     help="n-gram count smoothing (default: per-metric)")
    sub.add_argument("--unit-size", type=int, default=100, metavar="M",
                     help="segments per scored unit (default: 100)")
    sub.add_argument("--assignments", type=int, default=1000, metavar="K",
                     help="random unit assignments to average over (default: 1000)")
    sub.add_argument("--bootstrap", type=int, default=1000, metavar="B",
                     help="bootstrap replicates for confidence intervals (default: 1000)")
    sub.add_argument("--seed", type=int, default=0, help="RNG seed (default: 0)")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: $DBLEU_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dbleu",
                     description="Weighted multi-reference BLEU scoring and "
                                 "metric-vs-rating correlation studies.")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    score = commands.add_parser("score", help="score one system against the references")
    _add_io_options(score, hyps="required")
    score.add_argument("--system", default=None, metavar="ID",
                       help="system to score when the hypothesis file has several")
    score.add_argument("--metric", choices=METRIC_KINDS, default="bleu")
    score.add_argument("--max-n", type=int, default=2, metavar="N",
                       help="highest n-gram order (default: 2)")
    score.add_argument("--smoothing", choices=SMOOTHINGS, default=None,
                       help="n-gram count smoothing (default: per-metric)")
    score.add_argument("--ref-mode", default="all", metavar="MODE",
                       help="reference selection: all, single, or threshold:W")
    _add_output_options(score)
    score.set_defaults(func=_run_score)

    corr = commands.add_parser("correlate",
                               help="correlate metric deltas with rating deltas")
    _add_io_options(corr, hyps="required", ratings="required")
    corr.add_argument("--metric", type=_name_list, default=["bleu", "dbleu", "sbleu"],
                      metavar="LIST", help="comma-separated metrics (default: bleu,dbleu,sbleu)")
    corr.add_argument("--ref-mode", type=_name_list, default=["all"], metavar="LIST",
                      help="comma-separated reference modes (default: all)")
    _add_study_options(corr)
    _add_output_options(corr)
    corr.set_defaults(func=_run_correlate)

    sweep = commands.add_parser("sweep", help="rerun a study along one axis")
    _add_io_options(sweep, hyps="required", ratings="required")
    sweep.add_argument("--axis", choices=SWEEP_AXES, default="threshold")
    sweep.add_argument("--values", type=_value_list, default=None, metavar="LIST",
                       help="comma-separated axis values (default: per-axis grid)")
    sweep.add_argument("--metric", type=_name_list, default=["bleu", "dbleu"],
                       metavar="LIST", help="comma-separated metrics (default: bleu,dbleu)")
    sweep.add_argument("--ref-mode", default="all", metavar="MODE",
                       help="base reference mode (default: all)")
    _add_study_options(sweep)
    _add_output_options(sweep)
    sweep.set_defaults(func=_run_sweep)

    val = commands.add_parser("validate", help="check a study's files for consistency")
    _add_io_options(val, hyps="optional", ratings="optional")
    val.add_argument("--raw-scale", type=_scale, default=DEFAULT_RAW_SCALE, metavar="LO,HI",
                     help="raw rating scale (default: 1,5)")
    _add_output_options(val)
    val.set_defaults(func=_run_validate)

    serve = commands.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=_run_serve)

    return parser


# ---------------------------------------------------------------------------
# request assembly

def _references(args) -> list[schemas.ReferenceIn]:
    records = read_reference_records(args.refs, args.format, args.header)
    return [schemas.ReferenceIn(segment_id=r.segment_id, ref_id=r.ref_id, weight=r.weight,
                                is_original=r.is_original, text=r.text)
            for r in records]


def _hypotheses(args) -> list[schemas.HypothesisIn]:
    records = read_hypothesis_records(args.hyps, args.format, args.header)
    return [schemas.HypothesisIn(segment_id=r.segment_id, system_id=r.system_id, text=r.text)
            for r in records]


def _ratings(args) -> list[schemas.RatingIn]:
    records = read_rating_records(args.ratings, args.format, args.header,
                                  raw_scale=args.raw_scale)
    return [schemas.RatingIn(segment_id=r.segment_id, system_id=r.system_id, rating=r.rating)
            for r in records]


def _study_options(args, cls=schemas.StudyOptions, **extra):
    return cls(metrics=args.metric, max_n=args.max_n, smoothing=args.smoothing,
               normalize=args.normalize, unit_size=args.unit_size,
               assignments=args.assignments, bootstrap=args.bootstrap,
               seed=args.seed, threads=args.threads, **extra)


# ---------------------------------------------------------------------------
# remote transport

def _resolve_server(args) -> str | None:
    if args.server is not None:
        return args.server
    import os

    return os.environ.get("DBLEU_SERVER") or None


def _post(server: str, path: str, request) -> dict:
    import httpx

    url = server.rstrip("/") + path
    try:
        resp = httpx.post(url, json=request.model_dump(mode="json"),
                          timeout=httpx.Timeout(600.0, connect=10.0))
    except httpx.HTTPError as e:
        raise handlers.ServiceError("usage", f"cannot reach server at {url}: {e}")
    if resp.status_code == 422:
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text[:200]
        if isinstance(detail, dict) and detail.get("code") in EXIT_CODES:
            raise handlers.ServiceError(detail["code"], str(detail.get("message", "")))
        raise handlers.ServiceError("usage", f"request rejected: {json.dumps(detail)}")
    if resp.status_code != 200:
        raise handlers.ServiceError(
            "usage", f"server returned {resp.status_code}: {resp.text[:200]}"
        )
    return resp.json()


def _dispatch(args, path: str, request, handler: Callable, response_cls):
    server = _resolve_server(args)
    if server is None:
        return handler(request)
    return response_cls.model_validate(_post(server, path, request))


# ---------------------------------------------------------------------------
# rendering

def _emit(args, response, render: Callable[[object], str]) -> None:
    if args.as_json:
        text = json.dumps(response.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
    else:
        text = render(response)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _render_score(res: schemas.ScoreResponse) -> str:
    lines = [
        f"metric: {res.metric}",
        f"ref-mode: {res.ref_mode}",
        f"system: {res.system_id}",
        f"score: {res.score:.4f}",
    ]
    lines.extend(f"p{i}: {p:.4f}" for i, p in enumerate(res.precisions, 1))
    lines.append(f"brevity-penalty: {res.brevity_penalty:.4f}")
    lines.append(f"hyp-length: {res.hyp_length}")
    lines.append(f"ref-length: {res.ref_length}")
    lines.append(f"segments: {res.segments_scored}")
    if res.nonpositive_orders:
        zeroed = " ".join(str(n) for n in res.nonpositive_orders)
        lines.append(f"zeroed-orders: {zeroed}")
    return "\n".join(lines) + "\n"


def _ci_cell(value: float, ci: tuple[float, float]) -> str:
    return f"{value:.3f} ({ci[0]:.3f}, {ci[1]:.3f})"


def _render_correlate(res: schemas.CorrelateResponse) -> str:
    lines = [
        f"segments: {res.segments_used}\texcluded: {len(res.excluded)}",
        f"systems: {' '.join(res.systems)}",
        f"pairs: {' '.join(f'{a}/{b}' for a, b in res.pairs)}",
        f"unit-size: {res.unit_size}\tassignments: {res.assignments}\tseed: {res.seed}",
        "",
        "metric\tref-mode\tspearman (95% CI)\tkendall (95% CI)",
    ]
    for row in res.rows:
        s = row.summary
        lines.append("\t".join([
            row.metric, row.ref_mode,
            _ci_cell(s.spearman_rho, s.rho_ci),
            _ci_cell(s.kendall_tau, s.tau_ci),
        ]))
    return "\n".join(lines) + "\n"


def _render_sweep(res: schemas.SweepResponse) -> str:
    lines = ["axis\tvalue\tmetric\tref-mode\trho\trho_lo\trho_hi\ttau\ttau_lo\ttau_hi"]
    for row in res.rows:
        s = row.summary
        lines.append("\t".join([
            row.axis, f"{row.value:g}", row.metric, row.ref_mode,
            f"{s.spearman_rho:.3f}", f"{s.rho_ci[0]:.3f}", f"{s.rho_ci[1]:.3f}",
            f"{s.kendall_tau:.3f}", f"{s.tau_ci[0]:.3f}", f"{s.tau_ci[1]:.3f}",
        ]))
    return "\n".join(lines) + "\n"


def _render_validate(res: schemas.ValidateResponse) -> str:
    lines = [
        f"segments: {res.n_segments}",
        f"references: {res.n_references}",
        f"systems: {res.n_systems}",
        f"rated-systems: {res.n_rated_systems}",
        f"weights: {' '.join(f'{w:g}' for w in res.observed_weights)}",
    ]
    if res.dbleu_ineligible:
        lines.append(f"dbleu-ineligible: {' '.join(res.dbleu_ineligible)}")
    lines.extend(f"issue: {issue}" for issue in res.issues)
    lines.append("status: ok" if res.ok else f"status: {len(res.issues)} issue(s)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands

def _run_score(args) -> int:
    request = schemas.ScoreRequest(
        references=_references(args),
        hypotheses=_hypotheses(args),
        system_id=args.system,
        options=schemas.MetricOptions(metric=args.metric, max_n=args.max_n,
                                      smoothing=args.smoothing, normalize=args.normalize,
                                      ref_mode=args.ref_mode),
    )
    response = _dispatch(args, "/score", request, handlers.handle_score,
                         schemas.ScoreResponse)
    _emit(args, response, _render_score)
    return 0


def _run_correlate(args) -> int:
    request = schemas.CorrelateRequest(
        references=_references(args),
        hypotheses=_hypotheses(args),
        ratings=_ratings(args),
        raw_scale=args.raw_scale,
        options=_study_options(args, ref_modes=args.ref_mode),
    )
    response = _dispatch(args, "/correlate", request, handlers.handle_correlate,
                         schemas.CorrelateResponse)
    for excl in response.excluded:
        print(f"dbleu: excluded segment {excl.segment_id}: {excl.reason}", file=sys.stderr)
    _emit(args, response, _render_correlate)
    return 0


def _run_sweep(args) -> int:
    request = schemas.SweepRequest(
        references=_references(args),
        hypotheses=_hypotheses(args),
        ratings=_ratings(args),
        raw_scale=args.raw_scale,
        options=_study_options(args, cls=schemas.SweepOptions, ref_modes=[args.ref_mode],
                               axis=args.axis, values=args.values),
    )
    response = _dispatch(args, "/sweep", request, handlers.handle_sweep,
                         schemas.SweepResponse)
    for skip in response.skipped:
        print(f"dbleu: skipped {response.axis}={skip.value:g}: {skip.reason}",
              file=sys.stderr)
    _emit(args, response, _render_sweep)
    return 0


def _run_validate(args) -> int:
    request = schemas.ValidateRequest(
        references=_references(args),
        hypotheses=_hypotheses(args) if args.hyps else [],
        ratings=_ratings(args) if args.ratings else [],
        raw_scale=args.raw_scale,
        normalize=args.normalize,
    )
    response = _dispatch(args, "/validate", request, handlers.handle_validate,
                         schemas.ValidateResponse)
    _emit(args, response, _render_validate)
    return 0 if response.ok else 2


def _run_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except handlers.ServiceError as e:
        print(f"dbleu: {e.code}: {e.message}", file=sys.stderr)
        return EXIT_CODES[e.code]
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        print(f"dbleu: usage: {where}: {first['msg']}", file=sys.stderr)
        return EXIT_CODES["usage"]
    except CorpusFormatError as e:
        print(f"dbleu: data: {e}", file=sys.stderr)
        return EXIT_CODES["data"]
    except OSError as e:
        print(f"dbleu: data: {e}", file=sys.stderr)
        return EXIT_CODES["data"]


if __name__ == "__main__":
    sys.exit(main())
