"""HTTP app exposing scoring, correlation studies, sweeps, and validation.

Run it with the bundled CLI (``dbleu serve``) or any ASGI server, e.g.::

    uvicorn dbleu.service.app:app

Handler errors surface as HTTP 422 with ``{"detail": {"code", "message"}}``;
the code distinguishes usage errors, data validation failures, and
degenerate statistics.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import handlers, schemas
from .handlers import ServiceError


def create_app() -> FastAPI:
    app = FastAPI(
        title="dbleu",
        description=(
            "Weighted multi-reference BLEU variants and rank-correlation studies "
            "against human ratings."
        ),
    )

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"detail": exc.to_detail().model_dump()},
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return handlers.handle_health()

    @app.post("/score", response_model=schemas.ScoreResponse)
    def score(req: schemas.ScoreRequest) -> schemas.ScoreResponse:
        return handlers.handle_score(req)

    @app.post("/correlate", response_model=schemas.CorrelateResponse)
    def correlate(req: schemas.CorrelateRequest) -> schemas.CorrelateResponse:
        return handlers.handle_correlate(req)

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
        return handlers.handle_sweep(req)

    @app.post("/validate", response_model=schemas.ValidateResponse)
    def validate(req: schemas.ValidateRequest) -> schemas.ValidateResponse:
        return handlers.handle_validate(req)

    return app


app = create_app()
