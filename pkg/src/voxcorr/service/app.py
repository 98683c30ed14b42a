"""FastAPI service wrapping the correspondence engine.

Requests carry file paths, not payloads: feature containers run to gigabytes,
so the service assumes a filesystem shared with its clients (the CLI runs the
same handlers in-process by default).
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError, VoxcorrError
from . import ops, schemas


def create_app() -> FastAPI:
    app = FastAPI(title="voxcorr", version=__version__)

    @app.exception_handler(ConfigError)
    async def config_error(_, exc: ConfigError):
        return JSONResponse(
            status_code=422,
            content={"error": "invalid configuration", "problems": exc.problems},
        )

    @app.exception_handler(VoxcorrError)
    async def engine_error(_, exc: VoxcorrError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error(_, exc: ValueError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/v1/health", response_model=schemas.HealthResponse)
    def health():
        return ops.health()

    @app.post("/v1/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        return ops.run_synth(req)

    @app.post("/v1/noise", response_model=schemas.NoiseResponse)
    def noise(req: schemas.NoiseRequest):
        return ops.run_noise(req)

    @app.post("/v1/match", response_model=schemas.MatchResponse)
    def match(req: schemas.MatchRequest):
        return ops.run_match(req)

    @app.post("/v1/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest):
        return ops.run_eval(req)

    @app.post("/v1/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        return ops.run_sweep(req)

    @app.post("/v1/simmap", response_model=schemas.SimmapResponse)
    def simmap(req: schemas.SimmapRequest):
        return ops.run_simmap(req)

    return app


app = create_app()
