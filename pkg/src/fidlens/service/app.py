"""FastAPI application exposing the pipelines over HTTP.

One POST endpoint per pipeline under ``/v1``, plus ``/health``.  Domain
errors surface as structured 4xx responses carrying the originating error
class name, so remote callers can distinguish a bad request from a bad
file without parsing prose.
"""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__, workflows
from ..errors import FidlensError
from . import models


def create_app() -> FastAPI:
    app = FastAPI(
        title="fidlens",
        version=__version__,
        description="Distribution distances, sensitivity heatmaps and "
        "resampling attacks over feature files on the server's filesystem.",
    )

    @app.exception_handler(FidlensError)
    async def _domain_error(request, exc: FidlensError):
        return JSONResponse(
            status_code=400,
            content=models.ErrorResponse(
                error=type(exc).__name__, message=str(exc)
            ).model_dump(),
        )

    @app.exception_handler(FileNotFoundError)
    async def _missing_file(request, exc: FileNotFoundError):
        return JSONResponse(
            status_code=404,
            content=models.ErrorResponse(
                error="FileNotFoundError", message=str(exc)
            ).model_dump(),
        )

    @app.get("/health", response_model=models.HealthResponse)
    def health():
        return models.HealthResponse(status="ok", version=__version__)

    @app.post("/v1/stats", response_model=models.StatsResponse)
    def stats(req: models.StatsRequest):
        return asdict(workflows.compute_stats_file(req.features_path, req.out_path))

    @app.post("/v1/fid", response_model=models.FidResponse)
    def fid(req: models.FidRequest):
        return asdict(workflows.fid_between(req.path_a, req.path_b, force=req.force))

    @app.post("/v1/kid", response_model=models.KidResponse)
    def kid(req: models.KidRequest):
        return asdict(
            workflows.kid_between(
                req.path_a,
                req.path_b,
                kernel=req.kernel,
                gamma=req.gamma,
                subset_size=req.subset_size,
                subsets=req.subsets,
                seed=req.seed,
            )
        )

    @app.post("/v1/resample", response_model=models.ResampleResponse)
    def resample(req: models.ResampleRequest):
        return asdict(
            workflows.resample_attack(
                req.real_path,
                req.gen_path,
                space=req.space,
                top_n=req.top_n,
                middle_n=req.middle_n,
                learning_rate=req.learning_rate,
                max_iters=req.max_iters,
                eval_every=req.eval_every,
                seed=req.seed,
                sample_count=req.sample_count,
                min_oversample=req.min_oversample,
                out_dir=req.out_dir,
            )
        )

    @app.post("/v1/top1-match", response_model=models.Top1Response)
    def top1_match(req: models.Top1Request):
        return asdict(
            workflows.top1_match_files(
                req.real_path,
                req.gen_path,
                seed=req.seed,
                allow_shortfall=req.allow_shortfall,
                out_dir=req.out_dir,
            )
        )

    @app.post("/v1/topn-sweep", response_model=models.SweepResponse)
    def topn_sweep(req: models.SweepRequest):
        return asdict(
            workflows.topn_sweep_files(
                req.real_path,
                req.gen_path,
                req.ns,
                modes=tuple(req.modes),
                learning_rate=req.learning_rate,
                max_iters=req.max_iters,
                eval_every=req.eval_every,
                seed=req.seed,
                out_path=req.out_path,
            )
        )

    @app.post("/v1/heatmap", response_model=models.HeatmapResponse)
    def heatmap(req: models.HeatmapRequest):
        return asdict(
            workflows.heatmap_files(
                req.real_path,
                req.gen_path,
                req.out_dir,
                indices=req.indices,
                image_ids=req.image_ids,
                leave_out=req.leave_out,
                base_stats_path=req.base_stats_path,
                target=req.target,
            )
        )

    @app.post("/v1/noise-evaluate", response_model=models.NoiseEvalResponse)
    def noise_evaluate(req: models.NoiseEvalRequest):
        rows = workflows.noise_probe_evaluate(
            req.real_path, req.manifest_path, force=req.force
        )
        return {
            "rows": [asdict(row) for row in rows],
            "tsv": workflows.noise_eval_tsv(rows),
        }

    @app.post("/v1/synth", response_model=models.SynthResponse)
    def synth(req: models.SynthRequest):
        return asdict(
            workflows.synth_files(
                req.spec_path,
                req.n,
                req.seed,
                req.out_path,
                activation_grid=req.activation_grid,
            )
        )

    @app.post("/v1/bias-probe", response_model=models.BiasProbeResponse)
    def bias_probe(req: models.BiasProbeRequest):
        return asdict(
            workflows.bias_probe_files(req.spec_path, req.sizes, req.repeats, req.seed)
        )

    @app.post("/v1/validate", response_model=models.ValidateResponse)
    def validate(req: models.ValidateRequest):
        return asdict(workflows.validate_file(req.path))

    return app
