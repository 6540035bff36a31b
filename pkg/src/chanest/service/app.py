"""FastAPI application exposing the estimation pipeline.

Endpoints mirror the CLI stages: /generate builds a scenario file,
/estimate runs the path estimator on an uploaded scenario, /sweep runs a
Monte Carlo power sweep from a manifest, /report re-renders CSV and plot
data from a stored sweep result.
"""

from __future__ import annotations

import base64
import binascii

from fastapi import FastAPI, HTTPException

from .. import __version__, fileio, harness
from ..derivatives import NonIsotropicPilotsError
from ..model import sample_scenario
from ..optimizer import estimate
from .schemas import (
    EstimateRequest,
    EstimateResponse,
    GenerateRequest,
    GenerateResponse,
    HealthResponse,
    ReportRequest,
    ReportResponse,
    SweepRequest,
    SweepResponse,
    SweepResultModel,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="chanest",
        description="Multiuser MIMO-OFDM uplink parametric channel estimation",
        version=__version__,
    )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest):
        try:
            config = req.config.to_config()
            scenario = sample_scenario(config, noiseless=req.noiseless)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        blob = fileio.scenario_to_bytes(scenario)
        return GenerateResponse(
            scenario_b64=base64.b64encode(blob).decode("ascii"),
            path_counts=[len(p) for p in scenario.channels],
            grid_shape=list(scenario.received.shape),
        )

    @app.post("/estimate", response_model=EstimateResponse)
    def run_estimate(req: EstimateRequest):
        try:
            blob = base64.b64decode(req.scenario_b64, validate=True)
            scenario = fileio.scenario_from_bytes(blob)
        except (binascii.Error, fileio.FileFormatError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=f"bad scenario: {exc}")
        est_cfg = req.estimator.to_config() if req.estimator else None
        try:
            result = estimate(
                scenario.received, scenario.pilots, scenario.config, est_cfg
            )
        except (NonIsotropicPilotsError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return EstimateResponse.from_result(result, fileio.result_to_text(result))

    @app.post("/sweep", response_model=SweepResponse)
    def run_sweep(req: SweepRequest):
        try:
            manifest = fileio.parse_keyvalues(req.manifest_text)
            cfg = harness.sweep_config_from_dict(manifest)
        except (fileio.FileFormatError, TypeError, ValueError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=f"bad manifest: {exc}")
        if req.master_seed is not None:
            cfg.master_seed = req.master_seed
        if req.trials is not None:
            cfg.trials = req.trials
        if req.threads is not None:
            cfg.threads = req.threads
        result = harness.run_sweep(cfg)
        return SweepResponse(
            result=SweepResultModel.from_result(result),
            csv=harness.render_csv(result),
            plot_data=harness.render_plot_data(result),
            manifest_text=fileio.render_keyvalues(
                harness.sweep_config_to_dict(cfg), title="chanest sweep manifest"
            ),
        )

    @app.post("/report", response_model=ReportResponse)
    def report(req: ReportRequest):
        result = req.result.to_result()
        return ReportResponse(
            csv=harness.render_csv(result),
            plot_data=harness.render_plot_data(result),
        )

    return app
