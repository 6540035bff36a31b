"""Pydantic request/response models for the estimation service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from .. import harness
from ..fileio import config_from_dict, config_to_dict
from ..model import PathParams, ScenarioConfig
from ..optimizer import EstimateResult, EstimatorConfig


class ScenarioConfigModel(BaseModel):
    K: int = 2
    L: list[int] = [3, 3]
    Nc: int = 30
    Ns: int = 15
    Nr: int = 32
    Nt: int = 4
    N0: float = 1e-8
    tx_powers: list[float] = [-40.0, -40.0]
    rice_noncentrality: float = 1e-2
    rice_scale: float = 5e-3
    los_boost: float = 1.5
    seed: int = 0

    def to_config(self) -> ScenarioConfig:
        return config_from_dict(self.model_dump())

    @classmethod
    def from_config(cls, cfg: ScenarioConfig):
        return cls(**config_to_dict(cfg))


class EstimatorConfigModel(BaseModel):
    rho: float = 1.05
    eta0: float = 0.1
    eta_decay: float = 0.5
    it_max: int = 30
    m_aic_max: int = 2
    gamma_aic: float = 12.0
    L_max: int = 6
    L_window: Optional[int] = None
    user_schedule: Optional[list[int]] = None
    var_tol: float = 1e-8
    obj_tol_factor: float = 1e-10

    def to_config(self) -> EstimatorConfig:
        d = self.model_dump()
        if d["user_schedule"] is not None:
            d["user_schedule"] = tuple(d["user_schedule"])
        return EstimatorConfig(**d)


class PathModel(BaseModel):
    abs_b: float
    angle_b: float
    omega1: float
    omega2: float
    phi: float
    theta: float

    @classmethod
    def from_params(cls, p: PathParams):
        import numpy as np

        return cls(
            abs_b=abs(p.b), angle_b=float(np.angle(p.b)), omega1=p.omega1,
            omega2=p.omega2, phi=p.phi, theta=p.theta,
        )


class HealthResponse(BaseModel):
    status: str
    version: str


class GenerateRequest(BaseModel):
    config: ScenarioConfigModel = Field(default_factory=ScenarioConfigModel)
    noiseless: bool = False


class GenerateResponse(BaseModel):
    scenario_b64: str
    path_counts: list[int]
    grid_shape: list[int]


class EstimateRequest(BaseModel):
    scenario_b64: str
    estimator: Optional[EstimatorConfigModel] = None


class EstimateResponse(BaseModel):
    users: list[list[PathModel]]
    L_est: list[int]
    objective: float
    counters: dict[str, int]
    result_text: str

    @classmethod
    def from_result(cls, result: EstimateResult, text: str):
        return cls(
            users=[[PathModel.from_params(p) for p in paths]
                   for paths in result.users],
            L_est=list(result.L_est),
            objective=result.objective,
            counters=result.counters,
            result_text=text,
        )


class SweepRequest(BaseModel):
    manifest_text: str
    # optional thin-client overrides applied on top of the manifest
    master_seed: Optional[int] = None
    trials: Optional[int] = None
    threads: Optional[int] = None


class SweepResultModel(BaseModel):
    powers: list[float]
    users: int
    trials: int
    master_seed: int
    f1_mean: list[list[float]]
    f1_stderr: list[list[float]]
    mae_mean: list[list[Optional[list[float]]]]
    mae_stderr: list[list[Optional[list[float]]]]
    trials_ok: list[int]
    mae_trials: list[list[int]]
    records: list[dict]

    def to_result(self) -> harness.SweepResult:
        return harness.sweep_result_from_dict(self.model_dump())

    @classmethod
    def from_result(cls, result: harness.SweepResult):
        return cls(**harness.sweep_result_to_dict(result))


class SweepResponse(BaseModel):
    result: SweepResultModel
    csv: str
    plot_data: dict[str, str]
    manifest_text: str


class ReportRequest(BaseModel):
    result: SweepResultModel


class ReportResponse(BaseModel):
    csv: str
    plot_data: dict[str, str]
