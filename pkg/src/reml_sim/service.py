"""HTTP service exposing simulation, fitting and scenario execution.

Wraps the core package behind pydantic request/response models.  Fits
and single-dataset simulations return in well under a second at p=50;
scenario runs execute synchronously, so override the replicate count
for interactive use and keep the full replication grids on the CLI.
"""

from __future__ import annotations

import dataclasses
from typing import List, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import experiments
from .estimators import ESTIMATOR_NAMES, fit_by_name
from .model import CovarianceComponents, DesignSpec, simulate
from .stats import MeanSquares, mean_squares

app = FastAPI(title="reml-sim", version="0.1.0")


class DesignIn(BaseModel):
    n_sires: int = Field(ge=2)
    n_dams_per_sire: int = Field(ge=2)
    n_offspring_per_dam: int = Field(ge=2)
    n_traits: int = Field(ge=1)

    def to_design(self) -> DesignSpec:
        return DesignSpec(
            self.n_sires, self.n_dams_per_sire, self.n_offspring_per_dam, self.n_traits
        )


class SimulateRequest(BaseModel):
    design: DesignIn
    sigma_A: List[List[float]]
    sigma_B: List[List[float]]
    sigma_E: List[List[float]]
    mu: Optional[List[float]] = None
    seed: int = 0


class MeanSquaresOut(BaseModel):
    m_A: List[List[float]]
    m_B: List[List[float]]
    m_E: List[List[float]]
    df_A: int
    df_B: int
    df_E: int


class SimulateResponse(BaseModel):
    design: DesignIn
    seed: int
    mean_squares: MeanSquaresOut
    data: Optional[List[List[float]]] = None


class FitRequest(BaseModel):
    design: DesignIn
    mean_squares: MeanSquaresOut
    methods: List[str] = ["stepwise"]
    tol: float = 1e-6
    max_cycles: int = 1000


class FitResult(BaseModel):
    method: str
    criterion: Optional[float]
    converged: bool
    iterations: int
    eigenvalues: dict
    sigma_A: List[List[float]]
    sigma_B: List[List[float]]
    sigma_E: List[List[float]]


class FitResponse(BaseModel):
    fits: List[FitResult]


class ScenarioInfo(BaseModel):
    name: str
    p_values: List[int]
    null_dims: List[int]
    c_A_values: List[float]
    replicates: int
    estimators: List[str]
    cells: int


class RunRequest(BaseModel):
    scenario: str
    base_seed: int = 0
    replicates: Optional[int] = None
    threads: Optional[int] = None


class RecordOut(BaseModel):
    scenario: str
    p: int
    d: int
    c_A: float
    sigma_A_kind: str
    sigma_B_kind: str
    replicate: int
    seed: int
    method: str
    component: str
    statistic: str
    value: Optional[float]


class RunResponse(BaseModel):
    records: List[RecordOut]


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/simulate", response_model=SimulateResponse)
def simulate_endpoint(req: SimulateRequest, include_data: bool = False) -> SimulateResponse:
    design = req.design.to_design()
    try:
        comps = CovarianceComponents(
            sigma_A=np.asarray(req.sigma_A),
            sigma_B=np.asarray(req.sigma_B),
            sigma_E=np.asarray(req.sigma_E),
        )
        mu = np.asarray(req.mu, dtype=float) if req.mu is not None else None
        data = simulate(design, comps, mu=mu, seed=req.seed)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    ms = mean_squares(data)
    return SimulateResponse(
        design=req.design,
        seed=req.seed,
        mean_squares=MeanSquaresOut(
            m_A=ms.m_A.tolist(), m_B=ms.m_B.tolist(), m_E=ms.m_E.tolist(),
            df_A=ms.df_A, df_B=ms.df_B, df_E=ms.df_E,
        ),
        data=data.Y.reshape(-1, design.n_traits).tolist() if include_data else None,
    )


@app.post("/fit", response_model=FitResponse)
def fit_endpoint(req: FitRequest) -> FitResponse:
    design = req.design.to_design()
    try:
        ms = MeanSquares(
            m_A=np.asarray(req.mean_squares.m_A),
            m_B=np.asarray(req.mean_squares.m_B),
            m_E=np.asarray(req.mean_squares.m_E),
            df_A=req.mean_squares.df_A,
            df_B=req.mean_squares.df_B,
            df_E=req.mean_squares.df_E,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    fits = []
    for name in req.methods:
        if name not in ESTIMATOR_NAMES:
            raise HTTPException(
                status_code=422,
                detail=f"unknown method {name!r}; choose from {list(ESTIMATOR_NAMES)}",
            )
        try:
            fit = fit_by_name(name, ms, design, tol=req.tol, max_cycles=req.max_cycles)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        fits.append(
            FitResult(
                method=fit.method,
                criterion=None if not np.isfinite(fit.criterion) else float(fit.criterion),
                converged=fit.converged,
                iterations=fit.iterations,
                eigenvalues={k: v.tolist() for k, v in fit.spectra.items()},
                sigma_A=fit.components.sigma_A.tolist(),
                sigma_B=fit.components.sigma_B.tolist(),
                sigma_E=fit.components.sigma_E.tolist(),
            )
        )
    return FitResponse(fits=fits)


@app.get("/scenarios", response_model=List[ScenarioInfo])
def scenarios_endpoint() -> List[ScenarioInfo]:
    out = []
    for name, cfg in sorted(experiments.builtin_scenarios().items()):
        out.append(
            ScenarioInfo(
                name=name,
                p_values=list(cfg.p_values),
                null_dims=list(cfg.null_dims),
                c_A_values=list(cfg.c_A_values),
                replicates=cfg.replicates,
                estimators=list(cfg.estimators),
                cells=len(cfg.cells()),
            )
        )
    return out


@app.post("/run", response_model=RunResponse)
def run_endpoint(req: RunRequest) -> RunResponse:
    try:
        cfg = experiments.get_scenario(req.scenario, base_seed=req.base_seed)
    except ValueError as exc:
        raise HTTPException(status_code=404, detail=str(exc))
    if req.replicates is not None:
        cfg = dataclasses.replace(cfg, replicates=req.replicates)
    records = experiments.run_scenario(cfg, threads=req.threads)
    return RunResponse(
        records=[
            RecordOut(
                scenario=r.scenario, p=r.p, d=r.d, c_A=r.c_A,
                sigma_A_kind=r.sigma_A_kind, sigma_B_kind=r.sigma_B_kind,
                replicate=r.replicate, seed=r.seed, method=r.method,
                component=r.component, statistic=r.statistic,
                value=None if r.value is None or (isinstance(r.value, float) and np.isnan(r.value)) else r.value,
            )
            for r in records
        ]
    )
