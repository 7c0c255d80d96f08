"""HTTP service over the core library.

The handler functions are plain callables so the CLI can run them in-process;
the FastAPI routes only bind them to URLs.
"""

from __future__ import annotations

import math
import time

from fastapi import FastAPI, HTTPException

from . import harness, validation
from .schemas import (
    CriterionOut,
    CrossoverResponse,
    ExperimentConfig,
    MomentsResponse,
    PredictResponse,
    SummaryOut,
    SweepResponse,
    ValidateRequest,
    ValidateResponse,
)


def predict(cfg: ExperimentConfig) -> PredictResponse:
    out = []
    for gamma, name, summary, err, note in harness.predict_summaries(cfg):
        if summary is None:
            out.append(SummaryOut(gamma=gamma, classifier=name, b=[], Swm=[], Sww=[], Smm=[], note=note))
            continue
        out.append(
            SummaryOut(
                gamma=gamma, classifier=name, b=summary.b.tolist(), Swm=summary.Swm.tolist(), Sww=summary.Sww.tolist(),
                Smm=summary.Smm.tolist(), error=err.value, error_se=err.std_err, note=note,
            )
        )
    return PredictResponse(config=cfg, summaries=out)


def sweep(cfg: ExperimentConfig) -> SweepResponse:
    return SweepResponse(config=cfg, rows=harness.run_sweep(cfg))


def crossover(cfg: ExperimentConfig) -> CrossoverResponse:
    return harness.run_crossover(cfg)


def moments(cfg: ExperimentConfig) -> MomentsResponse:
    if cfg.model != "MLM":
        raise ValueError("softmax moments are only used by the logit model")
    m = harness.config_moments(cfg)
    return MomentsResponse(
        k=m.k, n_samples=m.n_samples, seed=m.seed, pi=m.pi.tolist(), Pi=m.Pi.tolist(), pi_se=m.pi_se.tolist(),
        Pi_se=m.Pi_se.tolist(),
    )


def validate(req: ValidateRequest) -> ValidateResponse:
    unknown = set(req.criteria or ()) - set(validation.CHECKS)
    if unknown:
        raise ValueError(f"unknown criteria {sorted(unknown)}; available {sorted(validation.CHECKS)}")
    start = time.perf_counter()
    results = validation.run_all(req.criteria, req.seed)
    out = [
        CriterionOut(number=r.number, name=r.name, passed=r.passed, detail=r.detail, seconds=r.seconds, metrics=r.metrics)
        for r in results
    ]
    elapsed = time.perf_counter() - start
    return ValidateResponse(results=out, passed=all(r.passed for r in out), seconds=elapsed)


app = FastAPI(title="artifact", description="Asymptotic error predictions for linear multiclass classifiers")


def _guard(fn, arg):
    try:
        return fn(arg)
    except (ValueError, FileNotFoundError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.get("/presets")
def presets() -> list[str]:
    return harness.list_presets()


@app.get("/presets/{name}", response_model=ExperimentConfig)
def preset(name: str) -> ExperimentConfig:
    if name not in harness.list_presets():
        raise HTTPException(status_code=404, detail=f"unknown preset {name}")
    return harness.load_config(name)


@app.post("/predict", response_model=PredictResponse)
def predict_route(cfg: ExperimentConfig) -> PredictResponse:
    return _guard(predict, cfg)


@app.post("/sweep", response_model=SweepResponse)
def sweep_route(cfg: ExperimentConfig) -> SweepResponse:
    return _guard(sweep, cfg)


@app.post("/crossover", response_model=CrossoverResponse)
def crossover_route(cfg: ExperimentConfig) -> CrossoverResponse:
    return _guard(crossover, cfg)


@app.post("/moments", response_model=MomentsResponse)
def moments_route(cfg: ExperimentConfig) -> MomentsResponse:
    return _guard(moments, cfg)


@app.post("/validate", response_model=ValidateResponse)
def validate_route(req: ValidateRequest) -> ValidateResponse:
    return _guard(validate, req)
