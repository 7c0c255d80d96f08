"""Pydantic models shared by the JSON config files, the HTTP service and the CLI."""

from __future__ import annotations

import math
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

ClassifierName = Literal["Avg", "LS", "WLS", "CE"]
CLASSIFIER_ORDER = ("Avg", "LS", "WLS", "CE")


class ExperimentConfig(BaseModel):
    """One experiment: data model, mean geometry, aspect-ratio grid and Monte Carlo budgets.

    ``norms`` is a single mean norm or one per class. ``weights`` is either an
    explicit length-k vector omega or "inv_sqrt_prior" (omega_l = 1/sqrt(pi_l),
    with pi the class priors under GMM and the softmax marginals under MLM).
    """

    name: str = "custom"
    note: str = ""
    model: Literal["GMM", "MLM"]
    k: int = Field(ge=2)
    d: int = Field(ge=1)
    gamma_grid: list[float] = Field(min_length=1)
    priors: Optional[list[float]] = None
    norms: Union[float, list[float]] = 1.0
    pairwise_corr: float = 0.0
    sigma: float = Field(default=1.0, gt=0)
    classifiers: list[ClassifierName] = ["Avg", "LS", "WLS"]
    weights: Union[Literal["inv_sqrt_prior"], list[float]] = "inv_sqrt_prior"
    trials: int = Field(default=0, ge=0)
    n_test: int = Field(default=20_000, ge=1)
    n_mc: int = Field(default=200_000, ge=1000)
    classwise: bool = True
    ce_steps: int = Field(default=300, ge=1)
    seed: int = Field(default=0, ge=0)
    moments_csv: Optional[str] = None

    @field_validator("gamma_grid")
    @classmethod
    def _positive_grid(cls, v: list[float]) -> list[float]:
        if any(not (g > 0 and math.isfinite(g)) for g in v):
            raise ValueError("gamma_grid entries must be positive and finite")
        return v

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        for g in self.gamma_grid:
            if self.n_for(g) < self.k:
                raise ValueError(f"gamma={g} gives n={self.n_for(g)} < k={self.k}")
        if self.priors is not None:
            if self.model == "MLM":
                raise ValueError("priors are set by the means under MLM")
            if len(self.priors) != self.k or any(p < 0 for p in self.priors):
                raise ValueError("priors must be k nonnegative numbers")
            if abs(sum(self.priors) - 1) > 1e-9:
                raise ValueError("priors must sum to 1")
        if isinstance(self.norms, list) and len(self.norms) != self.k:
            raise ValueError("norms must be a scalar or have length k")
        if isinstance(self.weights, list) and len(self.weights) != self.k:
            raise ValueError("weights must have length k")
        if self.d < self.k:
            raise ValueError("orthogonal mean geometry needs d >= k")
        return self

    def n_for(self, gamma: float) -> int:
        return int(round(self.d / gamma))


class _Numeric(BaseModel):
    # NaN marks missing values; JSON carries it as the string "NaN"
    model_config = ConfigDict(ser_json_inf_nan="strings")


class SweepRow(_Numeric):
    """One cell of a sweep; class_id is "all" for the total error. Missing values are NaN."""

    gamma: float
    classifier: str
    class_id: str
    empirical: float
    emp_se: float
    theory: float
    theory_se: float
    ratio: float


class SummaryOut(_Numeric):
    gamma: float
    classifier: str
    b: list[float]
    Swm: list[list[float]]
    Sww: list[list[float]]
    Smm: list[list[float]]
    error: Optional[float] = None
    error_se: Optional[float] = None
    note: Optional[str] = None


class PredictResponse(_Numeric):
    config: ExperimentConfig
    summaries: list[SummaryOut]


class SweepResponse(_Numeric):
    config: ExperimentConfig
    rows: list[SweepRow]


class CrossoverPoint(_Numeric):
    gamma: float
    err_avg: float
    err_ls: float
    diff: float
    diff_se: float


class CrossoverResponse(_Numeric):
    config: ExperimentConfig
    gamma_star: float
    gamma_star_se: float
    points: list[CrossoverPoint]
    sign_ok: bool


class MomentsResponse(_Numeric):
    k: int
    n_samples: int
    seed: int
    pi: list[float]
    Pi: list[list[float]]
    pi_se: list[float]
    Pi_se: list[list[float]]


class CriterionOut(_Numeric):
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float
    metrics: dict[str, float]


class ValidateRequest(BaseModel):
    criteria: Optional[list[int]] = None
    seed: int = 0


class ValidateResponse(_Numeric):
    results: list[CriterionOut]
    passed: bool
    seconds: float
