"""Pydantic models for loss/training settings, run records and circuit documents."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class LossConfig(BaseModel):
    """Semantic loss constants."""

    constant: float = Field(1.0, gt=0, description="Multiplier K in −K·log WMC")
    epsilon: float = Field(1e-30, gt=0, lt=1, description="WMC floor used during training")
    clamp: float = Field(
        1e-12, gt=0, lt=0.5, description="Network outputs are clamped to [clamp, 1 − clamp]"
    )


class TrainConfig(BaseModel):
    """Optimizer and objective settings for one training run."""

    semantic_weight: float = Field(0.0, ge=0, description="w in existing loss + w·regularizer")
    regularizer: Literal["semantic", "entropy"] = "semantic"
    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_epsilon: float = Field(1e-8, gt=0)
    max_epochs: int = Field(2000, ge=1)
    patience: int = Field(50, ge=1, description="Epochs without validation improvement")
    seed: int = 0
    log_every: int = Field(50, ge=1)


class Metrics(BaseModel):
    """Percentages over a dataset split."""

    coherent: float = Field(ge=0, le=100)
    incoherent: float = Field(ge=0, le=100)
    constraint: float = Field(ge=0, le=100)
    rows: int = 0

    @model_validator(mode="after")
    def _coherent_below_incoherent(self) -> Metrics:
        if self.coherent > self.incoherent + 1e-9:
            raise ValueError("Coherent accuracy cannot exceed incoherent accuracy")
        return self


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    valid_loss: float | None = None
    valid_metrics: Metrics | None = None


class TrainResult(BaseModel):
    """Outcome of a training run."""

    best_epoch: int
    epochs_run: int
    stopped_early: bool
    history: list[EpochRecord] = Field(default_factory=list)
    test_metrics: Metrics | None = None


class AxiomCheck(BaseModel):
    name: str
    instances: int
    failures: int = 0
    max_error: float = 0.0
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0


class AxiomReport(BaseModel):
    seed: int
    checks: list[AxiomCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class ToyResult(BaseModel):
    """One toy-task model: regularizer, unlabeled accuracy and decision boundary."""

    label: str
    semantic_weight: float
    regularizer: str
    unlabeled_accuracy: float
    mean_entropy: float
    boundary: tuple[float, float, float] = Field(description="(w1, w2, b) of w1·x + w2·y + b = 0")


class FuzzyColumnSummary(BaseModel):
    mean: float
    std: float
    min: float
    max: float


class FuzzySummary(BaseModel):
    n: int
    samples: int
    distribution: str
    encoding1: FuzzyColumnSummary
    encoding2: FuzzyColumnSummary
    semantic_loss: FuzzyColumnSummary
    differing_fraction: float = Field(ge=0, le=1)
    semantic_max_gap: float = Field(ge=0, description="max |SL(enc1) − SL(enc2)|")


class ModelCheckpoint(BaseModel):
    """Serialized MLP parameters."""

    sizes: list[int]
    output: Literal["sigmoid", "softmax"]
    weights: list[list[list[float]]]
    biases: list[list[float]]


class RunManifest(BaseModel):
    """Provenance for every file written under ``--out``."""

    command: str
    version: str
    python: str
    numpy: str
    seeds: dict[str, int] = Field(default_factory=dict)
    inputs: dict[str, str] = Field(default_factory=dict, description="path → SHA-256")
    config: dict[str, object] = Field(default_factory=dict)


# --- Circuit JSON ---


class CircuitNodeDocument(BaseModel):
    kind: Literal["literal", "constant", "product", "sum"]
    var: int | None = Field(None, ge=1)
    polarity: bool | None = None
    value: Literal[0, 1] | None = None
    children: list[int] | None = None


class CircuitDocument(BaseModel):
    universe_size: int = Field(ge=0)
    nodes: list[CircuitNodeDocument]
    root: int = Field(ge=0)
