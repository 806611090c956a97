"""Structured-prediction and semi-supervised runs behind the ``train-*`` commands."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from semantic_loss.circuit import simplify
from semantic_loss.compiler import BddManager, BddRef, to_circuit
from semantic_loss.data import Dataset
from semantic_loss.encoders import GridSpec, exactly_one, grid_path_bdd, total_order
from semantic_loss.learn import (
    MlpModel,
    OutputActivation,
    StructuredTask,
    accuracy,
    decision_boundary,
    evaluate_metrics,
    mean_entropy,
    train,
)
from semantic_loss.models import LossConfig, ToyResult, TrainConfig, TrainResult

logger = logging.getLogger(__name__)


def grid_task(g: GridSpec, path_bdd: tuple[BddManager, BddRef] | None = None) -> StructuredTask:
    """Edge outputs under the simple-path constraint, conditioned on the endpoint features."""
    mgr, root = path_bdd if path_bdd is not None else grid_path_bdd(g)
    circuit = simplify(to_circuit(mgr, root, g.universe_size))
    logger.info("Grid %d×%d constraint: %d circuit nodes", g.rows, g.cols, circuit.size)
    return StructuredTask(
        circuit=circuit,
        output_vars=tuple(g.edge_vars),
        evidence_map=tuple((v, g.indicator_var(v)) for v in range(g.num_nodes)),
    )


def pref_task(n: int = 4) -> StructuredTask:
    """Permutation-matrix outputs under the total-order constraint."""
    return StructuredTask(circuit=total_order(n), output_vars=tuple(range(1, n * n + 1)))


def toy_task() -> StructuredTask:
    return StructuredTask(
        circuit=exactly_one(2), output_vars=(1, 2), output=OutputActivation.SOFTMAX
    )


@dataclass
class TrainedRun:
    label: str
    model: MlpModel
    result: TrainResult


def fit(
    label: str,
    task: StructuredTask,
    data: Dataset,
    hidden: Sequence[int],
    cfg: TrainConfig,
    loss_cfg: LossConfig | None = None,
) -> TrainedRun:
    """Train on the train split, stop on valid, score the test split."""
    train_set, valid_set, test_set = (data.subset(s) for s in ("train", "valid", "test"))
    sizes = [data.num_features, *hidden, data.num_labels]
    model = MlpModel.init(sizes, task.output, np.random.default_rng(cfg.seed))
    logger.info(
        "Training %s: sizes %s, w=%g, %d/%d/%d rows",
        label,
        sizes,
        cfg.semantic_weight,
        len(train_set),
        len(valid_set),
        len(test_set),
    )
    trained, result = train(model, cfg, train_set, valid_set, task, loss_cfg)
    if len(test_set):
        result.test_metrics = evaluate_metrics(trained, test_set, task)
        logger.info(
            "%s test: coherent %.2f%%, incoherent %.2f%%, constraint %.2f%%",
            label,
            result.test_metrics.coherent,
            result.test_metrics.incoherent,
            result.test_metrics.constraint,
        )
    return TrainedRun(label, trained, result)


# ---------------------------------------------------------------------------
# Toy task
# ---------------------------------------------------------------------------


def fit_toy(
    label: str, data: Dataset, cfg: TrainConfig, loss_cfg: LossConfig | None = None
) -> tuple[MlpModel, ToyResult]:
    """Linear softmax classifier; accuracy and entropy are measured on the unlabeled rows."""
    task = toy_task()
    model = MlpModel.init([2, 2], OutputActivation.SOFTMAX, np.random.default_rng(cfg.seed))
    trained, _ = train(model, cfg, data, None, task, loss_cfg)
    hidden = ~data.labeled
    result = ToyResult(
        label=label,
        semantic_weight=cfg.semantic_weight,
        regularizer=cfg.regularizer if cfg.semantic_weight > 0 else "none",
        unlabeled_accuracy=accuracy(trained, data.features[hidden], data.labels[hidden]),
        mean_entropy=mean_entropy(trained, data.features[hidden]),
        boundary=decision_boundary(trained),
    )
    return trained, result


def run_toy(
    data: Dataset,
    cfg: TrainConfig,
    regularizers: Sequence[str] = ("semantic",),
    loss_cfg: LossConfig | None = None,
) -> list[ToyResult]:
    """The w = 0 baseline followed by one model per regularizer at ``cfg.semantic_weight``."""
    results = [fit_toy("baseline", data, cfg.model_copy(update={"semantic_weight": 0.0}), loss_cfg)[1]]
    for reg in regularizers:
        variant = cfg.model_copy(update={"regularizer": reg})
        results.append(fit_toy(reg, data, variant, loss_cfg)[1])
    return results
