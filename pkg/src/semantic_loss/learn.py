"""Feedforward networks trained on "existing loss + w·regularizer".

The network is a plain numpy MLP with sigmoid hidden units and manual
backpropagation. The semantic loss term is evaluated through a
:class:`~semantic_loss.engine.BatchPlan` in which rows sharing the same
evidence share one conditioned circuit.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
import numpy.typing as npt

from semantic_loss.circuit import Circuit
from semantic_loss.data import Dataset
from semantic_loss.encoders import condition
from semantic_loss.engine import BatchPlan, semantic_loss_grad_batch
from semantic_loss.errors import DimensionError, DivergenceError
from semantic_loss.logic import ProbVector, VarId
from semantic_loss.models import (
    EpochRecord,
    LossConfig,
    Metrics,
    ModelCheckpoint,
    TrainConfig,
    TrainResult,
)

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]


class OutputActivation(StrEnum):
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


def _sigmoid(z: FloatArray) -> FloatArray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z: FloatArray) -> FloatArray:
    shifted = np.exp(z - z.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


@dataclass
class MlpModel:
    """Layer sizes, weights of shape (fan_in, fan_out) and bias vectors."""

    sizes: list[int]
    weights: list[FloatArray]
    biases: list[FloatArray]
    output: OutputActivation = OutputActivation.SIGMOID

    def __post_init__(self) -> None:
        if len(self.sizes) < 2:
            raise ValueError("An MLP needs at least an input and an output layer")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("Weight and bias lists do not match the layer sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            if w.shape != (self.sizes[k], self.sizes[k + 1]) or b.shape != (self.sizes[k + 1],):
                raise DimensionError(f"Layer {k} parameters do not chain with sizes {self.sizes}")

    @classmethod
    def init(
        cls,
        sizes: list[int],
        output: OutputActivation = OutputActivation.SIGMOID,
        rng: np.random.Generator | None = None,
    ) -> MlpModel:
        """Glorot-uniform weights, zero biases."""
        rng = rng or np.random.default_rng(0)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:], strict=False):
            r = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-r, r, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(list(sizes), weights, biases, output)

    @classmethod
    def zeros(
        cls, sizes: list[int], output: OutputActivation = OutputActivation.SIGMOID
    ) -> MlpModel:
        weights = [np.zeros((a, b)) for a, b in zip(sizes, sizes[1:], strict=False)]
        return cls(list(sizes), weights, [np.zeros(b) for b in sizes[1:]], output)

    def parameters(self) -> list[FloatArray]:
        """Weights and biases interleaved per layer; the arrays are live views."""
        out: list[FloatArray] = []
        for w, b in zip(self.weights, self.biases, strict=True):
            out.extend((w, b))
        return out

    def copy(self) -> MlpModel:
        return copy.deepcopy(self)

    def to_checkpoint(self) -> ModelCheckpoint:
        return ModelCheckpoint(
            sizes=self.sizes,
            output=self.output.value,
            weights=[w.tolist() for w in self.weights],
            biases=[b.tolist() for b in self.biases],
        )

    @classmethod
    def from_checkpoint(cls, cp: ModelCheckpoint) -> MlpModel:
        return cls(
            list(cp.sizes),
            [np.asarray(w, dtype=np.float64).reshape(a, b) for w, a, b in zip(cp.weights, cp.sizes, cp.sizes[1:], strict=False)],
            [np.asarray(b, dtype=np.float64) for b in cp.biases],
            OutputActivation(cp.output),
        )


def _activations(m: MlpModel, x: FloatArray) -> list[FloatArray]:
    if x.shape[-1] != m.sizes[0]:
        raise DimensionError(f"Model expects {m.sizes[0]} inputs, got {x.shape[-1]}")
    layers = [x]
    last = len(m.weights) - 1
    for k, (w, b) in enumerate(zip(m.weights, m.biases, strict=True)):
        z = layers[-1] @ w + b
        if k < last:
            layers.append(_sigmoid(z))
        elif m.output is OutputActivation.SOFTMAX:
            layers.append(_softmax(z))
        else:
            layers.append(_sigmoid(z))
    if not np.all(np.isfinite(layers[-1])):
        raise DivergenceError("Non-finite network activation")
    return layers


def forward(m: MlpModel, x: npt.ArrayLike) -> ProbVector:
    """Output probabilities for one feature vector or a matrix of them."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise DimensionError(f"Expected a feature vector or matrix, got shape {arr.shape}")
    return _activations(m, arr)[-1]


def _backward(m: MlpModel, layers: list[FloatArray], grad_p: FloatArray) -> list[FloatArray]:
    out = layers[-1]
    if m.output is OutputActivation.SOFTMAX:
        dz = out * (grad_p - np.sum(grad_p * out, axis=1, keepdims=True))
    else:
        dz = grad_p * out * (1.0 - out)
    grads: list[FloatArray] = []
    for k in reversed(range(len(m.weights))):
        a = layers[k]
        grads.append(dz.sum(axis=0))
        grads.append(a.T @ dz)
        if k > 0:
            dz = (dz @ m.weights[k].T) * a * (1.0 - a)
    grads.reverse()
    return grads


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def cross_entropy(
    p: FloatArray, y: FloatArray, output: OutputActivation, clamp: float = 1e-12
) -> tuple[FloatArray, FloatArray]:
    """Per-row cross entropy and its gradient with respect to ``p``."""
    q = np.clip(p, clamp, 1.0 - clamp)
    if output is OutputActivation.SOFTMAX:
        return -np.sum(y * np.log(q), axis=-1), -y / q
    value = -np.sum(y * np.log(q) + (1.0 - y) * np.log1p(-q), axis=-1)
    return value, -(y / q) + (1.0 - y) / (1.0 - q)


def entropy_loss(p: npt.ArrayLike, floor: float = 1e-30) -> tuple[FloatArray | float, FloatArray]:
    """Shannon entropy (nats) of a distribution, or of each row of a matrix."""
    arr = np.asarray(p, dtype=np.float64)
    logs = np.log(np.maximum(arr, floor))
    value = -np.sum(arr * logs, axis=-1)
    grad = -(logs + 1.0)
    return (float(value) if arr.ndim == 1 else value), grad


def combined_loss(
    p: npt.ArrayLike,
    label: npt.ArrayLike | None,
    c: Circuit,
    w: float,
    *,
    output: OutputActivation = OutputActivation.SIGMOID,
    evidence: dict[VarId, int] | None = None,
    cfg: LossConfig | None = None,
) -> tuple[float, FloatArray]:
    """Cross entropy (when labeled) plus w·semantic loss, for one vector over c's universe."""
    cfg = cfg or LossConfig()
    q = np.clip(np.asarray(p, dtype=np.float64), cfg.clamp, 1.0 - cfg.clamp)
    if q.shape != (c.universe_size,):
        raise DimensionError(f"Expected {c.universe_size} probabilities, got shape {q.shape}")
    value = 0.0
    grad = np.zeros_like(q)
    if label is not None:
        y = np.asarray(label, dtype=np.float64)
        if y.shape != q.shape:
            raise DimensionError(f"Label shape {y.shape} does not match {q.shape}")
        ce, g = cross_entropy(q[None, :], y[None, :], output, cfg.clamp)
        value += float(ce[0])
        grad += g[0]
    if w > 0:
        circuit = condition(c, evidence) if evidence else c
        sl, g = semantic_loss_grad_batch(circuit, q[None, :], cfg, floor=True)
        value += w * float(sl[0])
        grad += w * g[0]
    return value, grad


# ---------------------------------------------------------------------------
# Tasks and objectives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StructuredTask:
    """How model outputs and known inputs map onto a constraint's variables.

    ``output_vars[k]`` is the circuit variable predicted by output unit ``k``;
    ``evidence_map`` pairs feature columns with the variables they fix.
    """

    circuit: Circuit | None
    output_vars: tuple[VarId, ...]
    evidence_map: tuple[tuple[int, VarId], ...] = ()
    output: OutputActivation = OutputActivation.SIGMOID
    conditioned: dict[tuple[int, ...], Circuit] = field(
        default_factory=dict, compare=False, repr=False
    )

    def conditioned_on(self, key: tuple[int, ...]) -> Circuit:
        assert self.circuit is not None
        hit = self.conditioned.get(key)
        if hit is None:
            evidence = {v: bit for (_, v), bit in zip(self.evidence_map, key, strict=True)}
            hit = self.conditioned[key] = condition(self.circuit, evidence)
        return hit


class Objective:
    """Loss over one dataset split, with its evidence groups resolved once."""

    def __init__(
        self,
        task: StructuredTask,
        data: Dataset,
        cfg: TrainConfig,
        loss_cfg: LossConfig | None = None,
    ) -> None:
        self.task = task
        self.cfg = cfg
        self.loss_cfg = loss_cfg or LossConfig()
        self.rows = len(data)
        self.labels = data.labels.astype(np.float64)
        self.labeled = data.labeled.copy()
        self._features = data.features
        self._plan: BatchPlan | None = None
        self._base: FloatArray | None = None
        self._cols = np.asarray(task.output_vars, dtype=np.int64) - 1

    def _ensure_plan(self) -> tuple[BatchPlan, FloatArray]:
        if self._plan is not None and self._base is not None:
            return self._plan, self._base
        circuit = self.task.circuit
        assert circuit is not None
        base = np.full((self.rows, circuit.universe_size), 0.5)
        if self.task.evidence_map:
            cols = [c for c, _ in self.task.evidence_map]
            var_cols = np.asarray([v for _, v in self.task.evidence_map], dtype=np.int64) - 1
            ev = np.asarray(self._features[:, cols], dtype=np.int64)
            keys, inverse = np.unique(ev, axis=0, return_inverse=True)
            inverse = inverse.ravel()
            groups = [
                (self.task.conditioned_on(tuple(int(b) for b in key)), np.flatnonzero(inverse == k))
                for k, key in enumerate(keys)
            ]
            base[:, var_cols] = ev
            logger.debug("Objective: %d rows in %d evidence groups", self.rows, len(groups))
        else:
            groups = [(circuit, np.arange(self.rows))]
        self._plan = BatchPlan(groups, num_rows=self.rows)
        self._base = base
        return self._plan, base

    def _full_probs(self, q: FloatArray) -> tuple[BatchPlan, FloatArray]:
        plan, base = self._ensure_plan()
        full = base.copy()
        full[:, self._cols] = q
        return plan, full

    def value_and_grad(self, probs: FloatArray) -> tuple[float, FloatArray]:
        """Mean loss and its gradient with respect to the output probabilities.

        Sigmoid outputs are independent bits, so their cross entropy is averaged
        over bits as well as rows; a softmax row contributes one term.
        """
        clamp = self.loss_cfg.clamp
        q = np.clip(probs, clamp, 1.0 - clamp)
        grad = np.zeros_like(q)
        value = 0.0
        n_labeled = int(self.labeled.sum())
        if n_labeled:
            ce, g = cross_entropy(
                q[self.labeled], self.labels[self.labeled], self.task.output, clamp
            )
            scale = n_labeled * (q.shape[1] if self.task.output is OutputActivation.SIGMOID else 1)
            value += float(ce.sum()) / scale
            grad[self.labeled] += g / scale
        w = self.cfg.semantic_weight
        if w > 0:
            if self.cfg.regularizer == "entropy":
                h, g = entropy_loss(q)
                value += w * float(np.mean(h))
                grad += w * g / self.rows
            elif self.task.circuit is not None:
                plan, full = self._full_probs(q)
                sl, g = semantic_loss_grad_batch(plan, full, self.loss_cfg, floor=True)
                floored = int(np.sum(sl >= -self.loss_cfg.constant * math.log(self.loss_cfg.epsilon)))
                if floored:
                    logger.warning("Semantic loss floored on %d of %d rows (WMC below epsilon)", floored, self.rows)
                value += w * float(np.mean(sl))
                grad += w * g[:, self._cols] / self.rows
        return value, grad

    def satisfied(self, bits: npt.ArrayLike) -> npt.NDArray[np.bool_]:
        """Whether each row's evidence plus predicted bits satisfies the constraint."""
        arr = np.asarray(bits, dtype=np.float64)
        if self.task.circuit is None:
            return np.ones(len(arr), dtype=bool)
        plan, full = self._full_probs(arr)
        return plan.log_wmc(full) > -0.5


def loss_and_gradients(
    m: MlpModel, x: npt.ArrayLike, objective: Objective
) -> tuple[float, list[FloatArray]]:
    """Objective value and its gradient for every parameter (``parameters()`` order)."""
    layers = _activations(m, np.asarray(x, dtype=np.float64))
    value, grad_p = objective.value_and_grad(layers[-1])
    return value, _backward(m, layers, grad_p)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def metrics_from_predictions(
    probs: FloatArray, labels: npt.ArrayLike, satisfied: npt.ArrayLike
) -> Metrics:
    """Threshold at 0.5 (strictly above is 1) and score against the labels."""
    bits = (np.asarray(probs) > 0.5).astype(np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if len(y) == 0:
        return Metrics(coherent=0.0, incoherent=0.0, constraint=0.0, rows=0)
    correct = bits == y
    return Metrics(
        coherent=100.0 * float(np.mean(correct.all(axis=1))),
        incoherent=100.0 * float(np.mean(correct)),
        constraint=100.0 * float(np.mean(np.asarray(satisfied, dtype=bool))),
        rows=len(y),
    )


def evaluate_metrics(
    m: MlpModel, data: Dataset, task: StructuredTask, objective: Objective | None = None
) -> Metrics:
    probs = forward(m, data.features)
    objective = objective or Objective(task, data, TrainConfig())
    bits = (probs > 0.5).astype(np.float64)
    return metrics_from_predictions(probs, data.labels, objective.satisfied(bits))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, params: list[FloatArray], cfg: TrainConfig) -> None:
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[FloatArray], grads: list[FloatArray]) -> None:
        """Update ``params`` in place."""
        self.t += 1
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v, strict=True):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.cfg.adam_epsilon)


def train(
    m: MlpModel,
    cfg: TrainConfig,
    train_set: Dataset,
    valid_set: Dataset | None,
    task: StructuredTask,
    loss_cfg: LossConfig | None = None,
) -> tuple[MlpModel, TrainResult]:
    """Full-batch Adam with early stopping on the validation loss.

    Without a validation set the run lasts ``max_epochs``. The returned model
    is a trained copy; ``m`` is left untouched.
    """
    model = m.copy()
    params = model.parameters()
    optimizer = Adam(params, cfg)
    train_obj = Objective(task, train_set, cfg, loss_cfg)
    valid_obj = Objective(task, valid_set, cfg, loss_cfg) if valid_set is not None and len(valid_set) else None

    history: list[EpochRecord] = []
    best_loss = math.inf
    best_params = [p.copy() for p in params]
    best_epoch = 0
    stale = 0
    stopped_early = False
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        value, grads = loss_and_gradients(model, train_set.features, train_obj)
        if not math.isfinite(value):
            raise DivergenceError(f"Epoch {epoch}: training loss is {value!r}")
        optimizer.step(params, grads)
        if not all(np.all(np.isfinite(p)) for p in params):
            raise DivergenceError(f"Epoch {epoch}: non-finite parameter after the update")
        record = EpochRecord(epoch=epoch, train_loss=value)

        if valid_obj is not None and valid_set is not None:
            probs = forward(model, valid_set.features)
            valid_loss, _ = valid_obj.value_and_grad(probs)
            bits = (probs > 0.5).astype(np.float64)
            record.valid_loss = valid_loss
            record.valid_metrics = metrics_from_predictions(
                probs, valid_set.labels, valid_obj.satisfied(bits)
            )
            if valid_loss < best_loss:
                best_loss, best_epoch, stale = valid_loss, epoch, 0
                best_params = [p.copy() for p in params]
            else:
                stale += 1
        history.append(record)

        if epoch % cfg.log_every == 0:
            logger.info(
                "Epoch %d: train %.5f, valid %s",
                epoch,
                value,
                "-" if record.valid_loss is None else f"{record.valid_loss:.5f}",
            )
        if valid_obj is not None and stale >= cfg.patience:
            stopped_early = True
            logger.info("Early stopping at epoch %d (best epoch %d)", epoch, best_epoch)
            break

    if valid_obj is not None:
        for p, best in zip(params, best_params, strict=True):
            p[...] = best
    else:
        best_epoch = epoch
    return model, TrainResult(
        best_epoch=best_epoch, epochs_run=epoch, stopped_early=stopped_early, history=history
    )


# ---------------------------------------------------------------------------
# Toy-task helpers
# ---------------------------------------------------------------------------


def decision_boundary(m: MlpModel) -> tuple[float, float, float]:
    """(w1, w2, b) with w1·x + w2·y + b = 0 where the two class logits tie."""
    if m.sizes != [2, 2]:
        raise DimensionError(f"Boundary extraction needs a linear 2→2 model, got sizes {m.sizes}")
    w, b = m.weights[0], m.biases[0]
    diff = w[:, 1] - w[:, 0]
    return float(diff[0]), float(diff[1]), float(b[1] - b[0])


def mean_entropy(m: MlpModel, x: npt.ArrayLike) -> float:
    value, _ = entropy_loss(forward(m, x))
    return float(np.mean(value))


def accuracy(m: MlpModel, x: npt.ArrayLike, labels: npt.ArrayLike) -> float:
    """Argmax accuracy against one-hot labels."""
    pred = np.argmax(forward(m, x), axis=-1)
    return float(np.mean(pred == np.argmax(np.asarray(labels), axis=-1)))
