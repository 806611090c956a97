"""Weighted model counting, semantic loss and its gradient on compiled circuits.

Values are propagated in log space. A :class:`BatchPlan` lays the nodes of
one or more circuits, each repeated over its own block of rows, into a single
flat buffer and schedules them by depth, so a forward or backward pass costs
one vectorized numpy step per (depth, node kind) pair however many rows and
circuits take part.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from semantic_loss.circuit import KIND_CODES, Circuit, NodeKind
from semantic_loss.errors import DimensionError, ProbabilityError, UnsatisfiableError
from semantic_loss.logic import ProbVector, check_probabilities
from semantic_loss.models import LossConfig

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

_LITERAL = KIND_CODES[NodeKind.LITERAL]
_CONSTANT = KIND_CODES[NodeKind.CONSTANT]


@dataclass(frozen=True)
class _Stage:
    is_product: bool
    out: IntArray
    child: IntArray
    starts: IntArray
    segment: IntArray
    # child edges regrouped by target node for the backward accumulation
    bw_order: IntArray
    bw_targets: IntArray
    bw_starts: IntArray
    bw_segment: IntArray


def _segments(counts: IntArray) -> tuple[IntArray, IntArray]:
    starts = np.zeros(len(counts), dtype=np.int64)
    if len(counts) > 1:
        np.cumsum(counts[:-1], out=starts[1:])
    segment = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    return starts, segment


def _segment_logsumexp(values: FloatArray, starts: IntArray, segment: IntArray) -> FloatArray:
    peak = np.maximum.reduceat(values, starts)
    shift = np.where(np.isfinite(peak), peak, 0.0)
    total = np.add.reduceat(np.exp(values - shift[segment]), starts)
    with np.errstate(divide="ignore"):
        return np.log(total) + shift


class BatchPlan:
    """Evaluation schedule for ``(circuit, rows)`` groups sharing one universe.

    Every row of the probability matrix must belong to exactly one group.
    """

    def __init__(
        self,
        groups: Sequence[tuple[Circuit, Sequence[int] | IntArray]],
        num_rows: int | None = None,
    ) -> None:
        if not groups:
            raise ValueError("A batch plan needs at least one group")
        sizes = {c.universe_size for c, _ in groups}
        if len(sizes) != 1:
            raise DimensionError(f"Grouped circuits disagree on the universe size: {sorted(sizes)}")
        self.universe_size = sizes.pop()
        row_blocks = [np.asarray(rows, dtype=np.int64) for _, rows in groups]
        all_rows = np.concatenate(row_blocks) if row_blocks else np.zeros(0, dtype=np.int64)
        self.num_rows = int(all_rows.max()) + 1 if num_rows is None else num_rows
        covered = np.bincount(all_rows, minlength=self.num_rows)
        if len(covered) != self.num_rows or np.any(covered != 1):
            raise ValueError("Every row must belong to exactly one circuit group")

        n = self.universe_size
        lit_pos, lit_prob, lit_positive = [], [], []
        const_pos, const_val = [], []
        root_pos = np.empty(self.num_rows, dtype=np.int64)
        by_level: dict[tuple[int, bool], list[tuple[IntArray, IntArray, IntArray]]] = {}

        offset = 0
        for (circuit, _), rows in zip(groups, row_blocks, strict=True):
            arrays = circuit.arrays
            width = circuit.size
            base = offset + np.arange(len(rows), dtype=np.int64) * width

            lits = np.flatnonzero(arrays.kind == _LITERAL)
            lit_pos.append((base[:, None] + lits[None, :]).ravel())
            lit_prob.append((rows[:, None] * n + arrays.var_index[lits][None, :]).ravel())
            lit_positive.append(np.tile(arrays.positive[lits], len(rows)))

            consts = np.flatnonzero(arrays.kind == _CONSTANT)
            const_pos.append((base[:, None] + consts[None, :]).ravel())
            const_val.append(np.tile(arrays.value[consts], len(rows)))

            root_pos[rows] = base + circuit.root

            for level in arrays.levels:
                out = (base[:, None] + level.nodes[None, :]).ravel()
                child = (base[:, None] + level.children[None, :]).ravel()
                counts = np.tile(level.counts, len(rows))
                key = (level.depth, level.kind is NodeKind.PRODUCT)
                by_level.setdefault(key, []).append((out, child, counts))
            offset += len(rows) * width

        self.size = offset
        self._lit_pos = np.concatenate(lit_pos)
        self._lit_prob = np.concatenate(lit_prob)
        self._lit_positive = np.concatenate(lit_positive)
        self._const_pos = np.concatenate(const_pos)
        self._const_log = np.where(np.concatenate(const_val) == 1, 0.0, -np.inf)
        self._root_pos = root_pos

        stages = []
        for (_, is_product), parts in sorted(by_level.items()):
            out = np.concatenate([p[0] for p in parts])
            child = np.concatenate([p[1] for p in parts])
            counts = np.concatenate([p[2] for p in parts])
            starts, segment = _segments(counts)
            order = np.argsort(child, kind="stable")
            targets, bw_counts = np.unique(child[order], return_counts=True)
            bw_starts, bw_segment = _segments(bw_counts.astype(np.int64))
            stages.append(
                _Stage(
                    is_product, out, child, starts, segment, order, targets, bw_starts, bw_segment
                )
            )
        self._stages = stages
        logger.debug(
            "Batch plan: %d groups, %d rows, %d buffer slots, %d stages",
            len(groups),
            self.num_rows,
            self.size,
            len(stages),
        )

    # -- passes -------------------------------------------------------------

    def _check(self, probs: npt.ArrayLike) -> FloatArray:
        arr = np.asarray(probs, dtype=np.float64)
        if arr.shape != (self.num_rows, self.universe_size):
            raise DimensionError(
                f"Expected probabilities of shape ({self.num_rows}, {self.universe_size}), "
                f"got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ProbabilityError("Probabilities must be finite and lie in [0, 1]")
        return arr

    def forward(self, probs: npt.ArrayLike) -> FloatArray:
        """Log value of every buffer slot."""
        flat = self._check(probs).ravel()
        p = flat[self._lit_prob]
        values = np.empty(self.size, dtype=np.float64)
        with np.errstate(divide="ignore"):
            values[self._lit_pos] = np.where(self._lit_positive, np.log(p), np.log1p(-p))
        values[self._const_pos] = self._const_log
        for st in self._stages:
            incoming = values[st.child]
            if st.is_product:
                values[st.out] = np.add.reduceat(incoming, st.starts)
            else:
                values[st.out] = _segment_logsumexp(incoming, st.starts, st.segment)
        return values

    def backward(self, values: FloatArray) -> FloatArray:
        """log ∂logW/∂v for every slot; rows with W = 0 stay at −inf."""
        grads = np.full(self.size, -np.inf)
        root_values = values[self._root_pos]
        grads[self._root_pos] = np.where(np.isfinite(root_values), -root_values, -np.inf)
        for st in reversed(self._stages):
            parent = grads[st.out][st.segment]
            if st.is_product:
                incoming = values[st.child]
                finite = np.isfinite(incoming)
                zeros = np.add.reduceat((~finite).astype(np.int64), st.starts)[st.segment]
                others = np.add.reduceat(np.where(finite, incoming, 0.0), st.starts)[st.segment]
                local = np.where(
                    finite,
                    np.where(zeros == 0, others - np.where(finite, incoming, 0.0), -np.inf),
                    np.where(zeros == 1, others, -np.inf),
                )
                contrib = parent + local
            else:
                contrib = parent
            acc = _segment_logsumexp(contrib[st.bw_order], st.bw_starts, st.bw_segment)
            grads[st.bw_targets] = np.logaddexp(grads[st.bw_targets], acc)
        return grads

    def log_wmc(self, probs: npt.ArrayLike) -> FloatArray:
        return self.forward(probs)[self._root_pos]

    def log_wmc_and_grad(self, probs: npt.ArrayLike) -> tuple[FloatArray, FloatArray]:
        """Per-row log WMC and ∂logWMC/∂p, shaped like ``probs``."""
        values = self.forward(probs)
        grads = self.backward(values)
        sign = np.where(self._lit_positive, 1.0, -1.0)
        weights = sign * np.exp(grads[self._lit_pos])
        flat = np.bincount(
            self._lit_prob, weights=weights, minlength=self.num_rows * self.universe_size
        )
        return values[self._root_pos], flat.reshape(self.num_rows, self.universe_size)

    def trace(self, probs: npt.ArrayLike) -> tuple[FloatArray, FloatArray]:
        values = self.forward(probs)
        return values, self.backward(values)


# ---------------------------------------------------------------------------
# Single-vector API
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalTrace:
    """Per-node values and partial derivatives ∂WMC/∂v(node) for one vector."""

    values: FloatArray
    partials: FloatArray
    wmc: float


def _single(circuit: Circuit) -> BatchPlan:
    return BatchPlan([(circuit, [0])], num_rows=1)


def _loss_from_log(log_w: FloatArray, cfg: LossConfig, floor: bool) -> FloatArray:
    if floor:
        return -cfg.constant * np.maximum(log_w, math.log(cfg.epsilon))
    with np.errstate(invalid="ignore"):
        return np.where(np.isneginf(log_w), np.inf, -cfg.constant * log_w)


def wmc(circuit: Circuit, p: Sequence[float] | npt.ArrayLike) -> float:
    """Σ over satisfying states of Π p_i · Π (1 − p_i)."""
    vec = check_probabilities(p, circuit.universe_size)
    return float(np.exp(_single(circuit).log_wmc(vec[None, :])[0]))


def log_wmc(circuit: Circuit, p: Sequence[float] | npt.ArrayLike) -> float:
    vec = check_probabilities(p, circuit.universe_size)
    return float(_single(circuit).log_wmc(vec[None, :])[0])


def semantic_loss(
    circuit: Circuit,
    p: Sequence[float] | npt.ArrayLike,
    cfg: LossConfig | None = None,
    *,
    floor: bool = False,
) -> float:
    """−K·log WMC; ``inf`` for an unsatisfiable outcome unless ``floor`` is set."""
    cfg = cfg or LossConfig()
    return float(_loss_from_log(np.array([log_wmc(circuit, p)]), cfg, floor)[0])


def semantic_loss_grad(
    circuit: Circuit,
    p: Sequence[float] | npt.ArrayLike,
    cfg: LossConfig | None = None,
    *,
    floor: bool = False,
) -> ProbVector:
    """∂L/∂p_i = −K·(∂WMC/∂p_i)/WMC."""
    cfg = cfg or LossConfig()
    vec = check_probabilities(p, circuit.universe_size)
    log_w, grad = _single(circuit).log_wmc_and_grad(vec[None, :])
    return _loss_grad(log_w, grad, cfg, floor)[0]


def _loss_grad(log_w: FloatArray, grad: FloatArray, cfg: LossConfig, floor: bool) -> FloatArray:
    unsat = np.isneginf(log_w)
    if floor:
        floored = log_w < math.log(cfg.epsilon)
        return np.where(floored[:, None], 0.0, -cfg.constant * grad)
    if np.any(unsat):
        raise UnsatisfiableError(
            f"WMC is zero for {int(unsat.sum())} row(s); the gradient of −log WMC is undefined"
        )
    return -cfg.constant * grad


def evaluate(circuit: Circuit, p: Sequence[float] | npt.ArrayLike) -> EvalTrace:
    """Linear-space node values and ∂WMC/∂v(node) for every node.

    Partials are reported as zero when the WMC itself is zero.
    """
    vec = check_probabilities(p, circuit.universe_size)
    log_values, log_grads = _single(circuit).trace(vec[None, :])
    total = float(np.exp(log_values[circuit.root]))
    # log_grads holds log ∂logW/∂v; scale by W to get ∂W/∂v.
    partials = np.exp(log_grads) * total
    return EvalTrace(np.exp(log_values), partials, total)


# ---------------------------------------------------------------------------
# Batched API
# ---------------------------------------------------------------------------


def _as_plan(circuit_or_plan: Circuit | BatchPlan, rows: int) -> BatchPlan:
    if isinstance(circuit_or_plan, BatchPlan):
        return circuit_or_plan
    return BatchPlan([(circuit_or_plan, np.arange(rows))], num_rows=rows)


def wmc_batch(circuit: Circuit | BatchPlan, probs: npt.ArrayLike) -> FloatArray:
    arr = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    return np.exp(_as_plan(circuit, arr.shape[0]).log_wmc(arr))


def semantic_loss_batch(
    circuit: Circuit | BatchPlan,
    probs: npt.ArrayLike,
    cfg: LossConfig | None = None,
    *,
    floor: bool = False,
) -> FloatArray:
    cfg = cfg or LossConfig()
    arr = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    return _loss_from_log(_as_plan(circuit, arr.shape[0]).log_wmc(arr), cfg, floor)


def semantic_loss_grad_batch(
    circuit: Circuit | BatchPlan,
    probs: npt.ArrayLike,
    cfg: LossConfig | None = None,
    *,
    floor: bool = False,
) -> tuple[FloatArray, FloatArray]:
    """Per-row loss and gradient for a matrix of probability vectors."""
    cfg = cfg or LossConfig()
    arr = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    log_w, grad = _as_plan(circuit, arr.shape[0]).log_wmc_and_grad(arr)
    return _loss_from_log(log_w, cfg, floor), _loss_grad(log_w, grad, cfg, floor)


def wmc_reference(circuit: Circuit, p: Sequence[float] | npt.ArrayLike) -> float:
    """Plain linear-space node-by-node evaluation, for cross-checking."""
    vec = check_probabilities(p, circuit.universe_size)
    values: list[float] = []
    for node in circuit.nodes:
        if node.kind is NodeKind.LITERAL:
            q = float(vec[node.var - 1])
            values.append(q if node.positive else 1.0 - q)
        elif node.kind is NodeKind.CONSTANT:
            values.append(float(node.value))
        elif node.kind is NodeKind.PRODUCT:
            values.append(math.prod(values[c] for c in node.children))
        else:
            values.append(math.fsum(values[c] for c in node.children))
    return values[circuit.root]
