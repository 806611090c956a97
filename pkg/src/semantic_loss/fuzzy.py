"""Łukasiewicz t-norm relaxation of formulas and the exactly-one encoding comparison."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import NamedTuple

import numpy as np
import numpy.typing as npt

from semantic_loss.compiler import compile_circuit
from semantic_loss.encoders import exactly_one, exactly_one_cnf, exactly_one_dnf
from semantic_loss.engine import semantic_loss_batch
from semantic_loss.errors import DimensionError, ProbabilityError
from semantic_loss.logic import And, Const, Formula, Lit, Node, Not, Or
from semantic_loss.models import FuzzyColumnSummary, FuzzySummary

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class FuzzyNorm:
    """Łukasiewicz conjunction, disjunction and negation on arrays of truth values."""

    name: str = "lukasiewicz"

    def conj(self, a: FloatArray, b: FloatArray) -> FloatArray:
        return np.maximum(0.0, a + b - 1.0)

    def disj(self, a: FloatArray, b: FloatArray) -> FloatArray:
        return np.minimum(a + b, 1.0)

    def neg(self, a: FloatArray) -> FloatArray:
        return 1.0 - a


LUKASIEWICZ = FuzzyNorm()


def fuzzy_eval(
    f: Formula, p: npt.ArrayLike, norm: FuzzyNorm = LUKASIEWICZ
) -> float | FloatArray:
    """Soft truth value of ``f``; ``p`` is one vector or a (samples, n) matrix.

    N-ary connectives fold left to right.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] != f.universe_size:
        raise DimensionError(
            f"Expected truth values with trailing dimension {f.universe_size}, got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ProbabilityError("Fuzzy truth values must lie in [0, 1]")
    batch = arr.shape[:-1]

    def walk(node: Node) -> FloatArray:
        if isinstance(node, Const):
            return np.full(batch, 1.0 if node.value else 0.0)
        if isinstance(node, Lit):
            value = arr[..., node.var - 1]
            return value if node.positive else norm.neg(value)
        if isinstance(node, Not):
            return norm.neg(walk(node.child))
        op = norm.conj if isinstance(node, And) else norm.disj
        assert isinstance(node, And | Or)
        return reduce(op, (walk(c) for c in node.children))

    out = walk(f.root)
    return float(out) if arr.ndim == 1 else out


# ---------------------------------------------------------------------------
# Encoding comparison
# ---------------------------------------------------------------------------


class ComparisonRow(NamedTuple):
    sample_id: int
    distribution: str
    encoding1: float
    encoding2: float
    semantic_loss: float


@dataclass
class EncodingComparison:
    rows: list[ComparisonRow] = field(default_factory=list)
    summaries: list[FuzzySummary] = field(default_factory=list)


def _column(values: FloatArray) -> FuzzyColumnSummary:
    return FuzzyColumnSummary(
        mean=float(np.mean(values)),
        std=float(np.std(values)),
        min=float(np.min(values)),
        max=float(np.max(values)),
    )


def _sample(rng: np.random.Generator, distribution: str, samples: int, n: int) -> FloatArray:
    if distribution == "uniform":
        return rng.uniform(0.0, 1.0, size=(samples, n))
    logits = rng.normal(0.0, 1.0, size=(samples, n))
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def compare_encodings(n: int, samples: int, seed: int = 0) -> EncodingComparison:
    """Fuzzy values of the one-hot DNF and the clause encoding of exactly-one, next to
    the semantic loss, on uniform samples and on softmax outputs of Gaussian logits."""
    if n < 2:
        raise ValueError("The encoding comparison needs n ≥ 2")
    enc1, enc2 = exactly_one_dnf(n), exactly_one_cnf(n)
    direct = exactly_one(n)
    via1, via2 = compile_circuit(enc1), compile_circuit(enc2)
    rng = np.random.default_rng(seed)
    result = EncodingComparison()
    next_id = 0
    for distribution in ("uniform", "softmax"):
        p = _sample(rng, distribution, samples, n)
        f1 = np.asarray(fuzzy_eval(enc1, p))
        f2 = np.asarray(fuzzy_eval(enc2, p))
        sl = semantic_loss_batch(direct, p)
        gap = np.max(
            np.abs(semantic_loss_batch(via1, p) - semantic_loss_batch(via2, p)), initial=0.0
        )
        for k in range(samples):
            result.rows.append(
                ComparisonRow(next_id, distribution, float(f1[k]), float(f2[k]), float(sl[k]))
            )
            next_id += 1
        summary = FuzzySummary(
            n=n,
            samples=samples,
            distribution=distribution,
            encoding1=_column(f1),
            encoding2=_column(f2),
            semantic_loss=_column(sl),
            differing_fraction=float(np.mean(np.abs(f1 - f2) > 1e-12)),
            semantic_max_gap=float(gap),
        )
        logger.info(
            "Fuzzy %s: encoding means %.4f / %.4f, %.1f%% of samples differ",
            distribution,
            summary.encoding1.mean,
            summary.encoding2.mean,
            100 * summary.differing_fraction,
        )
        result.summaries.append(summary)
    return result
