"""Unit tests for weighted model counting and the semantic loss."""

from __future__ import annotations

import math

import numpy as np
import pytest

from semantic_loss.circuit import Circuit, CircuitBuilder
from semantic_loss.compiler import compile_circuit
from semantic_loss.encoders import condition, exactly_one, state_circuit
from semantic_loss.engine import (
    BatchPlan,
    evaluate,
    log_wmc,
    semantic_loss,
    semantic_loss_batch,
    semantic_loss_grad,
    semantic_loss_grad_batch,
    wmc,
    wmc_batch,
    wmc_reference,
)
from semantic_loss.errors import DimensionError, ProbabilityError, UnsatisfiableError
from semantic_loss.logic import brute_force_wmc, parse_sexpr, random_cnf, random_formula, truth_table
from semantic_loss.models import LossConfig

HALF = [0.5, 0.5, 0.5]


def _finite_difference(c: Circuit, p: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.empty_like(p)
    for i in range(len(p)):
        up, down = p.copy(), p.copy()
        up[i] += h
        down[i] -= h
        out[i] = (semantic_loss(c, up) - semantic_loss(c, down)) / (2 * h)
    return out


# ---------------------------------------------------------------------------
# WMC
# ---------------------------------------------------------------------------

class TestWmc:
    def test_exactly_one_uniform(self, eo3: Circuit) -> None:
        assert wmc(eo3, HALF) == pytest.approx(0.375)

    def test_compiled_exactly_one_uniform(self, eo3_compiled: Circuit) -> None:
        assert wmc(eo3_compiled, HALF) == pytest.approx(0.375)

    def test_exactly_one_skewed(self, eo3: Circuit) -> None:
        assert wmc(eo3, [0.1, 0.7, 0.3]) == pytest.approx(0.543)

    def test_deterministic_vector(self, eo3: Circuit) -> None:
        assert wmc(eo3, [0.0, 1.0, 0.0]) == pytest.approx(1.0)
        assert wmc(eo3, [1.0, 1.0, 0.0]) == 0.0

    def test_log_space_matches(self, eo3: Circuit) -> None:
        assert log_wmc(eo3, HALF) == pytest.approx(math.log(0.375))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        f = random_cnf(rng, 7, 6)
        p = rng.random(7)
        c = compile_circuit(f)
        assert wmc(c, p) == pytest.approx(brute_force_wmc(f, p), abs=1e-12)
        assert wmc_reference(c, p) == pytest.approx(brute_force_wmc(f, p), abs=1e-12)

    def test_evidence(self, eo3: Circuit) -> None:
        conditioned = condition(eo3, {1: 1})
        assert wmc(conditioned, [0.3, 0.2, 0.4]) == pytest.approx(0.48)

    def test_contradicting_evidence(self, eo3: Circuit) -> None:
        conditioned = condition(eo3, {1: 1, 2: 1})
        assert wmc(conditioned, HALF) == 0.0
        assert semantic_loss(conditioned, HALF) == math.inf

    def test_wrong_length(self, eo3: Circuit) -> None:
        with pytest.raises(DimensionError):
            wmc(eo3, [0.5, 0.5])

    def test_out_of_range(self, eo3: Circuit) -> None:
        with pytest.raises(ProbabilityError):
            wmc(eo3, [0.5, -0.1, 0.5])

    def test_tiny_probabilities_stay_finite_in_log_space(self) -> None:
        c = exactly_one(200)
        p = np.full(200, 1e-300)
        p[0] = 1e-200
        assert math.isfinite(log_wmc(c, p))


# ---------------------------------------------------------------------------
# Semantic loss
# ---------------------------------------------------------------------------

class TestSemanticLoss:
    def test_exactly_one_uniform(self, eo3: Circuit) -> None:
        assert semantic_loss(eo3, HALF) == pytest.approx(0.98083, abs=1e-5)

    def test_state_circuit_is_cross_entropy(self) -> None:
        c = state_circuit([1, 0, 1])
        assert semantic_loss(c, [0.9, 0.2, 0.8]) == pytest.approx(0.55165, abs=1e-5)

    def test_satisfied_state_has_zero_loss(self, eo3: Circuit) -> None:
        assert semantic_loss(eo3, [0.0, 0.0, 1.0]) == pytest.approx(0.0, abs=1e-12)

    def test_scaling_constant(self, eo3: Circuit) -> None:
        scaled = semantic_loss(eo3, HALF, LossConfig(constant=2.0))
        assert scaled == pytest.approx(2 * semantic_loss(eo3, HALF))

    def test_unsatisfiable_is_infinite(self) -> None:
        b = CircuitBuilder()
        c = b.build(b.constant(0), 2)
        assert semantic_loss(c, [0.5, 0.5]) == math.inf

    def test_floor(self) -> None:
        b = CircuitBuilder()
        c = b.build(b.constant(0), 2)
        cfg = LossConfig(epsilon=1e-30)
        assert semantic_loss(c, [0.5, 0.5], cfg, floor=True) == pytest.approx(-math.log(1e-30))


class TestSemanticLossGrad:
    def test_exactly_one_uniform(self, eo3: Circuit) -> None:
        assert semantic_loss_grad(eo3, HALF) == pytest.approx([2 / 3, 2 / 3, 2 / 3])

    def test_matches_finite_differences(self, eo3: Circuit) -> None:
        p = np.array([0.1, 0.7, 0.3])
        assert semantic_loss_grad(eo3, p) == pytest.approx(_finite_difference(eo3, p), rel=1e-5)

    @pytest.mark.parametrize("seed", range(100))
    def test_compiled_matches_finite_differences(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        f = random_formula(rng, n, depth=3)
        while not truth_table(f).any():
            f = random_formula(rng, n, depth=3)
        c = compile_circuit(f)
        p = rng.uniform(0.05, 0.95, size=n)
        assert semantic_loss_grad(c, p) == pytest.approx(_finite_difference(c, p), rel=1e-5, abs=1e-8)

    def test_state_circuit_gradient(self) -> None:
        p = np.array([0.9, 0.2, 0.8])
        expected = [-1 / 0.9, 1 / 0.8, -1 / 0.8]
        assert semantic_loss_grad(state_circuit([1, 0, 1]), p) == pytest.approx(expected)

    def test_unused_variable_has_zero_gradient(self) -> None:
        c = compile_circuit(parse_sexpr("(or x1 x2)", universe_size=3))
        assert semantic_loss_grad(c, HALF)[2] == 0.0

    def test_unsatisfiable_raises(self) -> None:
        b = CircuitBuilder()
        c = b.build(b.constant(0), 1)
        with pytest.raises(UnsatisfiableError):
            semantic_loss_grad(c, [0.5])

    def test_floor_gives_zero_gradient(self) -> None:
        b = CircuitBuilder()
        c = b.build(b.constant(0), 1)
        assert semantic_loss_grad(c, [0.5], floor=True).tolist() == [0.0]

    def test_floor_keeps_gradient_of_satisfiable_rows(self, eo3: Circuit) -> None:
        assert semantic_loss_grad(eo3, HALF, floor=True) == pytest.approx([2 / 3] * 3)


class TestEvaluate:
    def test_root_partial_is_one(self, eo3: Circuit) -> None:
        trace = evaluate(eo3, HALF)
        assert trace.wmc == pytest.approx(0.375)
        assert trace.values[eo3.root] == pytest.approx(0.375)
        assert trace.partials[eo3.root] == pytest.approx(1.0)

    def test_leaf_partials_give_derivative(self, eo3: Circuit) -> None:
        trace = evaluate(eo3, HALF)
        pos = [i for i, n in enumerate(eo3.nodes) if n.kind == "literal" and n.var == 1 and n.positive]
        neg = [i for i, n in enumerate(eo3.nodes) if n.kind == "literal" and n.var == 1 and not n.positive]
        # ∂W/∂p1 = Σ partial(x1) − Σ partial(¬x1) = 0.25 − 0.5
        derivative = sum(trace.partials[i] for i in pos) - sum(trace.partials[i] for i in neg)
        assert derivative == pytest.approx(-0.25)


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------

class TestBatch:
    def test_rows_match_single_calls(self, eo3: Circuit, rng: np.random.Generator) -> None:
        probs = rng.random((6, 3))
        batch = wmc_batch(eo3, probs)
        assert batch == pytest.approx([wmc(eo3, row) for row in probs])

    def test_loss_and_grad_rows(self, eo3: Circuit, rng: np.random.Generator) -> None:
        probs = rng.uniform(0.1, 0.9, (4, 3))
        loss, grad = semantic_loss_grad_batch(eo3, probs)
        assert loss == pytest.approx(semantic_loss_batch(eo3, probs))
        for row, g in zip(probs, grad, strict=True):
            assert g == pytest.approx(semantic_loss_grad(eo3, row))

    def test_grouped_circuits(self, eo3: Circuit) -> None:
        first = condition(eo3, {1: 1})
        second = condition(eo3, {1: 0})
        plan = BatchPlan([(first, [0, 2]), (second, [1])])
        probs = np.array([[0.3, 0.2, 0.4], [0.3, 0.2, 0.4], [0.3, 0.5, 0.5]])
        values = wmc_batch(plan, probs)
        # x1 = 0 leaves exactly-one over x2, x3: 0.2·0.6 + 0.8·0.4
        assert values == pytest.approx([0.48, 0.44, 0.25])

    def test_plan_rejects_uncovered_rows(self, eo3: Circuit) -> None:
        with pytest.raises(ValueError, match="exactly one"):
            BatchPlan([(eo3, [0, 2])], num_rows=3)

    def test_plan_rejects_mixed_universes(self, eo3: Circuit) -> None:
        with pytest.raises(DimensionError):
            BatchPlan([(eo3, [0]), (exactly_one(2), [1])])

    def test_plan_checks_shape(self, eo3: Circuit) -> None:
        plan = BatchPlan([(eo3, [0, 1])])
        with pytest.raises(DimensionError):
            plan.log_wmc(np.full((3, 3), 0.5))

    def test_floored_rows(self, eo3: Circuit) -> None:
        probs = np.array([[1.0, 1.0, 0.0], [0.5, 0.5, 0.5]])
        loss, grad = semantic_loss_grad_batch(eo3, probs, floor=True)
        assert loss[0] == pytest.approx(-math.log(LossConfig().epsilon))
        assert grad[0].tolist() == [0.0, 0.0, 0.0]
        assert grad[1] == pytest.approx([2 / 3] * 3)

    def test_unfloored_batch_raises_on_unsat_row(self, eo3: Circuit) -> None:
        probs = np.array([[1.0, 1.0, 0.0], [0.5, 0.5, 0.5]])
        with pytest.raises(UnsatisfiableError, match="1 row"):
            semantic_loss_grad_batch(eo3, probs)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class TestOracles:
    def test_random_formulas_match_enumeration(self) -> None:
        rng = np.random.default_rng(2024)
        for _ in range(200):
            n = int(rng.integers(1, 11))
            f = random_formula(rng, n, depth=int(rng.integers(2, 5)))
            p = rng.random(n)
            assert wmc(compile_circuit(f), p) == pytest.approx(brute_force_wmc(f, p), abs=1e-9)

    @pytest.mark.parametrize("n", range(2, 11))
    def test_exactly_one_closed_form(self, n: int) -> None:
        rng = np.random.default_rng(n)
        c = exactly_one(n)
        for p in rng.uniform(0.01, 0.99, size=(50, n)):
            expected = -math.log(sum(p[i] * np.prod(np.delete(1 - p, i)) for i in range(n)))
            assert semantic_loss(c, p) == pytest.approx(expected, abs=1e-9)

    def test_conditioning_matches_clamped_probabilities(self) -> None:
        rng = np.random.default_rng(77)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            c = compile_circuit(random_formula(rng, n, depth=3))
            fixed = rng.choice(np.arange(1, n + 1), size=int(rng.integers(1, n + 1)), replace=False)
            evidence = {int(v): int(rng.integers(0, 2)) for v in fixed}
            p = rng.uniform(0.01, 0.99, size=n)
            clamped = p.copy()
            for v, bit in evidence.items():
                clamped[v - 1] = bit
            assert wmc(condition(c, evidence), p) == pytest.approx(wmc(c, clamped), abs=1e-12)

    def test_exactly_one_size_is_linear(self) -> None:
        ns = np.array([4, 8, 16, 32, 64])
        sizes = np.array([exactly_one(int(n)).size for n in ns])
        quadratic, slope, _ = np.polyfit(ns, sizes, 2)
        assert abs(quadratic) < 1e-6
        assert slope > 0
