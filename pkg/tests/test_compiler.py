"""Unit tests for the BDD manager and BDD-to-circuit compilation."""

from __future__ import annotations

import numpy as np
import pytest

from semantic_loss.circuit import (
    Circuit,
    CircuitBuilder,
    count_models,
    evaluate_state,
    is_decomposable,
)
from semantic_loss.compiler import (
    FALSE_REF,
    TRUE_REF,
    BddManager,
    BddOp,
    bdd_apply,
    compile_circuit,
    compile_formula,
    determinism_violations,
    is_deterministic,
    model_count,
    to_circuit,
    variable_order,
)
from semantic_loss.errors import CompilationBlowup, UniverseTooLargeError
from semantic_loss.logic import (
    TRUE,
    Formula,
    enumerate_models,
    parse_sexpr,
    random_cnf,
    random_formula,
    truth_table,
)


# ---------------------------------------------------------------------------
# Manager
# ---------------------------------------------------------------------------

class TestBddManager:
    def test_contradiction_is_false(self) -> None:
        mgr = BddManager([1])
        x = mgr.literal(1)
        assert mgr.apply(BddOp.AND, x, mgr.literal(1, False)) == FALSE_REF

    def test_tautology_is_true(self) -> None:
        mgr = BddManager([1])
        assert mgr.apply(BddOp.OR, mgr.literal(1), mgr.literal(1, False)) == TRUE_REF

    def test_or_with_false_returns_operand(self) -> None:
        mgr = BddManager([1])
        x = mgr.literal(1)
        assert bdd_apply(mgr, "or", x, FALSE_REF) == x

    def test_nodes_are_unique(self) -> None:
        mgr = BddManager([1, 2])
        a = mgr.apply(BddOp.AND, mgr.literal(1), mgr.literal(2))
        b = mgr.apply(BddOp.AND, mgr.literal(2), mgr.literal(1))
        assert a == b

    def test_redundant_node_collapses(self) -> None:
        mgr = BddManager([1])
        assert mgr.make_node(1, TRUE_REF, TRUE_REF) == TRUE_REF

    def test_order_violation(self) -> None:
        mgr = BddManager([1, 2])
        x1 = mgr.literal(1)
        with pytest.raises(ValueError, match="variable order"):
            mgr.make_node(2, x1, TRUE_REF)

    def test_duplicate_order_rejected(self) -> None:
        with pytest.raises(ValueError):
            BddManager([1, 1])

    def test_negate(self) -> None:
        mgr = BddManager([1])
        assert mgr.negate(mgr.literal(1)) == mgr.literal(1, False)

    def test_xor_models(self) -> None:
        mgr = BddManager([1, 2])
        ref = mgr.apply(BddOp.XOR, mgr.literal(1), mgr.literal(2))
        assert sorted(mgr.iter_models(ref)) == [(0, 1), (1, 0)]

    def test_cube(self) -> None:
        mgr = BddManager([1, 2, 3])
        ref = mgr.cube({1: 1, 3: 0})
        assert mgr.model_count(ref) == 2
        assert mgr.evaluate(ref, [1, 0, 0])
        assert not mgr.evaluate(ref, [1, 0, 1])

    def test_restrict(self) -> None:
        mgr, root = compile_formula(parse_sexpr("(or (and x1 x2) x3)"))
        assert mgr.restrict(root, {3: 1}) == TRUE_REF
        assert mgr.restrict(root, {1: 0, 3: 0}) == FALSE_REF
        assert mgr.restrict(root, {3: 0}) == mgr.apply(BddOp.AND, mgr.literal(1), mgr.literal(2))

    def test_node_cap(self) -> None:
        with pytest.raises(CompilationBlowup, match="cap"):
            compile_formula(random_cnf(np.random.default_rng(0), 10, 20), node_cap=5)

    def test_cache_is_used(self) -> None:
        mgr, _ = compile_formula(parse_sexpr("(and (or x1 x2) (or x1 x2) (or x1 x2))"))
        assert mgr.cache_hits > 0
        assert mgr.cache_size > 0


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

class TestCompileFormula:
    def test_exactly_one_models(self, eo3_formula: Formula) -> None:
        mgr, root = compile_formula(eo3_formula)
        assert model_count(mgr, root) == 3
        assert list(mgr.iter_models(root, 3)) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]

    def test_true_formula(self) -> None:
        mgr, root = compile_formula(Formula(TRUE, 3))
        assert root == TRUE_REF
        assert model_count(mgr, root) == 8

    def test_unmentioned_variable_doubles_count(self) -> None:
        mgr, root = compile_formula(parse_sexpr("x1", universe_size=2))
        assert model_count(mgr, root) == 2
        assert model_count(mgr, root, 5) == 16

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_random_cnf_count_matches_enumeration(self, seed: int) -> None:
        f = random_cnf(np.random.default_rng(seed), 8, 12)
        mgr, root = compile_formula(f)
        assert model_count(mgr, root) == len(enumerate_models(f))

    @pytest.mark.parametrize("seed", [10, 11, 12])
    def test_random_formula_truth_table(self, seed: int) -> None:
        f = random_formula(np.random.default_rng(seed), 5, depth=4)
        mgr, root = compile_formula(f)
        table = truth_table(f)
        states = [tuple(int(b) for b in np.binary_repr(i, 5)) for i in range(32)]
        assert [mgr.evaluate(root, s) for s in states] == table.tolist()

    def test_order_is_canonical(self) -> None:
        f = parse_sexpr("(or (and x1 x2) (and x1 x3))")
        g = parse_sexpr("(and x1 (or x3 x2))")
        mgr, a = compile_formula(f)
        b = mgr.compile(g.root)
        assert a == b

    def test_custom_order(self) -> None:
        f = parse_sexpr("(and x1 x3)", universe_size=3)
        mgr, root = compile_formula(f, [3, 2, 1])
        assert mgr.var(root) == 3
        assert model_count(mgr, root) == 2

    def test_bad_order(self) -> None:
        with pytest.raises(ValueError, match="permutation"):
            compile_formula(parse_sexpr("(and x1 x2)"), [1])


class TestVariableOrder:
    def test_natural(self) -> None:
        assert variable_order(parse_sexpr("(and x3 x1)", 4)) == [1, 2, 3, 4]

    def test_first_occurrence(self) -> None:
        order = variable_order(parse_sexpr("(and x3 (or x1 x3))", 4), "first-occurrence")
        assert order == [3, 1, 2, 4]

    def test_unknown_strategy(self) -> None:
        with pytest.raises(ValueError):
            variable_order(parse_sexpr("x1"), "random")  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Circuits
# ---------------------------------------------------------------------------

class TestToCircuit:
    def test_compiled_circuit_counts_models(self, eo3_compiled: Circuit) -> None:
        assert count_models(eo3_compiled) == 3

    def test_compiled_circuit_properties(self, eo3_compiled: Circuit) -> None:
        assert is_decomposable(eo3_compiled)
        assert is_deterministic(eo3_compiled)

    def test_semantics_preserved(self, rng: np.random.Generator) -> None:
        f = random_cnf(rng, 6, 8)
        c = compile_circuit(f)
        table = truth_table(f)
        for i in range(64):
            state = [int(b) for b in np.binary_repr(i, 6)]
            assert evaluate_state(c, state) == bool(table[i])

    def test_terminal_roots(self) -> None:
        mgr = BddManager([1, 2])
        false_c = to_circuit(mgr, FALSE_REF, 2)
        true_c = to_circuit(mgr, TRUE_REF, 2)
        assert count_models(false_c) == 0
        assert count_models(true_c) == 4

    def test_decision_node_shape(self) -> None:
        mgr = BddManager([1])
        c = to_circuit(mgr, mgr.literal(1), 1)
        root = c.nodes[c.root]
        assert root.kind == "sum"
        assert len(root.children) == 2
        assert all(c.nodes[k].kind == "product" for k in root.children)


class TestDeterminism:
    def test_overlapping_sum(self) -> None:
        b = CircuitBuilder()
        root = b.sum((b.literal(1), b.literal(2)))
        c = b.build(root, 2)
        assert determinism_violations(c) == [c.root]
        assert not is_deterministic(c)

    def test_exactly_one_chain(self, eo3: Circuit) -> None:
        assert is_deterministic(eo3)

    def test_size_limit(self) -> None:
        b = CircuitBuilder()
        c = b.build(b.literal(1), 13)
        with pytest.raises(UniverseTooLargeError):
            determinism_violations(c)
