"""Seeded property checks of the semantic loss axioms and propositions.

Each check samples formulas and probability vectors, compiles the formulas
and compares semantic loss values. Failures become report entries; nothing
here raises on a violated property.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np

from semantic_loss.compiler import compile_circuit
from semantic_loss.encoders import exactly_one, exactly_one_cnf, state_circuit
from semantic_loss.engine import semantic_loss
from semantic_loss.logic import (
    TRUE,
    Formula,
    Lit,
    Not,
    conj,
    disj,
    enumerate_models,
    negate_variables,
    permute_variables,
    random_formula,
    rename_variables,
)
from semantic_loss.models import AxiomCheck, AxiomReport

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9
MONOTONE_SLACK = 1e-12


def loss_of(f: Formula, p: np.ndarray) -> float:
    return semantic_loss(compile_circuit(f), p)


def _gap(a: float, b: float) -> float:
    if math.isinf(a) or math.isinf(b):
        return 0.0 if a == b else math.inf
    return abs(a - b)


class _Check:
    """Accumulates the largest deviation seen for one property."""

    def __init__(self, name: str, instances: int) -> None:
        self.name = name
        self.instances = instances
        self.failures = 0
        self.max_error = 0.0
        self.first_failure = ""

    def record(self, error: float, tolerance: float, context: str) -> None:
        if not math.isnan(error):
            self.max_error = max(self.max_error, error)
        if math.isnan(error) or error > tolerance:
            self.failures += 1
            if not self.first_failure:
                self.first_failure = context

    def result(self) -> AxiomCheck:
        return AxiomCheck(
            name=self.name,
            instances=self.instances,
            failures=self.failures,
            max_error=self.max_error,
            detail=self.first_failure,
        )


def _probs(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.uniform(0.01, 0.99, size=n)


def _satisfiable_formula(rng: np.random.Generator, n: int) -> Formula:
    while True:
        f = random_formula(rng, n, depth=3)
        if enumerate_models(f):
            return f


# ---------------------------------------------------------------------------
# Individual checks
# ---------------------------------------------------------------------------


def check_truth(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("truth", instances)
    for k in range(instances):
        n = int(rng.integers(1, 8))
        loss = loss_of(Formula(TRUE, n), _probs(rng, n))
        check.record(abs(loss), 0.0, f"instance {k}: loss {loss!r}")
    return check.result()


def check_non_negativity(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("non_negativity", instances)
    for k in range(instances):
        n = int(rng.integers(1, 8))
        loss = loss_of(random_formula(rng, n), _probs(rng, n))
        check.record(max(0.0, -loss), 0.0, f"instance {k}: loss {loss!r}")
    return check.result()


def check_additive_independence(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("additive_independence", instances)
    for k in range(instances):
        a, b = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        alpha = random_formula(rng, a)
        beta_local = random_formula(rng, b)
        beta = rename_variables(beta_local, {v: v + a for v in range(1, b + 1)}, a + b)
        p, q = _probs(rng, a), _probs(rng, b)
        joint = loss_of(alpha.widen(a + b) & beta, np.concatenate([p, q]))
        split = loss_of(alpha, p) + loss_of(beta_local, q)
        check.record(_gap(joint, split), TOLERANCE, f"instance {k}: {joint!r} vs {split!r}")
    return check.result()


def check_locality(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("locality", instances)
    for k in range(instances):
        a, b = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        alpha = random_formula(rng, a)
        p, q = _probs(rng, a), _probs(rng, b)
        wide = loss_of(alpha.widen(a + b), np.concatenate([p, q]))
        narrow = loss_of(alpha, p)
        check.record(_gap(wide, narrow), TOLERANCE, f"instance {k}: {wide!r} vs {narrow!r}")
    return check.result()


def check_monotonicity(rng: np.random.Generator, instances: int) -> AxiomCheck:
    """α = β ∧ γ entails β, so its loss is at least β's."""
    check = _Check("monotonicity", instances)
    for k in range(instances):
        n = int(rng.integers(2, 8))
        beta, gamma = random_formula(rng, n), random_formula(rng, n)
        p = _probs(rng, n)
        strong, weak = loss_of(beta & gamma, p), loss_of(beta, p)
        rise = max(0.0, weak - strong)
        check.record(rise, MONOTONE_SLACK, f"instance {k}: {strong!r} < {weak!r}")
    return check.result()


def check_identity(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("identity", instances)
    for k in range(instances):
        n = int(rng.integers(1, 12))
        x = rng.integers(0, 2, size=n)
        loss = semantic_loss(state_circuit(x.tolist()), x.astype(np.float64))
        check.record(abs(loss), 0.0, f"instance {k}: loss {loss!r}")
    return check.result()


def check_satisfaction(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("satisfaction", instances)
    for k in range(instances):
        n = int(rng.integers(1, 8))
        f = _satisfiable_formula(rng, n)
        models = enumerate_models(f)
        x = models[int(rng.integers(0, len(models)))]
        loss = loss_of(f, np.asarray(x, dtype=np.float64))
        check.record(abs(loss), 0.0, f"instance {k}: loss {loss!r}")
    return check.result()


def check_label_literal(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("label_literal", instances)
    for k in range(instances):
        p = float(rng.uniform(0.001, 0.999))
        pos = loss_of(Formula(Lit(1), 1), np.array([p]))
        negl = loss_of(Formula(Lit(1, False), 1), np.array([p]))
        err = max(abs(pos + math.log(p)), abs(negl + math.log1p(-p)))
        check.record(err, TOLERANCE, f"instance {k}: p={p!r}")
    return check.result()


def check_value_symmetry(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("value_symmetry", instances)
    for k in range(instances):
        n = int(rng.integers(1, 8))
        f, p = random_formula(rng, n), _probs(rng, n)
        a, b = loss_of(f, p), loss_of(negate_variables(f), 1.0 - p)
        check.record(_gap(a, b), TOLERANCE, f"instance {k}: {a!r} vs {b!r}")
    return check.result()


def check_variable_symmetry(rng: np.random.Generator, instances: int) -> AxiomCheck:
    check = _Check("variable_symmetry", instances)
    for k in range(instances):
        n = int(rng.integers(2, 8))
        f, p = random_formula(rng, n), _probs(rng, n)
        perm = (rng.permutation(n) + 1).tolist()
        moved = np.empty(n)
        moved[np.asarray(perm) - 1] = p
        a, b = loss_of(f, p), loss_of(permute_variables(f, perm), moved)
        check.record(_gap(a, b), TOLERANCE, f"instance {k}: {a!r} vs {b!r}")
    return check.result()


def check_semantic_equivalence(rng: np.random.Generator, instances: int) -> AxiomCheck:
    """Equivalent sentences written differently get the same loss."""
    check = _Check("semantic_equivalence", instances)
    for k in range(instances):
        n = int(rng.integers(1, 9))
        p = _probs(rng, n)
        direct = semantic_loss(exactly_one(n), p)
        clauses = loss_of(exactly_one_cnf(n), p)
        f = random_formula(rng, n)
        plain = loss_of(f, p)
        doubled = loss_of(Formula(Not(Not(f.root)), n), p)
        err = max(_gap(direct, clauses), _gap(plain, doubled))
        check.record(err, TOLERANCE, f"instance {k}: n={n}")
    return check.result()


def check_monotone_sweep(rng: np.random.Generator, instances: int) -> AxiomCheck:
    """Raising p_i never increases the loss when X_i only occurs positively."""
    check = _Check("monotone_sweep", instances)
    grid = np.linspace(0.05, 0.95, 10)
    for k in range(instances):
        n = int(rng.integers(1, 7))
        clauses = []
        for _ in range(int(rng.integers(1, 4))):
            chosen = rng.choice(np.arange(1, n + 1), size=min(2, n), replace=False)
            clauses.append(disj(*(Lit(int(v)) for v in chosen)))
        circuit = compile_circuit(Formula(conj(*clauses), n))
        p = _probs(rng, n)
        i = int(rng.integers(0, n))
        losses = []
        for value in grid:
            p[i] = value
            losses.append(semantic_loss(circuit, p))
        rise = max((b - a for a, b in zip(losses, losses[1:], strict=False)), default=0.0)
        check.record(max(0.0, rise), MONOTONE_SLACK, f"instance {k}: variable x{i + 1}")
    return check.result()


CHECKS: tuple[Callable[[np.random.Generator, int], AxiomCheck], ...] = (
    check_truth,
    check_non_negativity,
    check_additive_independence,
    check_locality,
    check_monotonicity,
    check_identity,
    check_satisfaction,
    check_label_literal,
    check_value_symmetry,
    check_variable_symmetry,
    check_semantic_equivalence,
    check_monotone_sweep,
)


def run_axiom_suite(seed: int = 0, instances: int = 100) -> AxiomReport:
    """Run every check on its own child generator derived from ``seed``."""
    streams = np.random.SeedSequence(seed).spawn(len(CHECKS))
    report = AxiomReport(seed=seed)
    for fn, stream in zip(CHECKS, streams, strict=True):
        result = fn(np.random.default_rng(stream), instances)
        logger.info(
            "Axiom %-22s %s (%d/%d failures, max error %.3g)",
            result.name,
            "ok" if result.passed else "FAILED",
            result.failures,
            result.instances,
            result.max_error,
        )
        report.checks.append(result)
    return report
