"""Tests for the seeded axiom suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from semantic_loss.axioms import CHECKS, check_label_literal, check_monotonicity, loss_of, run_axiom_suite
from semantic_loss.logic import Formula, Lit, conj
from semantic_loss.models import AxiomReport


@pytest.fixture(scope="module")
def report() -> AxiomReport:
    return run_axiom_suite(seed=7, instances=100)


class TestAxiomSuite:
    def test_every_check_passes(self, report: AxiomReport) -> None:
        failed = [(c.name, c.detail) for c in report.checks if not c.passed]
        assert failed == []
        assert report.passed

    def test_one_entry_per_check(self, report: AxiomReport) -> None:
        assert len(report.checks) == len(CHECKS)
        assert len({c.name for c in report.checks}) == len(CHECKS)
        assert all(c.instances == 100 for c in report.checks)

    def test_seeded(self) -> None:
        a = run_axiom_suite(seed=3, instances=5)
        b = run_axiom_suite(seed=3, instances=5)
        assert a.model_dump() == b.model_dump()


class TestIndividualChecks:
    def test_label_literal(self) -> None:
        result = check_label_literal(np.random.default_rng(0), 50)
        assert result.passed
        assert result.max_error < 1e-9

    def test_monotonicity(self) -> None:
        assert check_monotonicity(np.random.default_rng(1), 30).passed

    def test_loss_of_contradiction(self) -> None:
        f = Formula(conj(Lit(1), Lit(1, False)), 1)
        assert loss_of(f, np.array([0.5])) == math.inf
