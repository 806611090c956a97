"""Shared test fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from semantic_loss.circuit import Circuit
from semantic_loss.compiler import BddManager, BddRef, compile_circuit
from semantic_loss.encoders import GridSpec, exactly_one, grid_path_bdd
from semantic_loss.logic import Formula, parse_dimacs

EXACTLY_ONE_3_DIMACS = "p cnf 3 4\n1 2 3 0\n-1 -2 0\n-1 -3 0\n-2 -3 0\n"

SUSHI_HEADER_SOC = """\
# FILE NAME: 00014-00000001.soc
# TITLE: Sushi Data
# DATA TYPE: soc
# NUMBER ALTERNATIVES: 10
# NUMBER VOTERS: 3
# NUMBER UNIQUE ORDERS: 2
2: 1,2,3,4,5,6,7,8,9,10
1: 10,9,8,7,6,5,4,3,2,1
"""

SUSHI_LEGACY_SOC = "10\n" + "".join(f"{i},sushi{i}\n" for i in range(1, 11)) + (
    "3,3,2\n"
    "2,1,2,3,4,5,6,7,8,9,10\n"
    "1,10,9,8,7,6,5,4,3,2,1\n"
)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture()
def eo3_formula() -> Formula:
    return parse_dimacs(EXACTLY_ONE_3_DIMACS)


@pytest.fixture()
def eo3() -> Circuit:
    return exactly_one(3)


@pytest.fixture()
def eo3_compiled(eo3_formula: Formula) -> Circuit:
    return compile_circuit(eo3_formula)


@pytest.fixture(scope="session")
def grid3() -> GridSpec:
    return GridSpec(3, 3)


@pytest.fixture(scope="session")
def grid3_bdd(grid3: GridSpec) -> tuple[BddManager, BddRef]:
    return grid_path_bdd(grid3)


@pytest.fixture(scope="session")
def grid4_bdd() -> tuple[BddManager, BddRef]:
    return grid_path_bdd(GridSpec(4, 4))


@pytest.fixture(params=[SUSHI_HEADER_SOC, SUSHI_LEGACY_SOC], ids=["header", "legacy"])
def sushi_soc(request: pytest.FixtureRequest) -> str:
    return request.param


@pytest.fixture()
def sushi_header_soc() -> str:
    return SUSHI_HEADER_SOC
