"""Propositional formulas, states, constraint parsers and brute-force oracles.

Variables are 1-based integers. A :class:`Formula` pairs a node tree with an
explicitly declared universe size, so unmentioned variables still count
towards vector lengths and state enumeration.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import reduce
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from semantic_loss.errors import (
    DimacsError,
    DimensionError,
    FormulaSyntaxError,
    ProbabilityError,
    StateError,
    UniverseTooLargeError,
)

logger = logging.getLogger(__name__)

MAX_ENUMERATION_VARS = 24

VarId: TypeAlias = int
State: TypeAlias = tuple[int, ...]
ProbVector: TypeAlias = npt.NDArray[np.float64]


# ---------------------------------------------------------------------------
# Formula nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Const:
    value: bool


@dataclass(frozen=True, slots=True)
class Lit:
    """A variable or its negation."""

    var: VarId
    positive: bool = True

    def __post_init__(self) -> None:
        if self.var < 1:
            raise ValueError(f"Variable indices start at 1, got {self.var}")


@dataclass(frozen=True, slots=True)
class Not:
    child: Node


@dataclass(frozen=True, slots=True)
class And:
    children: tuple[Node, ...]

    def __post_init__(self) -> None:
        if not self.children:
            raise ValueError("Conjunction needs at least one child")


@dataclass(frozen=True, slots=True)
class Or:
    children: tuple[Node, ...]

    def __post_init__(self) -> None:
        if not self.children:
            raise ValueError("Disjunction needs at least one child")


Node: TypeAlias = Const | Lit | Not | And | Or

TRUE = Const(True)
FALSE = Const(False)


def var(index: VarId) -> Lit:
    return Lit(index, True)


def neg(node: Node) -> Node:
    return Not(node)


def conj(*children: Node) -> Node:
    """N-ary conjunction; the empty conjunction is the constant true."""
    return And(tuple(children)) if children else TRUE


def disj(*children: Node) -> Node:
    """N-ary disjunction; the empty disjunction is the constant false."""
    return Or(tuple(children)) if children else FALSE


def node_variables(node: Node) -> frozenset[VarId]:
    """Variables mentioned anywhere under ``node``."""
    found: set[VarId] = set()
    stack: list[Node] = [node]
    while stack:
        current = stack.pop()
        if isinstance(current, Lit):
            found.add(current.var)
        elif isinstance(current, Not):
            stack.append(current.child)
        elif isinstance(current, And | Or):
            stack.extend(current.children)
    return frozenset(found)


@dataclass(frozen=True)
class Formula:
    """A propositional sentence over the universe ``1..universe_size``."""

    root: Node
    universe_size: int
    variables: frozenset[VarId] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        mentioned = node_variables(self.root)
        object.__setattr__(self, "variables", mentioned)
        if self.universe_size < 0:
            raise ValueError("Universe size must be non-negative")
        if mentioned and max(mentioned) > self.universe_size:
            raise ValueError(
                f"Variable x{max(mentioned)} lies outside the declared universe "
                f"of {self.universe_size} variables"
            )

    @classmethod
    def of(cls, root: Node, universe_size: int | None = None) -> Formula:
        """Build a formula whose universe is at least its mentioned variables."""
        mentioned = node_variables(root)
        size = max(mentioned, default=0)
        if universe_size is not None:
            size = max(size, universe_size)
        return cls(root, size)

    def widen(self, universe_size: int) -> Formula:
        return Formula(self.root, max(self.universe_size, universe_size))

    def __invert__(self) -> Formula:
        return Formula(Not(self.root), self.universe_size)

    def __and__(self, other: Formula) -> Formula:
        return Formula(
            And((self.root, other.root)), max(self.universe_size, other.universe_size)
        )

    def __or__(self, other: Formula) -> Formula:
        return Formula(
            Or((self.root, other.root)), max(self.universe_size, other.universe_size)
        )


# ---------------------------------------------------------------------------
# Vectors and states
# ---------------------------------------------------------------------------


def check_probabilities(p: Sequence[float] | npt.ArrayLike, universe_size: int) -> ProbVector:
    """Validate and convert a probability vector for a universe of the given size."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != universe_size:
        raise DimensionError(
            f"Expected a probability vector of length {universe_size}, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ProbabilityError("Probability vector contains non-finite values")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        bad = int(np.flatnonzero((arr < 0.0) | (arr > 1.0))[0])
        raise ProbabilityError(f"p[{bad + 1}] = {arr[bad]!r} lies outside [0, 1]")
    return arr


def check_state(s: Sequence[int] | Mapping[VarId, int], universe_size: int) -> State:
    """Normalize a state given as a sequence or a VarId → {0,1} mapping."""
    if isinstance(s, Mapping):
        missing = [v for v in range(1, universe_size + 1) if v not in s]
        if missing:
            raise StateError(f"State is missing variable x{missing[0]}")
        extra = sorted(v for v in s if not 1 <= v <= universe_size)
        if extra:
            raise DimensionError(f"State assigns x{extra[0]} outside the universe of {universe_size}")
        values = [s[v] for v in range(1, universe_size + 1)]
    else:
        values = list(s)
        if len(values) < universe_size:
            raise StateError(
                f"State has {len(values)} values but the universe has {universe_size} variables"
            )
        if len(values) > universe_size:
            raise DimensionError(
                f"State has {len(values)} values but the universe has {universe_size} variables"
            )
    for i, v in enumerate(values, start=1):
        if v not in (0, 1):
            raise StateError(f"State value for x{i} must be 0 or 1, got {v!r}")
    return tuple(int(v) for v in values)


# ---------------------------------------------------------------------------
# Evaluation and brute-force oracles
# ---------------------------------------------------------------------------


def _eval(node: Node, s: State) -> bool:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Lit):
        return bool(s[node.var - 1]) == node.positive
    if isinstance(node, Not):
        return not _eval(node.child, s)
    if isinstance(node, And):
        return all(_eval(c, s) for c in node.children)
    return any(_eval(c, s) for c in node.children)


def eval_state(f: Formula, s: Sequence[int] | Mapping[VarId, int]) -> bool:
    """Standard Boolean semantics of ``f`` in the world ``s``."""
    return _eval(f.root, check_state(s, f.universe_size))


def _check_enumerable(n: int) -> None:
    if n > MAX_ENUMERATION_VARS:
        raise UniverseTooLargeError(
            f"Brute-force enumeration over {n} variables exceeds the limit of "
            f"{MAX_ENUMERATION_VARS}"
        )


def _state_columns(n: int) -> Callable[[VarId], npt.NDArray[np.bool_]]:
    index = np.arange(2**n, dtype=np.uint32)
    cache: dict[VarId, npt.NDArray[np.bool_]] = {}

    def column(v: VarId) -> npt.NDArray[np.bool_]:
        if v not in cache:
            cache[v] = ((index >> np.uint32(n - v)) & np.uint32(1)).astype(bool)
        return cache[v]

    return column


def truth_table(f: Formula, universe_size: int | None = None) -> npt.NDArray[np.bool_]:
    """Truth value of ``f`` in all 2^n states, X1 as the most significant bit.

    Row ``k`` is the state whose bits, read X1..Xn, spell ``k`` in binary, so
    rows are in lexicographic order.
    """
    n = f.universe_size if universe_size is None else max(universe_size, f.universe_size)
    _check_enumerable(n)
    column = _state_columns(n)
    size = 2**n

    def walk(node: Node) -> npt.NDArray[np.bool_]:
        if isinstance(node, Const):
            return np.full(size, node.value, dtype=bool)
        if isinstance(node, Lit):
            col = column(node.var)
            return col if node.positive else ~col
        if isinstance(node, Not):
            return ~walk(node.child)
        parts = (walk(c) for c in node.children)
        if isinstance(node, And):
            return reduce(np.logical_and, parts)
        return reduce(np.logical_or, parts)

    return walk(f.root)


def _index_to_state(k: int, n: int) -> State:
    return tuple((k >> (n - i)) & 1 for i in range(1, n + 1))


def enumerate_models(f: Formula) -> list[State]:
    """All satisfying states in lexicographic order."""
    table = truth_table(f)
    n = f.universe_size
    return [_index_to_state(int(k), n) for k in np.flatnonzero(table)]


def state_probabilities(p: ProbVector, n: int) -> npt.NDArray[np.float64]:
    """Probability of every state under independent Bernoulli(p_i) sampling."""
    _check_enumerable(n)
    column = _state_columns(n)
    probs = np.ones(2**n, dtype=np.float64)
    for v in range(1, n + 1):
        probs *= np.where(column(v), p[v - 1], 1.0 - p[v - 1])
    return probs


def brute_force_wmc(f: Formula, p: Sequence[float] | npt.ArrayLike) -> float:
    """Exact ∑_{x ⊨ f} ∏ p_i ∏ (1 − p_i) by enumerating every state."""
    probs = check_probabilities(p, f.universe_size)
    table = truth_table(f)
    return float(np.sum(state_probabilities(probs, f.universe_size)[table]))


def entails(alpha: Formula, beta: Formula) -> bool:
    """α ⊨ β, checked over the union of both universes."""
    n = max(alpha.universe_size, beta.universe_size)
    a = truth_table(alpha, n)
    b = truth_table(beta, n)
    return not bool(np.any(a & ~b))


def equivalent(alpha: Formula, beta: Formula) -> bool:
    n = max(alpha.universe_size, beta.universe_size)
    return bool(np.array_equal(truth_table(alpha, n), truth_table(beta, n)))


# ---------------------------------------------------------------------------
# Structural transformations
# ---------------------------------------------------------------------------


def map_literals(node: Node, fn: Callable[[Lit], Node]) -> Node:
    if isinstance(node, Lit):
        return fn(node)
    if isinstance(node, Const):
        return node
    if isinstance(node, Not):
        return Not(map_literals(node.child, fn))
    children = tuple(map_literals(c, fn) for c in node.children)
    return And(children) if isinstance(node, And) else Or(children)


def rename_variables(
    f: Formula, mapping: Mapping[VarId, VarId], universe_size: int | None = None
) -> Formula:
    """Replace every variable ``v`` by ``mapping[v]`` (identity when unmapped)."""
    root = map_literals(f.root, lambda lit: Lit(mapping.get(lit.var, lit.var), lit.positive))
    return Formula.of(root, universe_size if universe_size is not None else f.universe_size)


def permute_variables(f: Formula, perm: Sequence[VarId]) -> Formula:
    """π(α): ``perm[i-1]`` is the image of variable ``i``."""
    n = f.universe_size
    if sorted(perm) != list(range(1, n + 1)):
        raise ValueError(f"Not a permutation of 1..{n}: {list(perm)}")
    return rename_variables(f, {i + 1: v for i, v in enumerate(perm)}, n)


def negate_variables(f: Formula) -> Formula:
    """ᾱ: every variable replaced by its negation."""
    return Formula(map_literals(f.root, lambda lit: Lit(lit.var, not lit.positive)), f.universe_size)


def state_formula(x: Sequence[int]) -> Formula:
    """The sentence that enforces the state ``x``."""
    state = check_state(x, len(x))
    return Formula(conj(*(Lit(i, bool(b)) for i, b in enumerate(state, start=1))), len(state))


# ---------------------------------------------------------------------------
# DIMACS CNF
# ---------------------------------------------------------------------------

_HEADER_RE = re.compile(r"^p\s+cnf\s+(\d+)\s+(\d+)\s*$")


def parse_dimacs(text: str) -> Formula:
    """Parse DIMACS CNF into a conjunction of clauses.

    The header's variable count fixes the universe even when some variables
    never occur. Clauses may span lines; each must end with ``0``.
    """
    num_vars: int | None = None
    declared_clauses = 0
    clauses: list[Node] = []
    pending: list[Lit] = []
    pending_line = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            match = _HEADER_RE.match(line)
            if match is None or num_vars is not None:
                raise DimacsError(lineno, f"malformed header {line!r}")
            num_vars, declared_clauses = int(match.group(1)), int(match.group(2))
            continue
        if num_vars is None:
            raise DimacsError(lineno, "clause before 'p cnf' header")
        for token in line.split():
            try:
                value = int(token)
            except ValueError:
                raise DimacsError(lineno, f"invalid literal {token!r}") from None
            if value == 0:
                clauses.append(Or(tuple(pending)) if pending else FALSE)
                pending = []
                continue
            if abs(value) > num_vars:
                raise DimacsError(
                    lineno, f"literal {value} exceeds declared variable count {num_vars}"
                )
            if not pending:
                pending_line = lineno
            pending.append(Lit(abs(value), value > 0))

    if num_vars is None:
        raise DimacsError(1, "missing 'p cnf' header")
    if pending:
        raise DimacsError(pending_line, "clause is missing its terminating 0")
    if len(clauses) != declared_clauses:
        logger.warning(
            "DIMACS header declares %d clauses but %d were read", declared_clauses, len(clauses)
        )
    root: Node = And(tuple(clauses)) if clauses else TRUE
    return Formula(root, num_vars)


def to_dimacs(clauses: Sequence[Sequence[int]], num_vars: int) -> str:
    lines = [f"p cnf {num_vars} {len(clauses)}"]
    lines.extend(" ".join(str(lit) for lit in clause) + " 0" for clause in clauses)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# S-expressions
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")
_VAR_RE = re.compile(r"^x([1-9]\d*)$")


@dataclass(frozen=True, slots=True)
class _Token:
    text: str
    line: int
    column: int


def _tokenize(text: str) -> Iterator[_Token]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0]
        for match in _TOKEN_RE.finditer(line):
            yield _Token(match.group(0), lineno, match.start() + 1)


def parse_sexpr(text: str, universe_size: int | None = None) -> Formula:
    """Parse ``(and ...)``, ``(or ...)``, ``(not ...)``, ``x<k>``, ``true``, ``false``.

    ``;`` starts a comment. The universe is the larger of the highest mentioned
    index and ``universe_size``.
    """
    tokens = list(_tokenize(text))
    pos = 0

    def parse() -> Node:
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1]
            raise FormulaSyntaxError(last.line, "unexpected end of input", last.column + len(last.text))
        tok = tokens[pos]
        pos += 1
        if tok.text == ")":
            raise FormulaSyntaxError(tok.line, "unexpected ')'", tok.column)
        if tok.text != "(":
            if tok.text == "true":
                return TRUE
            if tok.text == "false":
                return FALSE
            match = _VAR_RE.match(tok.text)
            if match is None:
                raise FormulaSyntaxError(tok.line, f"unknown atom {tok.text!r}", tok.column)
            return Lit(int(match.group(1)))
        if pos >= len(tokens):
            raise FormulaSyntaxError(tok.line, "unexpected end of input after '('", tok.column)
        op = tokens[pos]
        pos += 1
        if op.text not in ("and", "or", "not"):
            raise FormulaSyntaxError(op.line, f"unknown operator {op.text!r}", op.column)
        children: list[Node] = []
        while True:
            if pos >= len(tokens):
                raise FormulaSyntaxError(op.line, f"unclosed '({op.text}'", op.column)
            if tokens[pos].text == ")":
                pos += 1
                break
            children.append(parse())
        if op.text == "not":
            if len(children) != 1:
                raise FormulaSyntaxError(op.line, "'not' takes exactly one argument", op.column)
            return Not(children[0])
        if not children:
            raise FormulaSyntaxError(op.line, f"'{op.text}' needs at least one argument", op.column)
        return And(tuple(children)) if op.text == "and" else Or(tuple(children))

    if not tokens:
        raise FormulaSyntaxError(1, "empty formula")
    root = parse()
    if pos != len(tokens):
        raise FormulaSyntaxError(tokens[pos].line, "trailing input after formula", tokens[pos].column)
    return Formula.of(root, universe_size)


def to_sexpr(f: Formula | Node) -> str:
    node = f.root if isinstance(f, Formula) else f
    if isinstance(node, Const):
        return "true" if node.value else "false"
    if isinstance(node, Lit):
        return f"x{node.var}" if node.positive else f"(not x{node.var})"
    if isinstance(node, Not):
        return f"(not {to_sexpr(node.child)})"
    op = "and" if isinstance(node, And) else "or"
    return f"({op} " + " ".join(to_sexpr(c) for c in node.children) + ")"


# ---------------------------------------------------------------------------
# Seeded generators
# ---------------------------------------------------------------------------


def random_formula(rng: np.random.Generator, num_vars: int, depth: int = 3) -> Formula:
    """A random formula tree over ``1..num_vars`` mixing all connectives."""

    def build(level: int) -> Node:
        roll = rng.random()
        if level == 0 or roll < 0.2:
            return Lit(int(rng.integers(1, num_vars + 1)), bool(rng.integers(0, 2)))
        if roll < 0.3:
            return Not(build(level - 1))
        arity = int(rng.integers(2, 4))
        children = tuple(build(level - 1) for _ in range(arity))
        return And(children) if roll < 0.65 else Or(children)

    return Formula(build(depth), num_vars)


def random_cnf(
    rng: np.random.Generator, num_vars: int, num_clauses: int, width: int = 3
) -> Formula:
    clauses: list[Node] = []
    for _ in range(num_clauses):
        size = min(width, num_vars)
        chosen = rng.choice(np.arange(1, num_vars + 1), size=size, replace=False)
        clauses.append(Or(tuple(Lit(int(v), bool(rng.integers(0, 2))) for v in chosen)))
    return Formula(conj(*clauses), num_vars)
