"""Formula → reduced ordered BDD → deterministic, decomposable circuit."""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterator, Mapping, Sequence
from enum import StrEnum
from typing import Literal, TypeAlias

from semantic_loss.circuit import Circuit, CircuitBuilder, NodeKind
from semantic_loss.errors import CompilationBlowup, UniverseTooLargeError
from semantic_loss.logic import And, Const, Formula, Lit, Node, Not, Or, State, VarId

logger = logging.getLogger(__name__)

BddRef: TypeAlias = int
OrderStrategy: TypeAlias = Literal["natural", "first-occurrence"]

FALSE_REF: BddRef = 0
TRUE_REF: BddRef = 1
DEFAULT_NODE_CAP = 10_000_000
MAX_DETERMINISM_CHECK_VARS = 12


class BddOp(StrEnum):
    AND = "and"
    OR = "or"
    XOR = "xor"


class BddManager:
    """Node table, unique table and apply cache for one variable order.

    Refs 0 and 1 are the false and true terminals; decision nodes start at 2.
    Levels grow from the root towards the terminals, which sit one level below
    the last variable.
    """

    def __init__(self, order: Sequence[VarId], node_cap: int = DEFAULT_NODE_CAP) -> None:
        if len(set(order)) != len(order) or any(v < 1 for v in order):
            raise ValueError(f"Variable order must list distinct positive indices: {list(order)}")
        self.order: tuple[VarId, ...] = tuple(order)
        self.node_cap = node_cap
        self._level_of_var = {v: i for i, v in enumerate(self.order)}
        bottom = len(self.order)
        self._var: list[VarId] = [0, 0]
        self._low: list[BddRef] = [FALSE_REF, TRUE_REF]
        self._high: list[BddRef] = [FALSE_REF, TRUE_REF]
        self._level: list[int] = [bottom, bottom]
        self._unique: dict[tuple[VarId, BddRef, BddRef], BddRef] = {}
        self._cache: dict[tuple[BddOp, BddRef, BddRef], BddRef] = {}
        self.cache_hits = 0

    # -- node table ---------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self._var)

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def is_terminal(self, ref: BddRef) -> bool:
        return ref < 2

    def var(self, ref: BddRef) -> VarId:
        return self._var[ref]

    def low(self, ref: BddRef) -> BddRef:
        return self._low[ref]

    def high(self, ref: BddRef) -> BddRef:
        return self._high[ref]

    def level(self, ref: BddRef) -> int:
        return self._level[ref]

    def make_node(self, var: VarId, low: BddRef, high: BddRef) -> BddRef:
        """The unique reduced node ``(var, low, high)``."""
        if low == high:
            return low
        key = (var, low, high)
        ref = self._unique.get(key)
        if ref is not None:
            return ref
        level = self._level_of_var[var]
        if level >= self._level[low] or level >= self._level[high]:
            raise ValueError(f"Node on x{var} would violate the variable order")
        if len(self._var) >= self.node_cap:
            raise CompilationBlowup(f"BDD node table exceeded the cap of {self.node_cap} nodes")
        ref = len(self._var)
        self._var.append(var)
        self._low.append(low)
        self._high.append(high)
        self._level.append(level)
        self._unique[key] = ref
        return ref

    def literal(self, var: VarId, positive: bool = True) -> BddRef:
        if var not in self._level_of_var:
            raise ValueError(f"Variable x{var} is not part of the variable order")
        return self.make_node(var, FALSE_REF, TRUE_REF) if positive else self.make_node(
            var, TRUE_REF, FALSE_REF
        )

    def cube(self, evidence: Mapping[VarId, int]) -> BddRef:
        """Conjunction of literals fixing ``evidence``."""
        ref = TRUE_REF
        for v in sorted(evidence, key=self._level_of_var.__getitem__, reverse=True):
            ref = (
                self.make_node(v, FALSE_REF, ref) if evidence[v] else self.make_node(v, ref, FALSE_REF)
            )
        return ref

    # -- apply --------------------------------------------------------------

    @staticmethod
    def _terminal_case(op: BddOp, a: BddRef, b: BddRef) -> BddRef | None:
        # Callers guarantee a <= b, so a terminal operand is always ``a``.
        if op is BddOp.AND:
            if a == FALSE_REF:
                return FALSE_REF
            if a == TRUE_REF or a == b:
                return b
        elif op is BddOp.OR:
            if a == TRUE_REF:
                return TRUE_REF
            if a == FALSE_REF or a == b:
                return b
        else:
            if a == b:
                return FALSE_REF
            if a == FALSE_REF:
                return b
            if a == TRUE_REF and b == TRUE_REF:
                return FALSE_REF
        return None

    def apply(self, op: BddOp, a: BddRef, b: BddRef) -> BddRef:
        if a > b:
            a, b = b, a
        done = self._terminal_case(op, a, b)
        if done is not None:
            return done
        key = (op, a, b)
        cached = self._cache.get(key)
        if cached is not None:
            self.cache_hits += 1
            return cached
        la, lb = self._level[a], self._level[b]
        top = min(la, lb)
        a0, a1 = (self._low[a], self._high[a]) if la == top else (a, a)
        b0, b1 = (self._low[b], self._high[b]) if lb == top else (b, b)
        ref = self.make_node(self.order[top], self.apply(op, a0, b0), self.apply(op, a1, b1))
        self._cache[key] = ref
        return ref

    def negate(self, a: BddRef) -> BddRef:
        return self.apply(BddOp.XOR, a, TRUE_REF)

    def compile(self, node: Node) -> BddRef:
        """Bottom-up apply over a formula tree."""
        if isinstance(node, Const):
            return TRUE_REF if node.value else FALSE_REF
        if isinstance(node, Lit):
            return self.literal(node.var, node.positive)
        if isinstance(node, Not):
            return self.negate(self.compile(node.child))
        if isinstance(node, And):
            acc = TRUE_REF
            for child in node.children:
                acc = self.apply(BddOp.AND, acc, self.compile(child))
                if acc == FALSE_REF:
                    break
            return acc
        assert isinstance(node, Or)
        acc = FALSE_REF
        for child in node.children:
            acc = self.apply(BddOp.OR, acc, self.compile(child))
            if acc == TRUE_REF:
                break
        return acc

    # -- queries ------------------------------------------------------------

    def restrict(self, root: BddRef, evidence: Mapping[VarId, int]) -> BddRef:
        """Cofactor of ``root`` with the evidence variables fixed."""
        memo: dict[BddRef, BddRef] = {}

        def walk(ref: BddRef) -> BddRef:
            if ref < 2:
                return ref
            hit = memo.get(ref)
            if hit is not None:
                return hit
            v = self._var[ref]
            if v in evidence:
                out = walk(self._high[ref] if evidence[v] else self._low[ref])
            else:
                out = self.make_node(v, walk(self._low[ref]), walk(self._high[ref]))
            memo[ref] = out
            return out

        return walk(root)

    def evaluate(self, root: BddRef, state: Sequence[int] | Mapping[VarId, int]) -> bool:
        """Follow one root-to-terminal walk under a total state."""
        ref = root
        while ref >= 2:
            v = self._var[ref]
            value = state[v] if isinstance(state, Mapping) else state[v - 1]
            ref = self._high[ref] if value else self._low[ref]
        return ref == TRUE_REF

    def model_count(self, root: BddRef, universe_size: int | None = None) -> int:
        """Exact number of models; variables outside the order are free."""
        n = len(self.order) if universe_size is None else universe_size
        if n < len(self.order):
            raise ValueError(f"Universe of {n} is smaller than the variable order")
        counts: dict[BddRef, int] = {FALSE_REF: 0, TRUE_REF: 1}

        def count(ref: BddRef) -> int:
            hit = counts.get(ref)
            if hit is not None:
                return hit
            level = self._level[ref]
            lo, hi = self._low[ref], self._high[ref]
            out = (count(lo) << (self._level[lo] - level - 1)) + (
                count(hi) << (self._level[hi] - level - 1)
            )
            counts[ref] = out
            return out

        return count(root) << (self._level[root] + n - len(self.order))

    def iter_models(self, root: BddRef, universe_size: int | None = None) -> Iterator[State]:
        """Every model as a state over ``1..universe_size``; order follows the levels."""
        n = universe_size if universe_size is not None else max(self.order, default=0)
        outside = [v for v in range(1, n + 1) if v not in self._level_of_var]
        depth = len(self.order)
        assignment: dict[VarId, int] = {}

        def walk(ref: BddRef, level: int) -> Iterator[dict[VarId, int]]:
            if ref == FALSE_REF:
                return
            if level == depth:
                yield assignment
                return
            v = self.order[level]
            if self._level[ref] == level:
                branches = ((0, self._low[ref]), (1, self._high[ref]))
            else:
                branches = ((0, ref), (1, ref))
            for value, child in branches:
                assignment[v] = value
                yield from walk(child, level + 1)

        for partial in walk(root, 0):
            for free in itertools.product((0, 1), repeat=len(outside)):
                full = dict(partial)
                full.update(zip(outside, free, strict=True))
                yield tuple(full.get(v, 0) for v in range(1, n + 1))

    def size(self, root: BddRef) -> int:
        """Decision nodes reachable from ``root``."""
        seen: set[BddRef] = set()
        stack = [root]
        while stack:
            ref = stack.pop()
            if ref < 2 or ref in seen:
                continue
            seen.add(ref)
            stack.extend((self._low[ref], self._high[ref]))
        return len(seen)


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------


def bdd_apply(mgr: BddManager, op: BddOp | str, a: BddRef, b: BddRef) -> BddRef:
    return mgr.apply(BddOp(op), a, b)


def variable_order(f: Formula, strategy: OrderStrategy = "natural") -> list[VarId]:
    """Natural index order, or variables by first occurrence in the formula tree."""
    natural = list(range(1, f.universe_size + 1))
    if strategy == "natural":
        return natural
    if strategy != "first-occurrence":
        raise ValueError(f"Unknown variable order strategy: {strategy!r}")
    seen: dict[VarId, None] = {}
    stack: list[Node] = [f.root]
    while stack:
        node = stack.pop()
        if isinstance(node, Lit):
            seen.setdefault(node.var, None)
        elif isinstance(node, Not):
            stack.append(node.child)
        elif isinstance(node, And | Or):
            stack.extend(reversed(node.children))
    order = list(seen)
    order.extend(v for v in natural if v not in seen)
    return order


def compile_formula(
    f: Formula,
    order: Sequence[VarId] | None = None,
    *,
    strategy: OrderStrategy = "natural",
    node_cap: int = DEFAULT_NODE_CAP,
) -> tuple[BddManager, BddRef]:
    """Compile ``f`` into a ROBDD that is canonical for the chosen order."""
    if order is None:
        order = variable_order(f, strategy)
    if sorted(order) != list(range(1, f.universe_size + 1)):
        raise ValueError(
            f"Variable order must be a permutation of 1..{f.universe_size}, got {list(order)}"
        )
    mgr = BddManager(order, node_cap=node_cap)
    root = mgr.compile(f.root)
    logger.debug(
        "Compiled BDD: %d reachable nodes, %d in table, %d cache entries, %d cache hits",
        mgr.size(root),
        mgr.node_count,
        mgr.cache_size,
        mgr.cache_hits,
    )
    return mgr, root


def model_count(mgr: BddManager, root: BddRef, universe_size: int | None = None) -> int:
    return mgr.model_count(root, universe_size)


def to_circuit(mgr: BddManager, root: BddRef, universe_size: int | None = None) -> Circuit:
    """Expand every decision node into ``sum(product(¬v, lo), product(v, hi))``."""
    n = universe_size if universe_size is not None else max(mgr.order, default=0)
    builder = CircuitBuilder()
    memo: dict[BddRef, int] = {}
    stack = [root]
    while stack:
        ref = stack[-1]
        if ref in memo:
            stack.pop()
            continue
        if mgr.is_terminal(ref):
            memo[ref] = builder.constant(ref == TRUE_REF)
            stack.pop()
            continue
        lo, hi = mgr.low(ref), mgr.high(ref)
        missing = [c for c in (lo, hi) if c not in memo]
        if missing:
            stack.extend(missing)
            continue
        stack.pop()
        v = mgr.var(ref)
        memo[ref] = builder.sum(
            (
                builder.product((builder.literal(v, False), memo[lo])),
                builder.product((builder.literal(v, True), memo[hi])),
            )
        )
    return builder.build(memo[root], n)


# ---------------------------------------------------------------------------
# Determinism check
# ---------------------------------------------------------------------------


def circuit_to_bdd(
    circuit: Circuit, mgr: BddManager | None = None
) -> tuple[BddManager, list[BddRef]]:
    """The Boolean function of every circuit node as a BDD."""
    if mgr is None:
        mgr = BddManager(range(1, circuit.universe_size + 1))
    refs: list[BddRef] = []
    for node in circuit.nodes:
        if node.kind is NodeKind.LITERAL:
            refs.append(mgr.literal(node.var, node.positive))
        elif node.kind is NodeKind.CONSTANT:
            refs.append(TRUE_REF if node.value else FALSE_REF)
        else:
            op = BddOp.AND if node.kind is NodeKind.PRODUCT else BddOp.OR
            acc = TRUE_REF if op is BddOp.AND else FALSE_REF
            for c in node.children:
                acc = mgr.apply(op, acc, refs[c])
            refs.append(acc)
    return mgr, refs


def determinism_violations(circuit: Circuit) -> list[int]:
    """Sum nodes with two children that can be true in the same state."""
    if circuit.universe_size > MAX_DETERMINISM_CHECK_VARS:
        raise UniverseTooLargeError(
            f"Determinism check supports at most {MAX_DETERMINISM_CHECK_VARS} variables, "
            f"got {circuit.universe_size}"
        )
    mgr, refs = circuit_to_bdd(circuit)
    bad = []
    for i, node in enumerate(circuit.nodes):
        if node.kind is not NodeKind.SUM:
            continue
        kids = [refs[c] for c in node.children]
        if any(
            mgr.apply(BddOp.AND, a, b) != FALSE_REF for a, b in itertools.combinations(kids, 2)
        ):
            bad.append(i)
    return bad


def is_deterministic(circuit: Circuit) -> bool:
    return not determinism_violations(circuit)


def compile_circuit(
    f: Formula,
    order: Sequence[VarId] | None = None,
    *,
    strategy: OrderStrategy = "natural",
    node_cap: int = DEFAULT_NODE_CAP,
) -> Circuit:
    """``to_circuit(compile_formula(f))`` over the formula's universe."""
    mgr, root = compile_formula(f, order, strategy=strategy, node_cap=node_cap)
    return to_circuit(mgr, root, f.universe_size)
