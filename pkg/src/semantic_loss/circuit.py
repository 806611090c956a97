"""Deterministic, decomposable arithmetic circuits.

A :class:`Circuit` is an immutable DAG stored in topological order: every
node's children have smaller indices than the node itself. Leaves are
literals (``x_i`` / ``¬x_i``) and the constants 0 and 1; internal nodes are
products and sums.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from typing import NamedTuple

import numpy as np
import numpy.typing as npt
from pydantic import ValidationError

from semantic_loss.errors import CircuitFormatError, StateError
from semantic_loss.logic import State, VarId, check_state
from semantic_loss.models import CircuitDocument, CircuitNodeDocument

logger = logging.getLogger(__name__)


class NodeKind(StrEnum):
    LITERAL = "literal"
    CONSTANT = "constant"
    PRODUCT = "product"
    SUM = "sum"


# Integer codes used by the vectorized layout.
KIND_CODES: dict[NodeKind, int] = {
    NodeKind.LITERAL: 0,
    NodeKind.CONSTANT: 1,
    NodeKind.PRODUCT: 2,
    NodeKind.SUM: 3,
}


class CircuitNode(NamedTuple):
    kind: NodeKind
    var: VarId = 0
    positive: bool = True
    value: int = 0
    children: tuple[int, ...] = ()


class Level(NamedTuple):
    """Internal nodes of one kind at one depth, with their children flattened."""

    depth: int
    kind: NodeKind
    nodes: npt.NDArray[np.int64]
    children: npt.NDArray[np.int64]
    counts: npt.NDArray[np.int64]


@dataclass(frozen=True)
class CircuitArrays:
    """Column view of a circuit used by the evaluation engine."""

    kind: npt.NDArray[np.int8]
    var_index: npt.NDArray[np.int64]
    positive: npt.NDArray[np.bool_]
    value: npt.NDArray[np.int8]
    depth: npt.NDArray[np.int64]
    levels: tuple[Level, ...]


@dataclass(frozen=True)
class Circuit:
    universe_size: int
    nodes: tuple[CircuitNode, ...]
    root: int
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.root < len(self.nodes):
            raise CircuitFormatError(f"Root {self.root} outside node range 0..{len(self.nodes) - 1}")
        for i, node in enumerate(self.nodes):
            if node.kind is NodeKind.LITERAL:
                if not 1 <= node.var <= self.universe_size:
                    raise CircuitFormatError(
                        f"Node {i}: literal variable x{node.var} outside universe of "
                        f"{self.universe_size}"
                    )
            elif node.kind is NodeKind.CONSTANT:
                if node.value not in (0, 1):
                    raise CircuitFormatError(f"Node {i}: constant must be 0 or 1")
            else:
                if not node.children:
                    raise CircuitFormatError(f"Node {i}: {node.kind} node without children")
                if any(not 0 <= c < i for c in node.children):
                    raise CircuitFormatError(f"Node {i}: children must precede their parent")
        object.__setattr__(self, "_hash", hash((self.universe_size, self.root, self.nodes)))

    def __hash__(self) -> int:
        return self._hash

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return sum(len(n.children) for n in self.nodes)

    @cached_property
    def arrays(self) -> CircuitArrays:
        n = len(self.nodes)
        kind = np.empty(n, dtype=np.int8)
        var_index = np.full(n, -1, dtype=np.int64)
        positive = np.ones(n, dtype=bool)
        value = np.zeros(n, dtype=np.int8)
        depth = np.zeros(n, dtype=np.int64)
        grouped: dict[tuple[int, NodeKind], list[int]] = {}
        for i, node in enumerate(self.nodes):
            kind[i] = KIND_CODES[node.kind]
            if node.kind is NodeKind.LITERAL:
                var_index[i] = node.var - 1
                positive[i] = node.positive
            elif node.kind is NodeKind.CONSTANT:
                value[i] = node.value
            else:
                d = 1 + max(int(depth[c]) for c in node.children)
                depth[i] = d
                grouped.setdefault((d, node.kind), []).append(i)
        levels = []
        for (d, k), ids in sorted(grouped.items(), key=lambda item: (item[0][0], item[0][1])):
            kids = [c for i in ids for c in self.nodes[i].children]
            counts = [len(self.nodes[i].children) for i in ids]
            levels.append(
                Level(
                    depth=d,
                    kind=k,
                    nodes=np.asarray(ids, dtype=np.int64),
                    children=np.asarray(kids, dtype=np.int64),
                    counts=np.asarray(counts, dtype=np.int64),
                )
            )
        return CircuitArrays(kind, var_index, positive, value, depth, tuple(levels))

    @property
    def depth(self) -> int:
        return int(self.arrays.depth[self.root])


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------


class CircuitBuilder:
    """Hash-consing node factory; identical nodes are created once."""

    def __init__(self) -> None:
        self._nodes: list[CircuitNode] = []
        self._index: dict[CircuitNode, int] = {}

    def _add(self, node: CircuitNode) -> int:
        existing = self._index.get(node)
        if existing is not None:
            return existing
        self._nodes.append(node)
        self._index[node] = len(self._nodes) - 1
        return len(self._nodes) - 1

    def constant(self, value: int | bool) -> int:
        return self._add(CircuitNode(NodeKind.CONSTANT, value=int(bool(value))))

    def literal(self, var: VarId, positive: bool = True) -> int:
        return self._add(CircuitNode(NodeKind.LITERAL, var=var, positive=positive))

    def product(self, children: Iterable[int]) -> int:
        return self._add(CircuitNode(NodeKind.PRODUCT, children=tuple(children)))

    def sum(self, children: Iterable[int]) -> int:
        return self._add(CircuitNode(NodeKind.SUM, children=tuple(children)))

    def node(self, index: int) -> CircuitNode:
        return self._nodes[index]

    def build(self, root: int, universe_size: int) -> Circuit:
        """Freeze the nodes reachable from ``root``, keeping their relative order."""
        reachable = np.zeros(len(self._nodes), dtype=bool)
        reachable[root] = True
        for i in range(root, -1, -1):
            if reachable[i]:
                for c in self._nodes[i].children:
                    reachable[c] = True
        remap: dict[int, int] = {}
        frozen: list[CircuitNode] = []
        for i in np.flatnonzero(reachable):
            node = self._nodes[int(i)]
            if node.children:
                node = node._replace(children=tuple(remap[c] for c in node.children))
            remap[int(i)] = len(frozen)
            frozen.append(node)
        return Circuit(universe_size, tuple(frozen), remap[root])


# ---------------------------------------------------------------------------
# Rebuilding with constant folding
# ---------------------------------------------------------------------------


def rebuild(circuit: Circuit, leaf: Callable[[CircuitNode, CircuitBuilder], int]) -> Circuit:
    """Copy ``circuit`` through ``leaf`` (applied to every leaf) and fold constants.

    Products with a zero child become 0 without visiting their remaining
    children, unit children are dropped, and single-child nodes collapse into
    their child. Traversal is iterative and lazy from the root, so unreachable
    or short-circuited parts are never visited.
    """
    builder = CircuitBuilder()
    zero = builder.constant(0)
    one = builder.constant(1)
    memo: dict[int, int] = {}
    nodes = circuit.nodes
    stack: list[tuple[int, int, list[int]]] = [(circuit.root, 0, [])]

    while stack:
        index, pos, kids = stack.pop()
        node = nodes[index]
        if not node.children:
            memo[index] = leaf(node, builder)
            continue
        is_product = node.kind is NodeKind.PRODUCT
        result: int | None = None
        pending: int | None = None
        while pos < len(node.children):
            child = node.children[pos]
            mapped = memo.get(child)
            if mapped is None:
                pending = child
                break
            pos += 1
            if is_product:
                if mapped == zero:
                    result = zero
                    break
                if mapped == one:
                    continue
            elif mapped == zero:
                continue
            kids.append(mapped)
        if result is not None:
            memo[index] = result
            continue
        if pending is not None:
            stack.append((index, pos, kids))
            stack.append((pending, 0, []))
            continue
        if not kids:
            memo[index] = one if is_product else zero
        elif len(kids) == 1:
            memo[index] = kids[0]
        else:
            memo[index] = builder.product(kids) if is_product else builder.sum(kids)

    return builder.build(memo[circuit.root], circuit.universe_size)


def _copy_leaf(node: CircuitNode, builder: CircuitBuilder) -> int:
    if node.kind is NodeKind.CONSTANT:
        return builder.constant(node.value)
    return builder.literal(node.var, node.positive)


def simplify(circuit: Circuit) -> Circuit:
    """Constant-folded, single-child-collapsed normal form."""
    return rebuild(circuit, _copy_leaf)


def substitute(circuit: Circuit, evidence: Mapping[VarId, int]) -> Circuit:
    """Replace literals of fixed variables by constants, then fold."""
    for v, value in evidence.items():
        if not 1 <= v <= circuit.universe_size:
            raise StateError(f"Evidence variable x{v} outside universe of {circuit.universe_size}")
        if value not in (0, 1):
            raise StateError(f"Evidence value for x{v} must be 0 or 1, got {value!r}")

    def leaf(node: CircuitNode, builder: CircuitBuilder) -> int:
        if node.kind is NodeKind.LITERAL and node.var in evidence:
            return builder.constant(bool(evidence[node.var]) == node.positive)
        return _copy_leaf(node, builder)

    return rebuild(circuit, leaf)


# ---------------------------------------------------------------------------
# Structural queries
# ---------------------------------------------------------------------------


def node_variables(circuit: Circuit) -> list[frozenset[VarId]]:
    """Variables mentioned under each node."""
    out: list[frozenset[VarId]] = []
    for node in circuit.nodes:
        if node.kind is NodeKind.LITERAL:
            out.append(frozenset((node.var,)))
        elif node.kind is NodeKind.CONSTANT:
            out.append(frozenset())
        else:
            out.append(frozenset().union(*(out[c] for c in node.children)))
    return out


def decomposability_violations(circuit: Circuit) -> list[int]:
    """Product nodes whose children share a variable."""
    scopes = node_variables(circuit)
    bad = []
    for i, node in enumerate(circuit.nodes):
        if node.kind is not NodeKind.PRODUCT:
            continue
        seen: set[VarId] = set()
        for c in node.children:
            if seen & scopes[c]:
                bad.append(i)
                break
            seen |= scopes[c]
    return bad


def is_decomposable(circuit: Circuit) -> bool:
    return not decomposability_violations(circuit)


def evaluate_state(circuit: Circuit, state: Sequence[int] | Mapping[VarId, int]) -> bool:
    """Boolean value of the circuit in a total state."""
    s: State = check_state(state, circuit.universe_size)
    values: list[bool] = []
    for node in circuit.nodes:
        if node.kind is NodeKind.LITERAL:
            values.append(bool(s[node.var - 1]) == node.positive)
        elif node.kind is NodeKind.CONSTANT:
            values.append(bool(node.value))
        elif node.kind is NodeKind.PRODUCT:
            values.append(all(values[c] for c in node.children))
        else:
            values.append(any(values[c] for c in node.children))
    return values[circuit.root]


def count_models(circuit: Circuit, free_variables: int | None = None) -> int:
    """Exact number of models over ``free_variables`` variables.

    Works on non-smooth circuits: a sum child that skips variables of its
    siblings counts every completion of the skipped ones. Defaults to the full
    universe; pass a smaller count when some variables were conditioned away.
    """
    total = circuit.universe_size if free_variables is None else free_variables
    scopes = node_variables(circuit)
    counts: list[int] = []
    for i, node in enumerate(circuit.nodes):
        if node.kind is NodeKind.LITERAL:
            counts.append(1)
        elif node.kind is NodeKind.CONSTANT:
            counts.append(node.value)
        elif node.kind is NodeKind.PRODUCT:
            acc = 1
            for c in node.children:
                acc *= counts[c]
            counts.append(acc)
        else:
            width = len(scopes[i])
            counts.append(sum(counts[c] << (width - len(scopes[c])) for c in node.children))
    mentioned = len(scopes[circuit.root])
    if mentioned > total:
        raise ValueError(f"Circuit mentions {mentioned} variables but only {total} are free")
    return counts[circuit.root] << (total - mentioned)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def circuit_to_document(circuit: Circuit) -> CircuitDocument:
    docs = []
    for node in circuit.nodes:
        if node.kind is NodeKind.LITERAL:
            docs.append(CircuitNodeDocument(kind="literal", var=node.var, polarity=node.positive))
        elif node.kind is NodeKind.CONSTANT:
            docs.append(CircuitNodeDocument(kind="constant", value=node.value))
        else:
            docs.append(CircuitNodeDocument(kind=node.kind.value, children=list(node.children)))
    return CircuitDocument(universe_size=circuit.universe_size, nodes=docs, root=circuit.root)


def circuit_to_json(circuit: Circuit) -> str:
    return circuit_to_document(circuit).model_dump_json(exclude_none=True)


def circuit_from_json(text: str) -> Circuit:
    try:
        doc = CircuitDocument.model_validate_json(text)
    except ValidationError as exc:
        raise CircuitFormatError(f"Invalid circuit document: {exc}") from exc
    nodes = []
    for i, d in enumerate(doc.nodes):
        kind = NodeKind(d.kind)
        if kind is NodeKind.LITERAL:
            if d.var is None:
                raise CircuitFormatError(f"Node {i}: literal without 'var'")
            nodes.append(CircuitNode(kind, var=d.var, positive=d.polarity is not False))
        elif kind is NodeKind.CONSTANT:
            nodes.append(CircuitNode(kind, value=d.value or 0))
        else:
            nodes.append(CircuitNode(kind, children=tuple(d.children or ())))
    return Circuit(doc.universe_size, tuple(nodes), doc.root)
