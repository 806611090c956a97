"""Structured output constraints: exactly-one, total ordering and grid simple paths."""

from __future__ import annotations

import itertools
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import TypeAlias

import networkx as nx

from semantic_loss import circuit as circuits
from semantic_loss.circuit import Circuit, CircuitBuilder, simplify, substitute
from semantic_loss.compiler import (
    FALSE_REF,
    TRUE_REF,
    BddManager,
    BddOp,
    BddRef,
    compile_formula,
    to_circuit,
)
from semantic_loss.errors import GridSpecError
from semantic_loss.logic import And, Formula, Lit, Node, Or, VarId, check_state, conj, disj

logger = logging.getLogger(__name__)

Evidence: TypeAlias = Mapping[VarId, int]

MAX_GRID_SIDE = 6


# ---------------------------------------------------------------------------
# Exactly-one
# ---------------------------------------------------------------------------


def _exactly_one_chain(builder: CircuitBuilder, variables: Sequence[VarId]) -> int:
    """E_k = x_k·Z_{k+1} + ¬x_k·E_{k+1}, Z_k = ¬x_k·Z_{k+1} over the suffix x_k..x_n."""
    last = variables[-1]
    exactly = builder.literal(last, True)
    none = builder.literal(last, False)
    for v in reversed(variables[:-1]):
        pos, negl = builder.literal(v, True), builder.literal(v, False)
        exactly = builder.sum((builder.product((pos, none)), builder.product((negl, exactly))))
        none = builder.product((negl, none))
    return exactly


def exactly_one(n: int) -> Circuit:
    """Linear-size circuit whose models are the n one-hot states."""
    if n < 1:
        raise ValueError("exactly_one needs at least one variable")
    builder = CircuitBuilder()
    root = _exactly_one_chain(builder, list(range(1, n + 1)))
    return builder.build(root, n)


def _exactly_one_clauses(variables: Sequence[VarId]) -> list[Node]:
    clauses: list[Node] = [Or(tuple(Lit(v) for v in variables))]
    clauses.extend(
        Or((Lit(a, False), Lit(b, False))) for a, b in itertools.combinations(variables, 2)
    )
    return clauses


def exactly_one_cnf(n: int) -> Formula:
    """(x1 ∨ … ∨ xn) ∧ pairwise (¬xi ∨ ¬xj)."""
    if n < 1:
        raise ValueError("exactly_one_cnf needs at least one variable")
    return Formula(conj(*_exactly_one_clauses(range(1, n + 1))), n)


def exactly_one_dnf(n: int) -> Formula:
    """∨_i (xi ∧ ∧_{j≠i} ¬xj)."""
    if n < 1:
        raise ValueError("exactly_one_dnf needs at least one variable")
    terms = [
        conj(*(Lit(j, j == i) for j in range(1, n + 1))) for i in range(1, n + 1)
    ]
    return Formula(disj(*terms), n)


# ---------------------------------------------------------------------------
# Total ordering
# ---------------------------------------------------------------------------


def order_var(n: int, item: int, position: int) -> VarId:
    """X_ij, row-major over an n×n matrix (0-based item and position)."""
    return item * n + position + 1


def total_order_formula(n: int) -> Formula:
    """Every row and every column of the n×n indicator matrix is one-hot."""
    if n < 1:
        raise ValueError("total_order needs n ≥ 1")
    clauses: list[Node] = []
    for i in range(n):
        clauses.extend(_exactly_one_clauses([order_var(n, i, j) for j in range(n)]))
    for j in range(n):
        clauses.extend(_exactly_one_clauses([order_var(n, i, j) for i in range(n)]))
    return Formula(And(tuple(clauses)), n * n)


def total_order(n: int) -> Circuit:
    """Circuit whose models are the n×n permutation matrices."""
    mgr, root = compile_formula(total_order_formula(n))
    return simplify(to_circuit(mgr, root, n * n))


# ---------------------------------------------------------------------------
# States and evidence
# ---------------------------------------------------------------------------


def state_circuit(x: Sequence[int]) -> Circuit:
    """Product of the literals that fix state ``x``."""
    state = check_state(x, len(x))
    builder = CircuitBuilder()
    if not state:
        return builder.build(builder.constant(1), 0)
    leaves = [builder.literal(i, bool(b)) for i, b in enumerate(state, start=1)]
    root = leaves[0] if len(leaves) == 1 else builder.product(leaves)
    return builder.build(root, len(state))


def condition(c: Circuit, e: Evidence) -> Circuit:
    """Replace evidence literals by constants and fold."""
    return substitute(c, e)


def count_models(c: Circuit, evidence: Evidence | None = None) -> int:
    """Exact model count over the variables not fixed by ``evidence``."""
    if not evidence:
        return circuits.count_models(c)
    return circuits.count_models(condition(c, evidence), c.universe_size - len(evidence))


# ---------------------------------------------------------------------------
# Grid simple paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """A rows×cols 4-neighbour lattice.

    Nodes are numbered row-major. Edges are numbered by walking the nodes in
    order and emitting each node's right edge, then its down edge. Variables
    are the |V| endpoint indicators followed by the |E| edge indicators.
    """

    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise GridSpecError(f"Grid dimensions must be positive, got {self.rows}×{self.cols}")

    @property
    def num_nodes(self) -> int:
        return self.rows * self.cols

    @property
    def num_edges(self) -> int:
        return self.rows * (self.cols - 1) + self.cols * (self.rows - 1)

    @property
    def universe_size(self) -> int:
        return self.num_nodes + self.num_edges

    def node_id(self, row: int, col: int) -> int:
        return row * self.cols + col

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                u = self.node_id(r, c)
                if c + 1 < self.cols:
                    out.append((u, u + 1))
                if r + 1 < self.rows:
                    out.append((u, u + self.cols))
        return tuple(out)

    @cached_property
    def edge_index(self) -> dict[frozenset[int], int]:
        return {frozenset(e): i for i, e in enumerate(self.edges)}

    def indicator_var(self, node: int) -> VarId:
        return node + 1

    def edge_var(self, edge: int) -> VarId:
        return self.num_nodes + edge + 1

    @property
    def indicator_vars(self) -> list[VarId]:
        return [self.indicator_var(v) for v in range(self.num_nodes)]

    @property
    def edge_vars(self) -> list[VarId]:
        return [self.edge_var(e) for e in range(self.num_edges)]

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        for v in range(self.num_nodes):
            graph.add_node(v, pos=divmod(v, self.cols))
        for i, (u, v) in enumerate(self.edges):
            graph.add_edge(u, v, id=i)
        return graph

    def endpoint_evidence(self, s: int, t: int) -> dict[VarId, int]:
        """Indicator evidence flagging exactly ``s`` and ``t``."""
        return {self.indicator_var(v): int(v in (s, t)) for v in range(self.num_nodes)}


class _End(Enum):
    FAIL = 0
    DONE = 1


_INTERIOR = -1
_Mates: TypeAlias = tuple[tuple[int, int], ...]


def _advance(
    mates_in: _Mates,
    edge: tuple[int, int],
    take: bool,
    ends: tuple[int, int],
    leaving: Sequence[int],
) -> _End | _Mates:
    """One frontier step.

    ``mates`` maps each touched frontier node to the other end of its path
    fragment, or to ``_INTERIOR`` once it has degree 2; absent nodes have
    degree 0. The endpoints stay in the map after leaving the frontier.
    """
    s, t = ends
    mates = dict(mates_in)
    if take:
        u, v = edge
        mu, mv = mates.get(u, u), mates.get(v, v)
        if mu == _INTERIOR or mv == _INTERIOR:
            return _End.FAIL
        if (u in ends and mu != u) or (v in ends and mv != v):
            return _End.FAIL
        if mu == v:
            return _End.FAIL
        if mu != u:
            mates[u] = _INTERIOR
        if mv != v:
            mates[v] = _INTERIOR
        mates[mu] = mv
        mates[mv] = mu
        if mates.get(s) == t:
            stray = any(m >= 0 and m != w and w not in ends for w, m in mates.items())
            return _End.FAIL if stray else _End.DONE
    for w in leaving:
        if w in ends:
            if mates.get(w, w) == w:
                return _End.FAIL
            continue
        m = mates.pop(w, w)
        if m not in (w, _INTERIOR):
            return _End.FAIL
    return tuple(sorted((w, m) for w, m in mates.items() if m != w))


def _pair_path(
    mgr: BddManager, g: GridSpec, s: int, t: int, rest_false: Sequence[BddRef]
) -> BddRef:
    """Edge assignments forming a simple s–t path, built edge by edge."""
    edges = g.edges
    last_edge = [-1] * g.num_nodes
    for i, (u, v) in enumerate(edges):
        last_edge[u] = last_edge[v] = i
    leaving: list[list[int]] = [[] for _ in edges]
    for w, i in enumerate(last_edge):
        leaving[i].append(w)

    frontier: dict[_Mates, None] = {(): None}
    table: list[dict[_Mates, tuple[_End | _Mates, _End | _Mates]]] = []
    widest = 1
    for i, edge in enumerate(edges):
        row: dict[_Mates, tuple[_End | _Mates, _End | _Mates]] = {}
        following: dict[_Mates, None] = {}
        for state in frontier:
            outs = []
            for take in (False, True):
                out = _advance(state, edge, take, (s, t), leaving[i])
                if isinstance(out, tuple):
                    if i == len(edges) - 1:
                        out = _End.FAIL
                    else:
                        following[out] = None
                outs.append(out)
            row[state] = (outs[0], outs[1])
        table.append(row)
        frontier = following
        widest = max(widest, len(frontier))
    logger.debug("Pair (%d, %d): widest frontier level holds %d states", s, t, widest)

    refs: dict[_Mates, BddRef] = {}
    for i in reversed(range(len(edges))):
        var = g.edge_var(i)
        done = rest_false[i + 1]
        level: dict[_Mates, BddRef] = {}
        for state, (lo, hi) in table[i].items():
            level[state] = mgr.make_node(
                var, _resolve(lo, done, refs), _resolve(hi, done, refs)
            )
        refs = level
    return refs[()]


def _resolve(out: _End | _Mates, done: BddRef, refs: Mapping[_Mates, BddRef]) -> BddRef:
    if out is _End.FAIL:
        return FALSE_REF
    if out is _End.DONE:
        return done
    return refs[out]


def _check_grid(g: GridSpec) -> None:
    if g.num_nodes < 2:
        raise GridSpecError("A 1×1 grid has no paths")
    if g.rows > MAX_GRID_SIDE or g.cols > MAX_GRID_SIDE:
        raise GridSpecError(
            f"Grid {g.rows}×{g.cols} exceeds the supported {MAX_GRID_SIDE}×{MAX_GRID_SIDE}"
        )


def grid_path_bdd(g: GridSpec, node_cap: int | None = None) -> tuple[BddManager, BddRef]:
    """BDD of: exactly two endpoint indicators set, and the edges form a simple path between them."""
    _check_grid(g)
    order = list(range(1, g.universe_size + 1))
    mgr = BddManager(order) if node_cap is None else BddManager(order, node_cap=node_cap)

    rest_false: list[BddRef] = [TRUE_REF] * (g.num_edges + 1)
    for k in reversed(range(g.num_edges)):
        rest_false[k] = mgr.make_node(g.edge_var(k), rest_false[k + 1], FALSE_REF)

    root = FALSE_REF
    for s, t in itertools.combinations(range(g.num_nodes), 2):
        ref = _pair_path(mgr, g, s, t, rest_false)
        for w in reversed(range(g.num_nodes)):
            var = g.indicator_var(w)
            ref = mgr.make_node(var, FALSE_REF, ref) if w in (s, t) else mgr.make_node(
                var, ref, FALSE_REF
            )
        root = mgr.apply(BddOp.OR, root, ref)
    logger.debug("Grid %d×%d path BDD: %d nodes", g.rows, g.cols, mgr.size(root))
    return mgr, root


def grid_simple_path(g: GridSpec) -> Circuit:
    """Disjunction over endpoint pairs of [indicator pattern] ∧ [simple path]."""
    mgr, root = grid_path_bdd(g)
    return simplify(to_circuit(mgr, root, g.universe_size))


def path_state(g: GridSpec, s: int, t: int, path_edges: Sequence[int]) -> tuple[int, ...]:
    """Full assignment for endpoints ``s``, ``t`` and the given edge ids."""
    chosen = set(path_edges)
    indicators = [int(v in (s, t)) for v in range(g.num_nodes)]
    return tuple(indicators + [int(e in chosen) for e in range(g.num_edges)])
