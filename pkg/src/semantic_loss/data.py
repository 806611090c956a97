"""Datasets: the grid shortest-path generator, the 2D toy set and the CSV format."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import networkx as nx
import numpy as np
import numpy.typing as npt

from semantic_loss.compiler import BddManager, BddRef
from semantic_loss.encoders import GridSpec, grid_path_bdd, path_state
from semantic_loss.errors import DatasetSchemaError, EncodingError, GenerationError

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
MIN_COMPONENT_NODES = 5

_INT_RE = re.compile(r"^-?\d+$")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature/label matrices with a split tag and a labeled flag per row."""

    features: npt.NDArray[Any]
    labels: npt.NDArray[np.int64]
    split: npt.NDArray[np.str_]
    labeled: npt.NDArray[np.bool_]
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        rows = len(self.features)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise DatasetSchemaError("Features and labels must be matrices")
        if not len(self.labels) == len(self.split) == len(self.labeled) == rows:
            raise DatasetSchemaError("Features, labels, split and labeled disagree on row count")
        unknown = set(self.split.tolist()) - set(SPLITS)
        if unknown:
            raise DatasetSchemaError(f"Unknown split tag(s): {sorted(unknown)}")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise DatasetSchemaError("Labels must be binary")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_labels(self) -> int:
        return int(self.labels.shape[1])

    def subset(self, split: str) -> Dataset:
        mask = self.split == split
        return Dataset(
            self.features[mask], self.labels[mask], self.split[mask], self.labeled[mask], self.meta
        )


def split_tags(count: int) -> npt.NDArray[np.str_]:
    train = count * 6 // 10
    valid = count * 2 // 10
    tags = ["train"] * train + ["valid"] * valid + ["test"] * (count - train - valid)
    return np.asarray(tags)


# ---------------------------------------------------------------------------
# Grid shortest paths
# ---------------------------------------------------------------------------


def shortest_path_edges(graph: nx.Graph, s: int, t: int) -> list[int]:
    """Edge ids of one shortest s–t path; each hop goes to the smallest-id closer node."""
    dist = nx.single_source_shortest_path_length(graph, t)
    path: list[int] = []
    cur = s
    while cur != t:
        nxt = min(nb for nb in graph.neighbors(cur) if dist.get(nb) == dist[cur] - 1)
        path.append(graph.edges[cur, nxt]["id"])
        cur = nxt
    return path


def gen_grid_dataset(
    g: GridSpec,
    count: int,
    seed: int,
    *,
    path_bdd: tuple[BddManager, BddRef] | None = None,
    retry_budget: int | None = None,
) -> Dataset:
    """Examples on randomly damaged grids.

    Features are the endpoint indicators followed by the removed-edge
    indicators; labels are the edges of a shortest path on the damaged grid.
    Rows are split 60/20/20 in generation order.
    """
    mgr, root = path_bdd if path_bdd is not None else grid_path_bdd(g)
    budget = retry_budget if retry_budget is not None else 10 * count
    rng = np.random.default_rng(seed)
    full = g.to_networkx()
    removals = g.num_edges // 3

    features: list[list[int]] = []
    labels: list[list[int]] = []
    retries = 0
    while len(features) < count:
        removed = np.sort(rng.choice(g.num_edges, size=removals, replace=False))
        damaged = full.copy()
        damaged.remove_edges_from(g.edges[int(e)] for e in removed)
        components = [
            sorted(c) for c in nx.connected_components(damaged) if len(c) >= MIN_COMPONENT_NODES
        ]
        pairs = [pair for comp in sorted(components) for pair in itertools.combinations(comp, 2)]
        if not pairs:
            retries += 1
            if retries > budget:
                raise GenerationError(
                    f"Generated {len(features)} of {count} grid examples before exhausting "
                    f"{budget} retries"
                )
            continue
        s, t = pairs[int(rng.integers(0, len(pairs)))]
        path = shortest_path_edges(damaged, s, t)
        state = path_state(g, s, t, path)
        if not mgr.evaluate(root, state):
            raise GenerationError(f"Shortest path {path} between {s} and {t} violates the constraint")
        removed_bits = np.zeros(g.num_edges, dtype=np.int64)
        removed_bits[removed] = 1
        features.append(list(state[: g.num_nodes]) + removed_bits.tolist())
        labels.append(list(state[g.num_nodes :]))
    if retries:
        logger.warning("Grid generation needed %d retries for %d examples", retries, count)

    meta = {
        "task": "grid",
        "rows": g.rows,
        "cols": g.cols,
        "count": count,
        "seed": seed,
        "removed_per_example": removals,
        "min_component_nodes": MIN_COMPONENT_NODES,
    }
    return Dataset(
        np.asarray(features, dtype=np.int64),
        np.asarray(labels, dtype=np.int64),
        split_tags(count),
        np.ones(count, dtype=bool),
        meta,
    )


# ---------------------------------------------------------------------------
# 2D toy set
# ---------------------------------------------------------------------------

# Clusters are tall and narrow with a wide vertical gap; the labeled points sit at
# opposite ends, so the margin between them alone runs diagonally through both clusters.
TOY_MEANS = ((-1.5, 0.0), (1.5, 0.0))
TOY_STD = (0.4, 1.2)
TOY_LABELED_MEANS = ((-0.8, 2.0), (0.8, -2.0))
TOY_LABELED_STD = 0.2


def gen_toy_2d(seed: int, n_labeled: int = 4, n_unlabeled: int = 200) -> Dataset:
    """Two elongated Gaussian clusters whose few labeled points sit at their far ends.

    Labeled rows come first. The labels of every row are kept (one-hot over
    the two classes) so unlabeled accuracy can be measured; ``labeled`` marks
    the rows a trainer may see.
    """
    if n_labeled < 1 or n_unlabeled < 1:
        raise ValueError("gen_toy_2d needs at least one labeled and one unlabeled point")
    rng = np.random.default_rng(seed)
    points, classes = [], []
    for i in range(n_labeled):
        k = i % 2
        points.append(rng.normal(TOY_LABELED_MEANS[k], TOY_LABELED_STD))
        classes.append(k)
    for i in range(n_unlabeled):
        k = i % 2
        points.append(rng.normal(TOY_MEANS[k], TOY_STD))
        classes.append(k)
    total = n_labeled + n_unlabeled
    labels = np.zeros((total, 2), dtype=np.int64)
    labels[np.arange(total), classes] = 1
    labeled = np.zeros(total, dtype=bool)
    labeled[:n_labeled] = True
    meta = {"task": "toy", "seed": seed, "n_labeled": n_labeled, "n_unlabeled": n_unlabeled}
    return Dataset(
        np.asarray(points, dtype=np.float64), labels, np.full(total, "train"), labeled, meta
    )


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _format(value: Any) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"f{i}" for i in range(ds.num_features)] + [f"y{i}" for i in range(ds.num_labels)]
    header.append("split")
    with_mask = not bool(ds.labeled.all())
    if with_mask:
        header.append("labeled")
    writer.writerow(header)
    for k in range(len(ds)):
        row = [_format(v) for v in ds.features[k].tolist()]
        row += [str(int(v)) for v in ds.labels[k]]
        row.append(str(ds.split[k]))
        if with_mask:
            row.append("1" if ds.labeled[k] else "0")
        writer.writerow(row)
    return buf.getvalue()


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def save_dataset(ds: Dataset, path: str | Path) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dataset_to_csv(ds), encoding="utf-8")
    _meta_path(target).write_text(json.dumps(ds.meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Dataset saved: %s (%d rows)", target, len(ds))


def _parse_header(header: list[str]) -> tuple[int, int, bool]:
    features = 0
    while features < len(header) and header[features] == f"f{features}":
        features += 1
    labels = 0
    while features + labels < len(header) and header[features + labels] == f"y{labels}":
        labels += 1
    rest = header[features + labels :]
    if rest not in (["split"], ["split", "labeled"]):
        raise DatasetSchemaError(
            "Header must be f0..fN, y0..yM, split[, labeled]; got trailing columns "
            f"{rest!r}"
        )
    return features, labels, len(rest) == 2


def dataset_from_csv(text: str, meta: dict[str, Any] | None = None) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DatasetSchemaError("Empty dataset file")
    n_features, n_labels, with_mask = _parse_header(rows[0])
    body = rows[1:]
    width = len(rows[0])
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise DatasetSchemaError(f"Row {i} has {len(row)} fields, expected {width}")
    feature_cells = [row[:n_features] for row in body]
    is_int = all(_INT_RE.match(cell) for cells in feature_cells for cell in cells)
    dtype = np.int64 if is_int else np.float64
    try:
        features = np.asarray(feature_cells, dtype=dtype).reshape(len(body), n_features)
        labels = np.asarray(
            [row[n_features : n_features + n_labels] for row in body], dtype=np.int64
        ).reshape(len(body), n_labels)
    except ValueError as exc:
        raise DatasetSchemaError(f"Non-numeric feature or label cell: {exc}") from exc
    split = np.asarray([row[n_features + n_labels] for row in body], dtype=np.str_)
    if with_mask:
        labeled = np.asarray([row[-1] == "1" for row in body], dtype=bool)
    else:
        labeled = np.ones(len(body), dtype=bool)
    return Dataset(features, labels, split, labeled, meta or {})


def read_utf8(path: str | Path) -> str:
    """File contents as text; bytes that do not decode are an input error."""
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EncodingError(f"{path} is not valid UTF-8 at byte {exc.start}") from exc


def load_dataset(path: str | Path) -> Dataset:
    source = Path(path)
    sidecar = _meta_path(source)
    meta = json.loads(read_utf8(sidecar)) if sidecar.exists() else {}
    return dataset_from_csv(read_utf8(source), meta)
