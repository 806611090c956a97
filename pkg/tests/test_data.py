"""Unit tests for dataset generation and the CSV format."""

from __future__ import annotations

from pathlib import Path

import networkx as nx
import numpy as np
import pytest

from semantic_loss.compiler import BddManager, BddRef
from semantic_loss.data import (
    Dataset,
    dataset_from_csv,
    dataset_to_csv,
    gen_grid_dataset,
    gen_toy_2d,
    load_dataset,
    read_utf8,
    save_dataset,
    shortest_path_edges,
    split_tags,
)
from semantic_loss.encoders import GridSpec
from semantic_loss.errors import DatasetSchemaError, EncodingError


@pytest.fixture(scope="module")
def grid3_data(grid3: GridSpec, grid3_bdd: tuple[BddManager, BddRef]) -> Dataset:
    return gen_grid_dataset(grid3, 50, seed=5, path_bdd=grid3_bdd)


class TestSplitTags:
    def test_sixty_twenty_twenty(self) -> None:
        tags = split_tags(1600)
        assert (tags == "train").sum() == 960
        assert (tags == "valid").sum() == 320
        assert (tags == "test").sum() == 320

    def test_generation_order(self) -> None:
        assert split_tags(10).tolist() == ["train"] * 6 + ["valid"] * 2 + ["test"] * 2

    def test_remainder_goes_to_test(self) -> None:
        tags = split_tags(7)
        assert (tags == "train").sum() == 4
        assert (tags == "valid").sum() == 1
        assert (tags == "test").sum() == 2


class TestShortestPath:
    def test_tie_break_prefers_smaller_node(self, grid3: GridSpec) -> None:
        path = shortest_path_edges(grid3.to_networkx(), 0, 4)
        # 0 → 1 → 4 rather than 0 → 3 → 4
        assert path == [grid3.edge_index[frozenset((0, 1))], grid3.edge_index[frozenset((1, 4))]]

    def test_length_is_distance(self, grid3: GridSpec) -> None:
        graph = grid3.to_networkx()
        assert len(shortest_path_edges(graph, 0, 8)) == nx.shortest_path_length(graph, 0, 8)


class TestGridDataset:
    def test_shapes(self, grid3: GridSpec, grid3_data: Dataset) -> None:
        assert len(grid3_data) == 50
        assert grid3_data.num_features == grid3.num_nodes + grid3.num_edges
        assert grid3_data.num_labels == grid3.num_edges
        assert grid3_data.labeled.all()
        assert grid3_data.meta["removed_per_example"] == 4

    def test_two_endpoints_and_removed_edges(self, grid3: GridSpec, grid3_data: Dataset) -> None:
        assert (grid3_data.features[:, : grid3.num_nodes].sum(axis=1) == 2).all()
        assert (grid3_data.features[:, grid3.num_nodes :].sum(axis=1) == 4).all()

    def test_labels_are_shortest_paths_on_damaged_grid(
        self, grid3: GridSpec, grid3_data: Dataset
    ) -> None:
        for features, labels in zip(grid3_data.features, grid3_data.labels, strict=True):
            graph = grid3.to_networkx()
            removed = np.flatnonzero(features[grid3.num_nodes :])
            graph.remove_edges_from(grid3.edges[int(e)] for e in removed)
            s, t = np.flatnonzero(features[: grid3.num_nodes])
            assert labels.sum() == nx.shortest_path_length(graph, int(s), int(t))
            assert not (labels.astype(bool) & features[grid3.num_nodes :].astype(bool)).any()

    def test_deterministic(self, grid3: GridSpec, grid3_bdd: tuple[BddManager, BddRef]) -> None:
        a = gen_grid_dataset(grid3, 10, seed=11, path_bdd=grid3_bdd)
        b = gen_grid_dataset(grid3, 10, seed=11, path_bdd=grid3_bdd)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_four_by_four_widths(self, grid4_bdd: tuple[BddManager, BddRef]) -> None:
        ds = gen_grid_dataset(GridSpec(4, 4), 10, seed=0, path_bdd=grid4_bdd)
        assert ds.num_features == 40
        assert ds.num_labels == 24


class TestToyDataset:
    def test_layout(self) -> None:
        ds = gen_toy_2d(seed=3)
        assert len(ds) == 204
        assert ds.labeled[:4].all()
        assert not ds.labeled[4:].any()
        assert (ds.labels.sum(axis=1) == 1).all()
        assert set(ds.split.tolist()) == {"train"}

    def test_labeled_classes_alternate(self) -> None:
        ds = gen_toy_2d(seed=0, n_labeled=4, n_unlabeled=10)
        assert ds.labels[:4, 1].tolist() == [0, 1, 0, 1]

    def test_needs_points(self) -> None:
        with pytest.raises(ValueError):
            gen_toy_2d(seed=0, n_labeled=0)


class TestDatasetSchema:
    def test_unknown_split(self) -> None:
        with pytest.raises(DatasetSchemaError, match="split"):
            Dataset(np.zeros((1, 1)), np.zeros((1, 1), dtype=np.int64), np.asarray(["dev"]), np.ones(1, dtype=bool))

    def test_non_binary_labels(self) -> None:
        with pytest.raises(DatasetSchemaError, match="binary"):
            Dataset(np.zeros((1, 1)), np.full((1, 1), 2), np.asarray(["train"]), np.ones(1, dtype=bool))

    def test_row_mismatch(self) -> None:
        with pytest.raises(DatasetSchemaError):
            Dataset(np.zeros((2, 1)), np.zeros((1, 1), dtype=np.int64), np.asarray(["train"]), np.ones(1, dtype=bool))

    def test_subset(self, grid3_data: Dataset) -> None:
        assert len(grid3_data.subset("train")) == 30
        assert len(grid3_data.subset("valid")) == 10
        assert len(grid3_data.subset("test")) == 10


class TestCsv:
    def test_header(self) -> None:
        ds = gen_toy_2d(seed=0, n_labeled=2, n_unlabeled=2)
        header = dataset_to_csv(ds).splitlines()[0]
        assert header == "f0,f1,y0,y1,split,labeled"

    def test_integer_features_stay_integer(self, grid3_data: Dataset) -> None:
        restored = dataset_from_csv(dataset_to_csv(grid3_data))
        assert restored.features.dtype == np.int64
        assert np.array_equal(restored.features, grid3_data.features)
        assert "labeled" not in dataset_to_csv(grid3_data).splitlines()[0]

    def test_float_features_are_exact(self) -> None:
        ds = gen_toy_2d(seed=4, n_labeled=2, n_unlabeled=6)
        restored = dataset_from_csv(dataset_to_csv(ds))
        assert np.array_equal(restored.features, ds.features)
        assert np.array_equal(restored.labeled, ds.labeled)

    def test_missing_split_column(self) -> None:
        with pytest.raises(DatasetSchemaError, match="split"):
            dataset_from_csv("f0,y0\n1,0\n")

    def test_ragged_row(self) -> None:
        with pytest.raises(DatasetSchemaError, match="Row 3"):
            dataset_from_csv("f0,y0,split\n1,0,train\n1,0\n")

    def test_non_numeric_cell(self) -> None:
        with pytest.raises(DatasetSchemaError, match="Non-numeric"):
            dataset_from_csv("f0,y0,split\n1,x,train\n")

    def test_empty_file(self) -> None:
        with pytest.raises(DatasetSchemaError):
            dataset_from_csv("")

    def test_save_and_load(self, tmp_path: Path) -> None:
        ds = gen_toy_2d(seed=2, n_labeled=2, n_unlabeled=4)
        target = tmp_path / "toy.csv"
        save_dataset(ds, target)
        assert (tmp_path / "toy.meta.json").exists()
        loaded = load_dataset(target)
        assert loaded.meta == ds.meta
        assert np.array_equal(loaded.labels, ds.labels)


class TestReadUtf8:
    def test_text(self, tmp_path: Path) -> None:
        path = tmp_path / "a.txt"
        path.write_bytes("p cnf 1 1\n".encode())
        assert read_utf8(path) == "p cnf 1 1\n"

    def test_invalid_bytes(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.csv"
        path.write_bytes(b"f0,y0,split\n\xff,1,train\n")
        with pytest.raises(EncodingError, match="byte 12"):
            read_utf8(path)
        with pytest.raises(EncodingError):
            load_dataset(path)
