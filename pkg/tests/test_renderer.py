"""Unit tests for the report renderer and artifact writers."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from semantic_loss.models import (
    AxiomCheck,
    AxiomReport,
    EpochRecord,
    FuzzyColumnSummary,
    FuzzySummary,
    Metrics,
    RunManifest,
    ToyResult,
)
from semantic_loss.renderer import (
    HISTORY_HEADER,
    dump_json,
    fmt,
    render_axioms,
    render_compile_stats,
    render_fuzzy,
    render_metrics,
    render_toy,
    save_json,
    write_csv,
    write_history,
    write_manifest,
)

# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------


@pytest.fixture()
def manifest() -> RunManifest:
    return RunManifest(
        command="train-grid",
        version="0.1.0",
        python="3.11.9",
        numpy="1.26.4",
        seeds={"data": 0, "train": 1},
        inputs={"grid.csv": "ab" * 32},
    )


@pytest.fixture()
def history() -> list[EpochRecord]:
    return [
        EpochRecord(epoch=1, train_loss=0.5),
        EpochRecord(
            epoch=2,
            train_loss=0.25,
            valid_loss=0.125,
            valid_metrics=Metrics(coherent=10.0, incoherent=80.0, constraint=40.0, rows=10),
        ),
    ]


@pytest.fixture()
def column() -> FuzzyColumnSummary:
    return FuzzyColumnSummary(mean=0.5, std=0.1, min=0.0, max=1.0)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


class TestDumpJson:
    def test_sorted_keys_and_trailing_newline(self) -> None:
        text = dump_json({"b": 1, "a": 2})
        assert text.endswith("}\n")
        assert text.index('"a"') < text.index('"b"')

    def test_models_inside_mapping(self) -> None:
        metrics = Metrics(coherent=1.0, incoherent=2.0, constraint=3.0)
        data = json.loads(dump_json({"test": metrics}))
        assert data["test"]["incoherent"] == 2.0

    def test_sequence(self) -> None:
        data = json.loads(dump_json([AxiomCheck(name="sum", instances=3), 4]))
        assert data[0]["name"] == "sum"
        assert data[1] == 4

    def test_non_ascii_kept(self) -> None:
        assert "Ł" in dump_json({"logic": "Łukasiewicz"})

    def test_deterministic(self, manifest: RunManifest) -> None:
        assert dump_json(manifest) == dump_json(manifest.model_copy())


class TestSaveJson:
    def test_creates_parent_dirs(self, tmp_path: Path) -> None:
        target = save_json(tmp_path / "deep" / "runs" / "out.json", {"x": 1})
        assert json.loads(target.read_text(encoding="utf-8")) == {"x": 1}

    def test_manifest(self, tmp_path: Path, manifest: RunManifest) -> None:
        target = write_manifest(tmp_path, manifest)
        assert target == tmp_path / "manifest.json"
        data = json.loads(target.read_text(encoding="utf-8"))
        assert data["command"] == "train-grid"
        assert data["seeds"] == {"data": 0, "train": 1}


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


class TestWriteCsv:
    def test_fmt_round_trips(self) -> None:
        value = 0.1 + 0.2
        assert float(fmt(value)) == value

    def test_rows(self, tmp_path: Path) -> None:
        target = write_csv(tmp_path / "t.csv", ("a", "b"), [(1, 0.5), ("x", 2.0)])
        assert target.read_text(encoding="utf-8") == "a,b\n1,0.5\nx,2\n"

    def test_history_blanks_missing_validation(self, tmp_path: Path, history: list[EpochRecord]) -> None:
        target = write_history(tmp_path / "history.csv", history)
        lines = target.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(HISTORY_HEADER)
        assert lines[1] == "1,0.5,,,,"
        assert lines[2] == "2,0.25,0.125,10,80,40"


# ---------------------------------------------------------------------------
# Console reports (smoke tests)
# ---------------------------------------------------------------------------


class TestRenderers:
    def test_axioms(self) -> None:
        report = AxiomReport(
            seed=7,
            checks=[
                AxiomCheck(name="monotonicity", instances=10),
                AxiomCheck(name="label-literal", instances=5, failures=1, max_error=0.2, detail="p=[0.3]"),
            ],
        )
        render_axioms(report)

    def test_metrics(self) -> None:
        render_metrics("Grid", {"baseline": Metrics(coherent=5.0, incoherent=80.0, constraint=7.0, rows=320)})

    def test_fuzzy(self, column: FuzzyColumnSummary) -> None:
        summary = FuzzySummary(
            n=3,
            samples=100,
            distribution="uniform",
            encoding1=column,
            encoding2=column,
            semantic_loss=column,
            differing_fraction=0.5,
            semantic_max_gap=0.0,
        )
        render_fuzzy([summary])

    def test_compile_stats(self) -> None:
        render_compile_stats({"bdd nodes": 12345, "order": "natural"})

    def test_toy(self) -> None:
        render_toy(
            [
                ToyResult(
                    label="semantic",
                    semantic_weight=1.0,
                    regularizer="semantic",
                    unlabeled_accuracy=0.95,
                    mean_entropy=0.1,
                    boundary=(1.0, -1.0, 0.0),
                )
            ]
        )
