"""Rich-powered reports on stderr and deterministic artifact writers."""

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

from pydantic import BaseModel
from rich import box
from rich.console import Console
from rich.table import Table

from semantic_loss.models import (
    AxiomReport,
    EpochRecord,
    FuzzySummary,
    Metrics,
    RunManifest,
    ToyResult,
)

logger = logging.getLogger(__name__)
console = Console(stderr=True)


def fmt(value: float) -> str:
    """Shortest text that round-trips a float (17 significant digits)."""
    return format(float(value), ".17g")


def _status(passed: bool) -> str:
    return "[green]pass[/green]" if passed else "[bold red]FAIL[/bold red]"


def render_axioms(report: AxiomReport) -> None:
    table = Table(title=f"Axiom suite (seed {report.seed})", box=box.SIMPLE_HEAD)
    table.add_column("check")
    table.add_column("status")
    table.add_column("failures", justify="right")
    table.add_column("max error", justify="right")
    table.add_column("first failure", style="dim")
    for check in report.checks:
        table.add_row(
            check.name,
            _status(check.passed),
            f"{check.failures}/{check.instances}",
            f"{check.max_error:.3g}",
            check.detail,
        )
    console.print(table)
    verdict = "[green]all checks passed[/green]" if report.passed else "[bold red]failures found[/bold red]"
    console.print(f"  {verdict}")


def render_metrics(title: str, rows: Mapping[str, Metrics]) -> None:
    table = Table(title=title, box=box.SIMPLE_HEAD)
    table.add_column("model")
    table.add_column("coherent %", justify="right")
    table.add_column("incoherent %", justify="right")
    table.add_column("constraint %", justify="right")
    table.add_column("rows", justify="right", style="dim")
    for name, m in rows.items():
        table.add_row(name, f"{m.coherent:.2f}", f"{m.incoherent:.2f}", f"{m.constraint:.2f}", str(m.rows))
    console.print(table)


def render_fuzzy(summaries: Sequence[FuzzySummary]) -> None:
    table = Table(title="Exactly-one encodings under Łukasiewicz logic", box=box.SIMPLE_HEAD)
    for column in ("p", "n", "enc1 mean", "enc2 mean", "SL mean", "differ %", "SL gap"):
        table.add_column(column, justify="right" if column != "p" else "left")
    for s in summaries:
        table.add_row(
            s.distribution,
            str(s.n),
            f"{s.encoding1.mean:.4f}",
            f"{s.encoding2.mean:.4f}",
            f"{s.semantic_loss.mean:.4f}",
            f"{100 * s.differing_fraction:.1f}",
            f"{s.semantic_max_gap:.2g}",
        )
    console.print(table)


def render_compile_stats(stats: Mapping[str, Any]) -> None:
    table = Table(box=box.SIMPLE, show_header=False, pad_edge=False, title="Compilation")
    table.add_column("key", style="dim", width=20)
    table.add_column("value", justify="right")
    for key, value in stats.items():
        table.add_row(key, f"{value:,}" if isinstance(value, int) else str(value))
    console.print(table)


def render_toy(results: Sequence[ToyResult]) -> None:
    table = Table(title="Semi-supervised toy task", box=box.SIMPLE_HEAD)
    table.add_column("model")
    table.add_column("w", justify="right")
    table.add_column("unlabeled acc %", justify="right")
    table.add_column("mean entropy", justify="right")
    table.add_column("boundary w1·x + w2·y + b", style="dim")
    for r in results:
        w1, w2, b = r.boundary
        table.add_row(
            r.label,
            f"{r.semantic_weight:g}",
            f"{100 * r.unlabeled_accuracy:.1f}",
            f"{r.mean_entropy:.4f}",
            f"{w1:+.3f}, {w2:+.3f}, {b:+.3f}",
        )
    console.print(table)


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def dump_json(payload: BaseModel | Mapping[str, Any] | Sequence[Any]) -> str:
    """Sorted-key JSON; pydantic models go through ``model_dump``."""
    if isinstance(payload, BaseModel):
        data: Any = payload.model_dump(mode="json")
    elif isinstance(payload, Mapping):
        data = {k: v.model_dump(mode="json") if isinstance(v, BaseModel) else v for k, v in payload.items()}
    else:
        data = [v.model_dump(mode="json") if isinstance(v, BaseModel) else v for v in payload]
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def save_json(path: str | Path, payload: BaseModel | Mapping[str, Any] | Sequence[Any]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dump_json(payload), encoding="utf-8")
    logger.info("Saved %s", target)
    return target


def write_manifest(out_dir: str | Path, manifest: RunManifest) -> Path:
    return save_json(Path(out_dir) / "manifest.json", manifest)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    logger.info("Saved %s", target)
    return target


HISTORY_HEADER = ("epoch", "train_loss", "valid_loss", "coherent", "incoherent", "constraint")


def write_history(path: str | Path, history: Sequence[EpochRecord]) -> Path:
    def row(r: EpochRecord) -> list[Any]:
        m = r.valid_metrics
        return [
            r.epoch,
            r.train_loss,
            "" if r.valid_loss is None else r.valid_loss,
            "" if m is None else m.coherent,
            "" if m is None else m.incoherent,
            "" if m is None else m.constraint,
        ]

    return write_csv(path, HISTORY_HEADER, (row(r) for r in history))
