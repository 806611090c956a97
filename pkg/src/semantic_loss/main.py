"""CLI entry point: compilation, loss evaluation, datasets, training runs and checks."""

from __future__ import annotations

import asyncio
import hashlib
import logging
import platform
import sys
from collections.abc import Callable, Sequence
from functools import wraps
from pathlib import Path
from typing import Any, NoReturn, TypeVar

import click
import numpy as np
import numpy.typing as npt
from pydantic import ValidationError

from semantic_loss import __version__
from semantic_loss.axioms import run_axiom_suite
from semantic_loss.circuit import Circuit, circuit_from_json, circuit_to_json, substitute
from semantic_loss.compiler import compile_formula, to_circuit
from semantic_loss.config import Settings, load_settings
from semantic_loss.data import Dataset, gen_grid_dataset, gen_toy_2d, load_dataset, read_utf8, save_dataset
from semantic_loss.encoders import (
    GridSpec,
    count_models,
    exactly_one,
    exactly_one_cnf,
    grid_path_bdd,
    total_order,
    total_order_formula,
)
from semantic_loss.engine import semantic_loss_batch, semantic_loss_grad_batch, wmc_batch
from semantic_loss.errors import AxiomCheckError, EncodingError, InputError, SemanticLossError
from semantic_loss.fuzzy import compare_encodings, fuzzy_eval
from semantic_loss.logic import Formula, parse_dimacs, parse_sexpr, to_sexpr
from semantic_loss.models import RunManifest, TrainConfig
from semantic_loss.pipeline import TrainedRun, fit, grid_task, pref_task, run_toy
from semantic_loss.preflib import download_preflib, load_preflib_soc
from semantic_loss.renderer import (
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

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])


def _setup_logging(level: str) -> None:
    numeric = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(
        level=numeric,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )
    if numeric > logging.DEBUG:
        logging.getLogger("httpx").setLevel(logging.WARNING)
        logging.getLogger("httpcore").setLevel(logging.WARNING)


def _fail(message: str, code: int = 1) -> NoReturn:
    logger.error(message)
    sys.exit(code)


def _handle_errors(fn: F) -> F:
    """Map library errors onto exit codes (3 input, 4 compute, 5 failed axiom checks)."""

    @wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except SemanticLossError as exc:
            _fail(f"{type(exc).__name__}: {exc}", exc.exit_code)
        except ValidationError as exc:
            _fail(f"Invalid value: {exc}", InputError.exit_code)
        except OSError as exc:
            _fail(f"File error: {exc}", InputError.exit_code)
        except UnicodeDecodeError as exc:
            _fail(f"{EncodingError.__name__}: {exc}", EncodingError.exit_code)

    return wrapper  # type: ignore[return-value]


def _settings(ctx: click.Context) -> Settings:
    settings = ctx.obj
    assert isinstance(settings, Settings)
    return settings


# ---------------------------------------------------------------------------
# Input helpers
# ---------------------------------------------------------------------------


def _read_text(path: str) -> str:
    if path == "-":
        return click.get_text_stream("stdin").read()
    return read_utf8(path)


def _read_circuit(path: str) -> Circuit:
    return circuit_from_json(_read_text(path))


def _parse_evidence(text: str | None) -> dict[int, int]:
    if not text:
        return {}
    evidence: dict[int, int] = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        try:
            if not sep:
                raise ValueError(item)
            evidence[int(key)] = int(value)
        except ValueError as exc:
            raise click.BadParameter(f"expected i=v pairs, got {item!r}") from exc
    return evidence


def _read_probs(source: str) -> npt.NDArray[np.float64]:
    """An inline comma list, or a CSV file with one vector per row."""
    path = Path(source)
    lines = read_utf8(path).splitlines() if path.is_file() else [source]
    rows = [line for line in lines if line.strip()]
    try:
        values = [[float(cell) for cell in row.split(",")] for row in rows]
    except ValueError as exc:
        raise click.BadParameter(f"probabilities must be numbers: {exc}") from exc
    if not values or len({len(r) for r in values}) != 1:
        raise click.BadParameter("every probability vector must have the same length")
    return np.asarray(values, dtype=np.float64)


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(
    command: str,
    settings: Settings,
    seeds: dict[str, int],
    inputs: Sequence[str | Path] = (),
    config: dict[str, Any] | None = None,
) -> RunManifest:
    return RunManifest(
        command=command,
        version=__version__,
        python=platform.python_version(),
        numpy=np.__version__,
        seeds=seeds,
        inputs={str(p): _sha256(p) for p in inputs},
        config=config if config is not None else settings.model_dump(mode="json"),
    )


def _emit(text: str) -> None:
    click.echo(text, nl=not text.endswith("\n"))


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON config file")
@click.option("--log-level", default=None, help="Logging level (default from config, INFO)")
@click.version_option(__version__)
@click.pass_context
def cli(ctx: click.Context, config_path: str | None, log_level: str | None) -> None:
    """Semantic loss: compile constraints, evaluate the loss, train with it."""
    try:
        settings = load_settings(config_path, {"log_level": log_level})
    except SemanticLossError as exc:
        _setup_logging(log_level or "INFO")
        _fail(str(exc), exc.exit_code)
    _setup_logging(settings.log_level)
    ctx.obj = settings


@cli.command("compile")
@click.option("--dimacs", "dimacs_path", type=click.Path(exists=True, dir_okay=False), help="DIMACS CNF file")
@click.option("--formula", help="S-expression constraint, e.g. '(or x1 (not x2))'")
@click.option("--universe", type=int, default=None, help="Universe size for --formula")
@click.option("--order", "strategy", type=click.Choice(["natural", "first-occurrence"]), default=None)
@click.option("--node-cap", type=int, default=None)
@click.option("-o", "--output", default="-", show_default=True, help="Circuit JSON destination")
@click.pass_context
@_handle_errors
def compile_cmd(
    ctx: click.Context,
    dimacs_path: str | None,
    formula: str | None,
    universe: int | None,
    strategy: str | None,
    node_cap: int | None,
    output: str,
) -> None:
    """Compile a constraint into a decomposable, deterministic circuit."""
    settings = _settings(ctx)
    if (dimacs_path is None) == (formula is None):
        raise click.UsageError("Give exactly one of --dimacs or --formula")
    f = parse_dimacs(_read_text(dimacs_path)) if dimacs_path else parse_sexpr(formula or "", universe)
    mgr, root = compile_formula(
        f,
        strategy=strategy or settings.variable_order,  # type: ignore[arg-type]
        node_cap=node_cap or settings.node_cap,
    )
    circuit = to_circuit(mgr, root, f.universe_size)
    render_compile_stats(
        {
            "variables": f.universe_size,
            "bdd nodes": mgr.size(root),
            "circuit nodes": circuit.size,
            "circuit edges": circuit.edge_count,
            "depth": circuit.depth,
            "models": mgr.model_count(root, f.universe_size),
        }
    )
    _write_output(output, circuit_to_json(circuit))


def _write_output(output: str, text: str) -> None:
    if output == "-":
        _emit(text)
    else:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        logger.info("Saved %s", output)


@cli.command("count")
@click.option("--circuit", "circuit_path", default="-", show_default=True)
@click.option("--evidence", default=None, help="Comma list of var=value")
@_handle_errors
def count_cmd(circuit_path: str, evidence: str | None) -> None:
    """Exact number of satisfying states (over the free variables when conditioned)."""
    circuit = _read_circuit(circuit_path)
    click.echo(str(count_models(circuit, _parse_evidence(evidence) or None)))


def _vector_command(
    circuit_path: str, p: str, fn: Callable[[Circuit, npt.NDArray[np.float64]], list[str]]
) -> None:
    circuit = _read_circuit(circuit_path)
    for line in fn(circuit, _read_probs(p)):
        click.echo(line)


@cli.command("wmc")
@click.option("--circuit", "circuit_path", default="-", show_default=True)
@click.option("--p", "p", required=True, help="Comma list or CSV file of probabilities")
@_handle_errors
def wmc_cmd(circuit_path: str, p: str) -> None:
    """Weighted model count of each probability vector."""
    _vector_command(circuit_path, p, lambda c, probs: [fmt(v) for v in wmc_batch(c, probs)])


@cli.command("loss")
@click.option("--circuit", "circuit_path", default="-", show_default=True)
@click.option("--p", "p", required=True, help="Comma list or CSV file of probabilities")
@click.option("--floor", is_flag=True, help="Floor the WMC at epsilon (training mode)")
@click.pass_context
@_handle_errors
def loss_cmd(ctx: click.Context, circuit_path: str, p: str, floor: bool) -> None:
    """Semantic loss −K·log WMC of each probability vector."""
    cfg = _settings(ctx).loss
    _vector_command(
        circuit_path,
        p,
        lambda c, probs: [fmt(v) for v in semantic_loss_batch(c, probs, cfg, floor=floor)],
    )


@cli.command("grad")
@click.option("--circuit", "circuit_path", default="-", show_default=True)
@click.option("--p", "p", required=True, help="Comma list or CSV file of probabilities")
@click.option("--floor", is_flag=True, help="Floor the WMC at epsilon (training mode)")
@click.pass_context
@_handle_errors
def grad_cmd(ctx: click.Context, circuit_path: str, p: str, floor: bool) -> None:
    """Gradient of the semantic loss, one comma-separated vector per input row."""
    cfg = _settings(ctx).loss

    def rows(c: Circuit, probs: npt.NDArray[np.float64]) -> list[str]:
        _, grad = semantic_loss_grad_batch(c, probs, cfg, floor=floor)
        return [",".join(fmt(v) for v in row) for row in grad]

    _vector_command(circuit_path, p, rows)


@cli.command("encode")
@click.option("--kind", type=click.Choice(["exactly-one", "total-order", "grid"]), required=True)
@click.option("--n", type=int, default=None, help="Variables (exactly-one) or items (total-order)")
@click.option("--rows", type=int, default=None)
@click.option("--cols", type=int, default=None)
@click.option("--evidence", default=None, help="Comma list of var=value to condition on")
@click.option("--format", "fmt_", type=click.Choice(["json", "sexpr"]), default="json", show_default=True)
@click.option("-o", "--output", default="-", show_default=True)
@click.pass_context
@_handle_errors
def encode_cmd(
    ctx: click.Context,
    kind: str,
    n: int | None,
    rows: int | None,
    cols: int | None,
    evidence: str | None,
    fmt_: str,
    output: str,
) -> None:
    """Emit a structured-output constraint as circuit JSON (or its formula)."""
    settings = _settings(ctx)
    if kind == "grid":
        if rows is None or cols is None:
            raise click.UsageError("--kind grid needs --rows and --cols")
        if fmt_ == "sexpr":
            raise click.UsageError("The grid constraint is only available as a circuit")
        g = GridSpec(rows, cols)
        mgr, root = grid_path_bdd(g, node_cap=settings.node_cap)
        circuit = to_circuit(mgr, root, g.universe_size)
    else:
        if n is None:
            raise click.UsageError(f"--kind {kind} needs --n")
        if fmt_ == "sexpr":
            formula: Formula = exactly_one_cnf(n) if kind == "exactly-one" else total_order_formula(n)
            _write_output(output, to_sexpr(formula))
            return
        circuit = exactly_one(n) if kind == "exactly-one" else total_order(n)
    ev = _parse_evidence(evidence)
    if ev:
        circuit = substitute(circuit, ev)
    logger.info("Encoded %s: %d nodes over %d variables", kind, circuit.size, circuit.universe_size)
    _write_output(output, circuit_to_json(circuit))


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


def _soc_path(settings: Settings, soc: str | None, download: bool) -> Path:
    path = Path(soc or settings.preflib_path)
    if download:
        logger.info("Downloading %s", settings.preflib_url)
        asyncio.run(download_preflib(settings.preflib_url, path, settings.preflib_sha256))
    if not path.is_file():
        raise click.UsageError(f"PrefLib file {path} not found (pass --soc or --download)")
    return path


@cli.command("gen-data")
@click.option("--task", type=click.Choice(["grid", "pref", "toy"]), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--count", type=int, default=None, help="Grid examples")
@click.option("--rows", type=int, default=None)
@click.option("--cols", type=int, default=None)
@click.option("--n-labeled", type=int, default=None)
@click.option("--n-unlabeled", type=int, default=None)
@click.option("--soc", type=click.Path(dir_okay=False), default=None, help="PrefLib SOC file")
@click.option("--download", is_flag=True, help="Fetch the PrefLib file first")
@click.pass_context
@_handle_errors
def gen_data_cmd(
    ctx: click.Context,
    task: str,
    out_dir: str | None,
    seed: int | None,
    count: int | None,
    rows: int | None,
    cols: int | None,
    n_labeled: int | None,
    n_unlabeled: int | None,
    soc: str | None,
    download: bool,
) -> None:
    """Generate (grid, toy) or ingest (pref) a dataset as CSV."""
    settings = _settings(ctx)
    target = Path(out_dir or settings.out_dir or ".")
    inputs: list[Path] = []
    if task == "grid":
        s = settings.grid
        g = GridSpec(rows or s.rows, cols or s.cols)
        used_seed = s.seed if seed is None else seed
        ds = gen_grid_dataset(g, count or s.count, used_seed)
    elif task == "pref":
        path = _soc_path(settings, soc, download)
        inputs.append(path)
        used_seed = settings.pref.seed if seed is None else seed
        ds = load_preflib_soc(path, used_seed)
    else:
        t = settings.toy
        used_seed = t.seed if seed is None else seed
        ds = gen_toy_2d(used_seed, n_labeled or t.n_labeled, n_unlabeled or t.n_unlabeled)
    csv_path = target / f"{task}.csv"
    save_dataset(ds, csv_path)
    write_manifest(target, _manifest(f"gen-data --task {task}", settings, {"data": used_seed}, inputs, ds.meta))
    click.echo(str(csv_path))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _train_config(base: TrainConfig, w: float | None, seed: int | None, epochs: int | None) -> TrainConfig:
    update: dict[str, Any] = {}
    if w is not None:
        update["semantic_weight"] = w
    if seed is not None:
        update["seed"] = seed
    if epochs is not None:
        update["max_epochs"] = epochs
    return TrainConfig.model_validate({**base.model_dump(), **update})


def _write_run(out: Path | None, run: TrainedRun, prefix: str = "") -> None:
    if out is None:
        return
    write_history(out / f"{prefix}history.csv", run.result.history)
    save_json(out / f"{prefix}metrics.json", run.result.test_metrics or {})
    save_json(out / f"{prefix}model.json", run.model.to_checkpoint())


def _train_structured(
    command: str,
    settings: Settings,
    task_builder: Callable[[], Any],
    data: Dataset,
    hidden: Sequence[int],
    cfg: TrainConfig,
    baseline: bool,
    out_dir: str | None,
    inputs: Sequence[Path],
) -> None:
    out = Path(out_dir) if out_dir else (Path(settings.out_dir) if settings.out_dir else None)
    logger.info("[Step 3/4] Training")
    task = task_builder()
    runs = [fit("semantic", task, data, hidden, cfg, settings.loss)]
    if baseline:
        runs.insert(0, fit("baseline", task, data, hidden, cfg.model_copy(update={"semantic_weight": 0.0}), settings.loss))

    logger.info("[Step 4/4] Writing results")
    render_metrics(command, {r.label: r.result.test_metrics for r in runs if r.result.test_metrics})
    for r in runs:
        _write_run(out, r, "" if r.label == "semantic" else f"{r.label}_")
    if out is not None:
        write_manifest(out, _manifest(command, settings, {"train": cfg.seed, "data": int(data.meta.get("seed", 0))}, inputs))
    main = runs[-1].result.test_metrics
    _emit(dump_json(main) if main is not None else "{}")


@cli.command("train-grid")
@click.option("--w", "w", type=float, default=None, help="Semantic loss weight")
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None, help="Epoch cap")
@click.option("--count", type=int, default=None)
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Dataset CSV from gen-data")
@click.option("--baseline", is_flag=True, help="Also train the w = 0 model")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.pass_context
@_handle_errors
def train_grid_cmd(
    ctx: click.Context,
    w: float | None,
    seed: int | None,
    epochs: int | None,
    count: int | None,
    data_path: str | None,
    baseline: bool,
    out_dir: str | None,
) -> None:
    """Shortest-path prediction on damaged grids (5×50 MLP)."""
    settings = _settings(ctx)
    s = settings.grid
    cfg = _train_config(s.train, w, seed, epochs)
    g = GridSpec(s.rows, s.cols)
    logger.info("[Step 1/4] Compiling the %d×%d simple-path constraint", g.rows, g.cols)
    path_bdd = grid_path_bdd(g, node_cap=settings.node_cap)
    logger.info("[Step 2/4] Preparing data")
    inputs: list[Path] = []
    if data_path:
        data = load_dataset(data_path)
        inputs.append(Path(data_path))
    else:
        data = gen_grid_dataset(g, count or s.count, s.seed if seed is None else seed, path_bdd=path_bdd)
    _train_structured(
        "train-grid", settings, lambda: grid_task(g, path_bdd), data, s.hidden, cfg, baseline, out_dir, inputs
    )


@cli.command("train-pref")
@click.option("--w", "w", type=float, default=None, help="Semantic loss weight")
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None, help="Epoch cap")
@click.option("--soc", type=click.Path(dir_okay=False), default=None, help="PrefLib SOC file")
@click.option("--download", is_flag=True, help="Fetch the PrefLib file first")
@click.option("--baseline", is_flag=True, help="Also train the w = 0 model")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.pass_context
@_handle_errors
def train_pref_cmd(
    ctx: click.Context,
    w: float | None,
    seed: int | None,
    epochs: int | None,
    soc: str | None,
    download: bool,
    baseline: bool,
    out_dir: str | None,
) -> None:
    """Sushi preference ranking prediction (3×25 MLP)."""
    settings = _settings(ctx)
    cfg = _train_config(settings.pref.train, w, seed, epochs)
    logger.info("[Step 1/4] Locating PrefLib data")
    path = _soc_path(settings, soc, download)
    logger.info("[Step 2/4] Loading %s", path)
    data = load_preflib_soc(path, settings.pref.seed if seed is None else seed)
    _train_structured(
        "train-pref", settings, pref_task, data, settings.pref.hidden, cfg, baseline, out_dir, [path]
    )


@cli.command("train-toy")
@click.option("--w", "w", type=float, default=None, help="Regularizer weight")
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--n-labeled", type=int, default=None)
@click.option("--n-unlabeled", type=int, default=None)
@click.option("--regularizer", "regularizers", multiple=True, type=click.Choice(["semantic", "entropy"]), help="Repeatable; default semantic")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.pass_context
@_handle_errors
def train_toy_cmd(
    ctx: click.Context,
    w: float | None,
    seed: int | None,
    epochs: int | None,
    n_labeled: int | None,
    n_unlabeled: int | None,
    regularizers: tuple[str, ...],
    out_dir: str | None,
) -> None:
    """Linear classifier on the 2D toy set, without and with the regularizer."""
    settings = _settings(ctx)
    t = settings.toy
    cfg = _train_config(t.train, w, seed, epochs)
    data_seed = t.seed if seed is None else seed
    data = gen_toy_2d(data_seed, n_labeled or t.n_labeled, n_unlabeled or t.n_unlabeled)
    results = run_toy(data, cfg, regularizers or ("semantic",), settings.loss)
    render_toy(results)
    out = Path(out_dir) if out_dir else (Path(settings.out_dir) if settings.out_dir else None)
    if out is not None:
        save_dataset(data, out / "toy.csv")
        write_csv(
            out / "boundaries.csv",
            ("model", "w", "w1", "w2", "b"),
            ([r.label, r.semantic_weight, *r.boundary] for r in results),
        )
        write_manifest(out, _manifest("train-toy", settings, {"train": cfg.seed, "data": data_seed}))
    _emit(dump_json(results))


# ---------------------------------------------------------------------------
# Fuzzy logic and axioms
# ---------------------------------------------------------------------------


@cli.command("fuzzy")
@click.option("--compare", is_flag=True, help="Compare the two exactly-one encodings")
@click.option("--formula", help="S-expression to evaluate under Łukasiewicz logic")
@click.option("--p", "p", default=None, help="Truth values for --formula")
@click.option("--n", type=int, default=4, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.pass_context
@_handle_errors
def fuzzy_cmd(
    ctx: click.Context,
    compare: bool,
    formula: str | None,
    p: str | None,
    n: int,
    samples: int,
    seed: int,
    out_dir: str | None,
) -> None:
    """Fuzzy truth values, or the syntax-sensitivity comparison with --compare."""
    settings = _settings(ctx)
    if not compare:
        if formula is None or p is None:
            raise click.UsageError("Give --compare, or --formula with --p")
        probs = _read_probs(p)
        f = parse_sexpr(formula, probs.shape[1])
        for value in np.atleast_1d(fuzzy_eval(f, probs)):
            click.echo(fmt(value))
        return
    if n < 2:
        raise click.BadParameter("--n must be at least 2", param_hint="--n")
    result = compare_encodings(n, samples, seed)
    render_fuzzy(result.summaries)
    out = Path(out_dir) if out_dir else (Path(settings.out_dir) if settings.out_dir else None)
    if out is not None:
        write_csv(
            out / "fuzzy_rows.csv",
            ("sample_id", "distribution", "encoding1", "encoding2", "semantic_loss"),
            result.rows,
        )
        save_json(out / "fuzzy_summary.json", result.summaries)
        write_manifest(out, _manifest("fuzzy --compare", settings, {"fuzzy": seed}, config={"n": n, "samples": samples}))
    _emit(dump_json(result.summaries))


@cli.command("axioms")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--instances", type=int, default=100, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.pass_context
@_handle_errors
def axioms_cmd(ctx: click.Context, seed: int, instances: int, out_dir: str | None) -> None:
    """Seeded property checks of the loss; exits 5 when any check fails."""
    report = run_axiom_suite(seed, instances)
    render_axioms(report)
    if out_dir:
        save_json(Path(out_dir) / "axioms.json", report)
        write_manifest(out_dir, _manifest("axioms", _settings(ctx), {"axioms": seed}, config={"instances": instances}))
    _emit(dump_json(report))
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        raise AxiomCheckError(f"Axiom suite failed: {', '.join(failed)}")


