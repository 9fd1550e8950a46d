"""
The ``kcengage`` command line.

Exit codes: 0 on success, 1 on a usage error, 2 on a data error.
"""

import argparse
import asyncio
import dataclasses
import importlib
import json
import logging
import os
import sys
import tomllib
from collections.abc import Callable, Coroutine, Sequence
from pathlib import Path
from typing import Any, NamedTuple, NoReturn

from . import settings
from .annotate import (
    annotate_fragments,
    load_candidates,
    load_link_graph,
    write_annotations,
)
from .config import ConfigValue, ModelConfig, dump_config, load_config
from .evaluate import (
    METRICS,
    EvalReport,
    ModelSpec,
    compute_metrics,
    evaluate_dataset,
    grid_sweep,
    load_report,
    paired_learner_metric,
    paired_ttest,
    time_model,
    write_report,
)
from .events import KC_TITLES_FILE, ColumnLayout, load_kc_titles, load_splits
from .fetch import fetch_dataset
from .learners import (
    LearnerContext,
    build_user_jaccard_table,
    learner_names,
    lookup_learner,
)
from .models import (
    DataError,
    Dataset,
    DatasetStats,
    KcEngageError,
    UsageError,
    dataset_stats,
    merge_datasets,
)
from .report import PLOT_KINDS, PlotSpec, render_snapshot
from .simulate import SyntheticConfig, generate, write_synthetic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

try:
    uvloop = importlib.import_module("uvloop")
except ModuleNotFoundError:
    aio_run: Callable[[Coroutine[Any, Any, Any]], Any] = asyncio.run
else:
    aio_run = uvloop.run


class Arg(NamedTuple):
    flags: tuple[str, ...]
    options: dict[str, Any]


def arg(*flags: str, **options: Any) -> Arg:
    return Arg(flags, options)


Handler = Callable[[argparse.Namespace], None]


@dataclasses.dataclass(frozen=True, slots=True)
class Command:
    name: str
    handler: Handler
    summary: str
    args: tuple[Arg, ...]


_commands: dict[str, Command] = {}


def cli_command(*args: Arg) -> Callable[[Handler], Handler]:
    """Register ``cmd_<name>`` as the ``<name>`` subcommand.

    The first docstring line becomes the subcommand help.
    """

    def inner(f: Handler) -> Handler:
        name = f.__name__.removeprefix("cmd_").replace("_", "-")
        if name in _commands:
            msg = f"command {name!r} registered twice"
            raise RuntimeError(msg)
        doc = (f.__doc__ or "").strip().splitlines()
        _commands[name] = Command(name, f, doc[0] if doc else "", args)
        return f

    return inner


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        msg = f"{self.prog}: {message}"
        raise UsageError(msg)


class Console:
    """Human summary on stdout, bold headings unless NO_COLOR is set."""

    def __init__(self) -> None:
        self.color = sys.stdout.isatty() and not os.environ.get("NO_COLOR")

    def heading(self, text: str) -> None:
        print(f"\033[1m{text}\033[0m" if self.color else text)

    def line(self, text: str = "") -> None:
        print(text)


console = Console()


def parse_value(text: str) -> ConfigValue:
    """TOML scalar if it parses as one, the raw text otherwise."""
    try:
        value = tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text
    if not isinstance(value, bool | int | float | str):
        msg = f"{text!r} is not a scalar value"
        raise UsageError(msg)
    return value


def parse_assignment(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip() or not value.strip():
        msg = f"expected KEY=VALUE, got {text!r}"
        raise UsageError(msg)
    return key.strip(), value.strip()


def parse_grid(items: Sequence[str]) -> dict[str, list[ConfigValue]]:
    grid: dict[str, list[ConfigValue]] = {}
    for item in items:
        key, values = parse_assignment(item)
        grid[key] = [parse_value(v.strip()) for v in values.split(",") if v.strip()]
    return grid


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        msg = f"not an integer: {text!r}"
        raise argparse.ArgumentTypeError(msg) from None
    if value < 1:
        msg = f"must be at least 1, got {value}"
        raise argparse.ArgumentTypeError(msg)
    return value


DATA_ARGS = (
    arg("--data-dir", type=Path, default=settings.app.data_dir, help="dataset dir"),
    arg("--header", action="store_true", help="CSV files start with a header row"),
    arg(
        "--max-kcs",
        type=_positive_int,
        default=None,
        help="keep only the first N ranked KCs per fragment",
    ),
)
MODEL_ARGS = (
    arg("--model", default="novelty", help=f"one of: {', '.join(learner_names())}"),
    arg("--config", type=Path, default=None, help="TOML hyperparameter file"),
    arg(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one hyperparameter, e.g. ink.tau=0.5",
    ),
)
JOBS_ARG = arg(
    "--jobs", type=_positive_int, default=settings.app.jobs, help="worker processes"
)
SKIP_FIRST_ARG = arg(
    "--skip-first",
    action="store_true",
    help="do not score the first event of each learner",
)


def _layout(ns: argparse.Namespace) -> ColumnLayout:
    return ColumnLayout(header=ns.header, max_kcs=ns.max_kcs)


def _model_config(ns: argparse.Namespace) -> ModelConfig:
    lookup_learner(ns.model)
    config = load_config(ns.config)
    overrides: dict[str, ConfigValue] = {"model": ns.model}
    for item in ns.overrides:
        key, value = parse_assignment(item)
        overrides[key] = parse_value(value)
    return config.with_overrides(overrides)


def _model_spec(
    ns: argparse.Namespace, train: Dataset, *, track_history: bool = False
) -> ModelSpec:
    config = _model_config(ns)
    table = build_user_jaccard_table(train) if ns.model == "jaccard-u" else None
    return ModelSpec(ns.model, config, LearnerContext(table, track_history))


def _pick_split(ns: argparse.Namespace) -> tuple[Dataset, Dataset]:
    """Training split and the split named by ``--split``."""
    train, test = load_splits(ns.data_dir, _layout(ns))
    return train, test if ns.split == "test" else train


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        msg = f"cannot write {path}: {e.strerror}"
        raise DataError(msg) from e


def _print_stats(name: str, stats: DatasetStats) -> None:
    console.heading(name)
    console.line(f"  events      {stats.n_events}")
    console.line(f"  learners    {stats.n_learners}")
    console.line(f"  lectures    {stats.n_lectures}")
    console.line(f"  videos      {stats.n_videos}")
    console.line(f"  fragments   {stats.n_fragments}")
    console.line(f"  frag/video  {stats.fragments_per_video:.2f}")
    console.line(f"  positive    {stats.positive_rate:.4f}")
    hist = ", ".join(f"{k}: {v}" for k, v in stats.session_histogram.items())
    console.line(f"  sessions    {hist}")


def _print_report(model: str, report: EvalReport) -> None:
    console.heading(f"{model}: {report.n_learners} learners, {report.n_events} events")
    for name, m in (("micro", report.micro), ("macro", report.macro)):
        values = "  ".join(f"{k} {getattr(m, k):.4f}" for k in METRICS)
        console.line(f"  {name}  {values}")


@cli_command(
    *DATA_ARGS[:1],
    arg("--url", default=settings.fetch.url, help="base URL of the dataset files"),
    arg("--offline", action="store_true", help="only verify local files"),
    arg("--force", action="store_true", help="download even if files are intact"),
)
def cmd_fetch(ns: argparse.Namespace) -> None:
    """Download the PEEKC train and test files and record their checksums."""
    result = aio_run(
        fetch_dataset(ns.data_dir, ns.url, offline=ns.offline, force=ns.force)
    )
    for path in result.downloaded:
        console.line(f"downloaded {path}")
    for path in result.skipped:
        console.line(f"intact     {path}")


@cli_command(
    *DATA_ARGS,
    arg("--out", type=Path, default=None, help="write statistics as JSON here"),
)
def cmd_validate(ns: argparse.Namespace) -> None:
    """Parse both splits, check they are disjoint and print dataset statistics."""
    train, test = load_splits(ns.data_dir, _layout(ns))
    stats = {
        "train": dataset_stats(train),
        "test": dataset_stats(test),
        "all": dataset_stats(merge_datasets(train, test)),
    }
    for name, s in stats.items():
        _print_stats(name, s)
    if ns.out is not None:
        write_report({k: s._asdict() for k, s in stats.items()}, ns.out)


@cli_command(
    arg("candidates", type=Path, help="CSV of fragment_id,kc_id,pagerank,cosine"),
    arg("--links", type=Path, default=None, help="CSV of concept_id,inlink_id"),
    arg(
        "--total-concepts",
        type=_positive_int,
        default=None,
        help="size of the concept universe for relatedness",
    ),
    arg("--top-n", type=_positive_int, default=settings.app.top_n, help="KCs kept"),
    arg("--out", type=Path, default=Path("annotations.csv"), help="output CSV"),
)
def cmd_annotate(ns: argparse.Namespace) -> None:
    """Rank candidate knowledge components of each fragment."""
    graph = (
        load_link_graph(ns.links, ns.total_concepts) if ns.links is not None else None
    )
    annotations = annotate_fragments(load_candidates(ns.candidates), ns.top_n, graph)
    write_annotations(annotations, ns.out)
    console.line(f"{len(annotations)} fragments annotated into {ns.out}")


@cli_command(
    arg("--out", type=Path, default=Path("synthetic"), help="output directory"),
    arg("--learners", type=_positive_int, default=1000, help="synthetic learners"),
    arg("--events", type=_positive_int, default=50, help="events per learner"),
    arg("--kcs", type=_positive_int, default=10, help="knowledge components"),
    arg("--fragments", type=_positive_int, default=200, help="distinct fragments"),
    arg("--seed", type=int, default=settings.app.seed, help="random seed"),
    arg("--header", action="store_true", help="write a header row"),
)
def cmd_simulate(ns: argparse.Namespace) -> None:
    """Generate a synthetic dataset from known skills under the Novelty model."""
    config = SyntheticConfig(
        n_learners=ns.learners,
        events_per_learner=ns.events,
        n_kcs=ns.kcs,
        n_fragments=ns.fragments,
        seed=ns.seed,
    )
    data = generate(config)
    for path in write_synthetic(data, ns.out, ColumnLayout(header=ns.header)):
        console.line(f"wrote {path}")


@cli_command(
    *DATA_ARGS,
    *MODEL_ARGS,
    JOBS_ARG,
    SKIP_FIRST_ARG,
    arg("--split", choices=("train", "test"), default="test", help="split scored"),
    arg("--report", type=Path, default=None, help="report JSON path"),
    arg(
        "--export-states",
        type=Path,
        default=None,
        metavar="DIR",
        help="write each learner's final state as JSON",
    ),
)
def cmd_evaluate(ns: argparse.Namespace) -> None:
    """Replay a split with one model and write a metrics report."""
    train, target = _pick_split(ns)
    spec = _model_spec(ns, train, track_history=ns.export_states is not None)
    results = evaluate_dataset(spec, target, ns.jobs, skip_first=ns.skip_first)
    report = compute_metrics(results)
    path = ns.report or settings.app.report_dir / f"{ns.model}.json"
    write_report(report.to_json(ns.model, spec.config), path)
    _print_report(ns.model, report)
    console.line(f"report written to {path}")
    if ns.export_states is not None:
        exported = 0
        for lp in results:
            if lp.snapshot is not None:
                out = ns.export_states / f"{lp.user_id}.json"
                _write(out, json.dumps(lp.snapshot) + "\n")
                exported += 1
        console.line(f"{exported} learner states exported to {ns.export_states}")


@cli_command(
    *DATA_ARGS,
    *MODEL_ARGS,
    JOBS_ARG,
    SKIP_FIRST_ARG,
    arg(
        "--grid",
        action="append",
        default=[],
        metavar="KEY=V1,V2,...",
        help="values tried for one hyperparameter",
    ),
    arg("--objective", choices=METRICS, default="f1", help="micro metric maximised"),
    arg("--out", type=Path, default=Path("best.toml"), help="best config TOML"),
    arg("--report", type=Path, default=None, help="write the sweep table as JSON"),
)
def cmd_sweep(ns: argparse.Namespace) -> None:
    """Grid-search hyperparameters on the training split."""
    if not ns.grid:
        msg = "sweep needs at least one --grid KEY=V1,V2,..."
        raise UsageError(msg)
    train, _ = load_splits(ns.data_dir, _layout(ns))
    spec = _model_spec(ns, train)
    result = grid_sweep(
        spec,
        parse_grid(ns.grid),
        train,
        ns.objective,
        ns.jobs,
        skip_first=ns.skip_first,
    )
    _write(ns.out, dump_config(result.best_config))
    console.heading(f"{len(result.table)} grid points")
    for row in result.table:
        params = ", ".join(f"{k}={v}" for k, v in row.params.items())
        score = getattr(row.metrics, ns.objective)
        console.line(f"  {params}  {ns.objective} {score:.4f}")
    console.line(f"best {ns.objective} {result.best_score:.4f} written to {ns.out}")
    if ns.report is not None:
        table = [{**row.params, **row.metrics._asdict()} for row in result.table]
        write_report({"best": result.best, "table": table}, ns.report)


@cli_command(
    arg("state", type=Path, help="exported learner state JSON"),
    arg("--kind", choices=PLOT_KINDS, default="bar", help="plot type"),
    arg("--top-k", type=_positive_int, default=15, help="KCs shown"),
    arg("--kc", type=int, default=None, help="KC of a line plot"),
    arg(
        "--titles", type=Path, default=None, help=f"KC titles CSV ({KC_TITLES_FILE})"
    ),
    arg("--title", default="", help="plot title"),
    arg("--out", type=Path, default=None, help="SVG path (default: STATE.svg)"),
)
def cmd_visualize(ns: argparse.Namespace) -> None:
    """Render an exported learner state as an SVG chart."""
    try:
        snapshot = json.loads(ns.state.read_text(encoding="utf-8"))
    except OSError as e:
        msg = f"cannot read {ns.state}: {e.strerror}"
        raise DataError(msg) from e
    except json.JSONDecodeError as e:
        msg = f"{ns.state} is not JSON: {e}"
        raise DataError(msg) from e
    titles = load_kc_titles(ns.titles) if ns.titles is not None else None
    spec = PlotSpec(kind=ns.kind, top_k=ns.top_k, title=ns.title)
    out = ns.out or ns.state.with_suffix(".svg")
    _write(out, render_snapshot(snapshot, spec, titles, ns.kc))
    console.line(f"wrote {out}")


@cli_command(
    *DATA_ARGS,
    *MODEL_ARGS,
    arg("--split", choices=("train", "test"), default="test", help="split timed"),
    arg("--max-events", type=_positive_int, default=10_000, help="events timed"),
)
def cmd_bench(ns: argparse.Namespace) -> None:
    """Time fit, predict_proba and predict per event."""
    train, target = _pick_split(ns)
    timing = time_model(_model_spec(ns, train), target, ns.max_events)
    console.heading(f"{ns.model}: seconds per event over {timing.n_events} events")
    console.line(f"  fit            {timing.fit}")
    console.line(f"  predict_proba  {timing.predict_proba}")
    console.line(f"  predict        {timing.predict}")


@cli_command(
    arg("report_a", type=Path, help="report of the model expected to be better"),
    arg("report_b", type=Path, help="report of the reference model"),
    arg("--metric", choices=METRICS, default="f1", help="per-learner metric"),
)
def cmd_compare(ns: argparse.Namespace) -> None:
    """One-tailed paired t-test over the learners two reports share."""
    a, b = paired_learner_metric(
        load_report(ns.report_a), load_report(ns.report_b), ns.metric
    )
    result = paired_ttest(a, b)
    console.heading(f"{ns.metric}: {len(a)} paired learners")
    console.line(f"  t = {result.t_stat:.4f}  p = {result.p_value:.4g}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="kcengage",
        description="Learner engagement models over knowledge components.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {settings.__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in sorted(_commands):
        command = _commands[name]
        p = sub.add_parser(
            name,
            help=command.summary,
            description=command.summary,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        for a in command.args:
            p.add_argument(*a.flags, **a.options)
        p.set_defaults(handler=command.handler)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        ns.handler(ns)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KcEngageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK
