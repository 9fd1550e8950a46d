"""
Static SVG views of an exported learner state, drawn with matplotlib.

Every data mark carries a gid (``bar-<kc>``, ``whisker-<kc>``, ``dot-<kc>``,
``bubble-<kc>``, ``mean-line``, ``band``) that the SVG backend writes as the
id of the mark's group, so a document can be parsed back and checked against
the state it encodes. Output is byte-stable for the same input.
"""

import dataclasses
import io
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from typing import Any, Literal

import matplotlib as mpl
from matplotlib.axes import Axes
from matplotlib.figure import Figure

from .models import KcEngageError
from .skills import EmptyStateError, ExportRow, HistoryPoint, rows_from_snapshot

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
Z_95 = 1.96
FILL = "#1f6fb4"
# one SVG point per pixel of the requested size
DPI = 72

SVG_RC: dict[str, Any] = {
    "svg.hashsalt": "kcengage",
    "svg.fonttype": "none",
    "path.simplify": False,
}

PlotKind = Literal["bar", "dot", "bubble", "line"]
PLOT_KINDS: tuple[PlotKind, ...] = ("bar", "dot", "bubble", "line")


class EmptyHistoryError(KcEngageError):
    pass


@dataclasses.dataclass(frozen=True, slots=True)
class PlotSpec:
    kind: PlotKind = "bar"
    top_k: int = 15
    width: int = 720
    height: int = 400
    title: str = ""

    def __post_init__(self) -> None:
        if self.kind not in PLOT_KINDS:
            msg = f"plot kind must be one of {PLOT_KINDS}, got {self.kind!r}"
            raise ValueError(msg)
        if self.top_k < 1 or self.width < 1 or self.height < 1:
            msg = "top_k, width and height must be positive"
            raise ValueError(msg)


def confidence_interval(mean: float, variance: float | None) -> tuple[float, float]:
    if variance is None:
        return mean, mean
    half = Z_95 * math.sqrt(variance)
    return mean - half, mean + half


def _label(kc_id: int, kc_titles: Mapping[int, str] | None) -> str:
    if kc_titles and (title := kc_titles.get(kc_id)):
        return title
    return f"KC {kc_id}"


def _render(spec: PlotSpec, draw: Callable[[Axes], None]) -> str:
    with mpl.rc_context(SVG_RC):
        fig = Figure(
            figsize=(spec.width / DPI, spec.height / DPI), dpi=DPI, layout="constrained"
        )
        fig.set_gid(f"plot-{spec.kind}")
        ax = fig.add_subplot()
        if spec.title:
            ax.set_title(spec.title, gid="title")
        draw(ax)
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    logger.debug("rendered %s plot, %d bytes", spec.kind, buffer.tell())
    return buffer.getvalue()


def _errorbar(ax: Axes, x: float, row: ExportRow, fmt: str) -> None:
    """Draw the 95% whisker of ``row`` and, unless fmt is "none", its marker."""
    low, high = confidence_interval(row.mean, row.variance)
    yerr = None if row.variance is None else [[row.mean - low], [high - row.mean]]
    container = ax.errorbar(
        [x], [row.mean], yerr=yerr, fmt=fmt, color=FILL, ecolor="black", capsize=3
    )
    data_line, _, bar_lines = container.lines
    if data_line is not None:
        data_line.set_gid(f"dot-{row.kc_id}")
    for whisker in bar_lines:
        whisker.set_gid(f"whisker-{row.kc_id}")


def _categorical(
    rows: Sequence[ExportRow],
    spec: PlotSpec,
    kc_titles: Mapping[int, str] | None,
    mark: Callable[[Axes, Sequence[ExportRow], float], None],
) -> str:
    if not rows:
        msg = "nothing to plot"
        raise EmptyStateError(msg)
    rows = list(rows[: spec.top_k])
    bounds = [b for r in rows for b in confidence_interval(r.mean, r.variance)]
    lo, hi = min(bounds), max(bounds)
    # bars rise from just below the lowest whisker
    base = lo - 0.05 * ((hi - lo) or 1.0)

    def draw(ax: Axes) -> None:
        mark(ax, rows, base)
        ax.set_xticks(
            range(len(rows)),
            labels=[_label(r.kc_id, kc_titles) for r in rows],
            rotation=30,
            ha="right",
        )
        ax.set_xlabel("knowledge component")
        ax.set_ylabel("skill mean")

    return _render(spec, draw)


def render_bar(
    rows: Sequence[ExportRow],
    spec: PlotSpec,
    kc_titles: Mapping[int, str] | None = None,
) -> str:
    def bars(ax: Axes, rows: Sequence[ExportRow], base: float) -> None:
        heights = [r.mean - base for r in rows]
        patches = ax.bar(range(len(rows)), heights, width=0.7, bottom=base, color=FILL)
        for i, (patch, row) in enumerate(zip(patches, rows, strict=True)):
            patch.set_gid(f"bar-{row.kc_id}")
            _errorbar(ax, i, row, "none")

    return _categorical(rows, spec, kc_titles, bars)


def render_dot(
    rows: Sequence[ExportRow],
    spec: PlotSpec,
    kc_titles: Mapping[int, str] | None = None,
) -> str:
    def dots(ax: Axes, rows: Sequence[ExportRow], _base: float) -> None:
        for i, row in enumerate(rows):
            _errorbar(ax, i, row, "o")

    return _categorical(rows, spec, kc_titles, dots)


def _normalized(values: Sequence[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def render_bubble(
    rows: Sequence[ExportRow],
    spec: PlotSpec,
    kc_titles: Mapping[int, str] | None = None,
) -> str:
    """Radius grows with the mean, opacity falls with the variance."""
    if not rows:
        msg = "nothing to plot"
        raise EmptyStateError(msg)
    rows = list(rows[: spec.top_k])
    cols = math.ceil(math.sqrt(len(rows)))
    n_rows = math.ceil(len(rows) / cols)
    # cell edge in points
    cell = 0.8 * min(spec.width / cols, spec.height / (n_rows + 1))
    r_min, r_max = 0.15 * cell, 0.45 * cell
    sizes = _normalized([r.mean for r in rows])
    # all-equal means draw at full size
    if all(s == 0.0 for s in sizes):
        sizes = [1.0] * len(rows)
    known = [r.variance for r in rows if r.variance is not None]
    shades = dict(zip(known, _normalized(known), strict=True)) if known else {}

    def draw(ax: Axes) -> None:
        for i, (row, size) in enumerate(zip(rows, sizes, strict=True)):
            x, y = i % cols, -(i // cols)
            shade = 0.0 if row.variance is None else shades[row.variance]
            radius = r_min + (r_max - r_min) * size
            ax.scatter(
                [x],
                [y],
                s=[(2.0 * radius) ** 2],
                color=FILL,
                alpha=1.0 - 0.8 * shade,
                gid=f"bubble-{row.kc_id}",
            )
            label = _label(row.kc_id, kc_titles)
            ax.text(x, y, label, ha="center", va="center", fontsize=8)
        ax.set_xlim(-0.5, cols - 0.5)
        ax.set_ylim(-n_rows + 0.5, 0.5)
        ax.set_axis_off()

    return _render(spec, draw)


def render_line(history: Sequence[HistoryPoint], spec: PlotSpec) -> str:
    """Mean trajectory of one skill.

    The band is drawn only when every point has a variance.
    """
    if not history:
        msg = "no history to plot"
        raise EmptyHistoryError(msg)
    ts = [p.t for p in history]

    def draw(ax: Axes) -> None:
        if all(p.variance is not None for p in history):
            bounds = [confidence_interval(p.mean, p.variance) for p in history]
            ax.fill_between(
                ts,
                [low for low, _ in bounds],
                [high for _, high in bounds],
                color=FILL,
                alpha=0.2,
                gid="band",
            )
        ax.plot(ts, [p.mean for p in history], color=FILL, gid="mean-line")
        ax.set_xlabel("event")
        ax.set_ylabel("skill mean")

    return _render(spec, draw)


def render_snapshot(
    snapshot: Mapping[str, Any],
    spec: PlotSpec,
    kc_titles: Mapping[int, str] | None = None,
    kc_id: int | None = None,
) -> str:
    """Render an exported state; line plots follow ``kc_id`` or the top-ranked KC."""
    rows = rows_from_snapshot(snapshot, spec.top_k)
    match spec.kind:
        case "bar":
            return render_bar(rows, spec, kc_titles)
        case "dot":
            return render_dot(rows, spec, kc_titles)
        case "bubble":
            return render_bubble(rows, spec, kc_titles)
    history: dict[str, list[list[float]]] = snapshot.get("history", {})
    target = rows[0].kc_id if kc_id is None else kc_id
    if not (points := history.get(str(target))):
        msg = f"no history for kc {target}; export states with history enabled"
        raise EmptyHistoryError(msg)
    return render_line([HistoryPoint(int(t), m, v) for t, m, v in points], spec)
