"""
Sequential hold-out evaluation: every event is predicted from the learner's
earlier events only, then fitted.
"""

import dataclasses
import itertools
import json
import logging
import math
import statistics
import time
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import Future, ProcessPoolExecutor
from pathlib import Path
from typing import Any, NamedTuple, Self

from scipy import stats
from sklearn.metrics import (
    accuracy_score,
    confusion_matrix,
    precision_recall_fscore_support,
)

from . import settings
from .config import ConfigValue, ModelConfig, dump_config
from .learners import Learner, LearnerContext, build_learner, lookup_learner
from .models import DataError, Dataset, KcEngageError, Session

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
METRICS = ("accuracy", "precision", "recall", "f1")
BINARY_LABELS = [0, 1]

# one (label, predicted) cell per confusion count: tp, fp, tn, fn
_CELL_LABELS = [1, 0, 0, 1]
_CELL_PREDICTED = [1, 1, 0, 0]


class NoPredictionsError(KcEngageError):
    pass


class EmptyGridError(KcEngageError):
    pass


class DegenerateVarianceError(KcEngageError):
    pass


class ScoredPrediction(NamedTuple):
    proba: float
    predicted: int
    label: int


class LearnerPredictions(NamedTuple):
    user_id: int
    predictions: list[ScoredPrediction]
    snapshot: dict[str, Any] | None = None


class Metrics(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_precision_recall(
        cls, accuracy: float, precision: float, recall: float
    ) -> Self:
        return cls(
            accuracy, precision, recall, statistics.harmonic_mean([precision, recall])
        )


@dataclasses.dataclass(slots=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_predictions(cls, predictions: Iterable[ScoredPrediction]) -> Self:
        scored = list(predictions)
        if not scored:
            return cls()
        matrix = confusion_matrix(
            [p.label for p in scored],
            [p.predicted for p in scored],
            labels=BINARY_LABELS,
        )
        tn, fp, fn, tp = (int(n) for n in matrix.ravel())
        return cls(tp, fp, tn, fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn + other.fn,
        )

    def metrics(self) -> Metrics:
        """Scores of the pooled counts, 0 wherever a ratio is undefined."""
        if not self.total:
            return Metrics(0.0, 0.0, 0.0, 0.0)
        weights = [self.tp, self.fp, self.tn, self.fn]
        accuracy = accuracy_score(_CELL_LABELS, _CELL_PREDICTED, sample_weight=weights)
        precision, recall, f1, _ = precision_recall_fscore_support(
            _CELL_LABELS,
            _CELL_PREDICTED,
            average="binary",
            sample_weight=weights,
            zero_division=0,
        )
        return Metrics(float(accuracy), float(precision), float(recall), float(f1))


class LearnerMetrics(NamedTuple):
    user_id: int
    n_events: int
    metrics: Metrics


@dataclasses.dataclass(frozen=True, slots=True)
class EvalReport:
    micro: Metrics
    macro: Metrics
    per_timestep: list[Metrics]
    n_learners: int
    n_events: int
    counts: ConfusionCounts
    per_learner: list[LearnerMetrics]

    def to_json(
        self, model: str = "", config: ModelConfig | None = None
    ) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "model": model,
            "config": dump_config(config) if config is not None else None,
            "n_learners": self.n_learners,
            "n_events": self.n_events,
            "counts": dataclasses.asdict(self.counts),
            "micro": self.micro._asdict(),
            "macro": self.macro._asdict(),
            "per_timestep": [m._asdict() for m in self.per_timestep],
            "per_learner": [
                {"user_id": r.user_id, "n_events": r.n_events, **r.metrics._asdict()}
                for r in self.per_learner
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> Self:
        if data.get("schema_version") != REPORT_SCHEMA_VERSION:
            msg = f"unsupported report schema {data.get('schema_version')!r}"
            raise DataError(msg)

        def metrics(d: Mapping[str, Any]) -> Metrics:
            return Metrics(*(float(d[k]) for k in METRICS))

        return cls(
            micro=metrics(data["micro"]),
            macro=metrics(data["macro"]),
            per_timestep=[metrics(m) for m in data["per_timestep"]],
            n_learners=int(data["n_learners"]),
            n_events=int(data["n_events"]),
            counts=ConfusionCounts(**data["counts"]),
            per_learner=[
                LearnerMetrics(int(r["user_id"]), int(r["n_events"]), metrics(r))
                for r in data["per_learner"]
            ],
        )


class ModelSpec(NamedTuple):
    """Everything a worker process needs to build learners."""

    name: str
    config: ModelConfig
    context: LearnerContext = LearnerContext()

    def build(self, user_id: int = 0) -> Learner:
        return build_learner(self.name, self.config, self.context, user_id)


def replay_session(
    model: Learner, session: Session, *, skip_first: bool = False
) -> list[ScoredPrediction]:
    scored: list[ScoredPrediction] = []
    for i, event in enumerate(session.events):
        if not (skip_first and i == 0):
            proba = model.predict_proba(event)
            scored.append(ScoredPrediction(proba, model.predict(event), event.label))
        model.fit(event)
    return scored


def compute_metrics(
    learners: Sequence[LearnerPredictions], max_timesteps: int | None = None
) -> EvalReport:
    """Micro metrics pool every prediction, macro metrics average learners.

    Macro F1 is the harmonic mean of macro precision and recall. Entry t of
    the per-timestep curve pools the t-th prediction of every learner that
    has one.
    """
    if max_timesteps is None:
        max_timesteps = settings.app.max_timesteps
    scored = sorted(
        (lp for lp in learners if lp.predictions), key=lambda lp: lp.user_id
    )
    if not scored:
        msg = "no scored predictions"
        raise NoPredictionsError(msg)
    per_learner: list[LearnerMetrics] = []
    total = ConfusionCounts()
    for lp in scored:
        counts = ConfusionCounts.from_predictions(lp.predictions)
        total += counts
        per_learner.append(LearnerMetrics(lp.user_id, counts.total, counts.metrics()))
    macro = Metrics.from_precision_recall(*(
        statistics.fmean(getattr(r.metrics, k) for r in per_learner)
        for k in METRICS[:3]
    ))
    horizon = min(max_timesteps, max(len(lp.predictions) for lp in scored))
    per_timestep = [
        ConfusionCounts.from_predictions(
            lp.predictions[t] for lp in scored if len(lp.predictions) > t
        ).metrics()
        for t in range(horizon)
    ]
    return EvalReport(
        micro=total.metrics(),
        macro=macro,
        per_timestep=per_timestep,
        n_learners=len(scored),
        n_events=total.total,
        counts=total,
        per_learner=per_learner,
    )


def _replay_chunk(
    spec: ModelSpec, sessions: Sequence[Session], skip_first: bool
) -> list[LearnerPredictions]:
    out: list[LearnerPredictions] = []
    for session in sessions:
        model = spec.build(session.user_id)
        predictions = replay_session(model, session, skip_first=skip_first)
        out.append(LearnerPredictions(session.user_id, predictions, model.snapshot()))
    return out


def _results[T](futures: Sequence[Future[T]], what: str) -> list[T]:
    out: list[T] = []
    for f in futures:
        try:
            out.append(f.result())
        except Exception:
            logger.exception("%s worker failed", what)
            raise
    return out


def _chunks(items: Sequence[Session], n: int) -> list[Sequence[Session]]:
    size = max(1, math.ceil(len(items) / n))
    return [items[i : i + size] for i in range(0, len(items), size)]


def evaluate_dataset(
    spec: ModelSpec,
    dataset: Dataset,
    jobs: int | None = None,
    *,
    skip_first: bool = False,
) -> list[LearnerPredictions]:
    """Replay every session; results come back ordered by user id."""
    lookup_learner(spec.name)
    jobs = settings.app.jobs if jobs is None else jobs
    sessions = [dataset.sessions[u] for u in dataset.user_ids]
    started = time.perf_counter()
    if jobs <= 1 or len(sessions) < 2:  # noqa: PLR2004
        results = _replay_chunk(spec, sessions, skip_first)
    else:
        chunks = _chunks(sessions, jobs * 4)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_replay_chunk, spec, c, skip_first) for c in chunks]
            results = [lp for chunk in _results(futures, spec.name) for lp in chunk]
    results.sort(key=lambda lp: lp.user_id)
    logger.info(
        "%s replayed %d learners in %.2fs with %d jobs",
        spec.name,
        len(results),
        time.perf_counter() - started,
        jobs,
    )
    return results


class SweepRow(NamedTuple):
    params: dict[str, ConfigValue]
    metrics: Metrics


class SweepResult(NamedTuple):
    best: dict[str, ConfigValue]
    best_score: float
    best_config: ModelConfig
    table: list[SweepRow]


def _sweep_point(
    spec: ModelSpec, params: dict[str, ConfigValue], train: Dataset, skip_first: bool
) -> SweepRow:
    point = spec._replace(config=spec.config.with_overrides(params))
    sessions = [train.sessions[u] for u in train.user_ids]
    report = compute_metrics(_replay_chunk(point, sessions, skip_first))
    return SweepRow(params, report.micro)


def grid_sweep(
    spec: ModelSpec,
    grid: Mapping[str, Sequence[ConfigValue]],
    train: Dataset,
    objective: str = "f1",
    jobs: int | None = None,
    *,
    skip_first: bool = False,
) -> SweepResult:
    """Exhaustive grid search on train; ties go to the smallest value tuple."""
    if objective not in METRICS:
        msg = f"objective must be one of {METRICS}, got {objective!r}"
        raise ValueError(msg)
    keys = sorted(grid)
    if not keys or any(not grid[k] for k in keys):
        msg = "grid has no points"
        raise EmptyGridError(msg)
    points = [
        dict(zip(keys, values, strict=True))
        for values in itertools.product(*(grid[k] for k in keys))
    ]
    # validate every point before spending any replay time
    for params in points:
        spec.config.with_overrides(params)
    jobs = settings.app.jobs if jobs is None else jobs
    if jobs <= 1 or len(points) < 2:  # noqa: PLR2004
        table = [_sweep_point(spec, p, train, skip_first) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_sweep_point, spec, p, train, skip_first) for p in points
            ]
            table = _results(futures, spec.name)
    best = min(
        table,
        key=lambda row: (
            -getattr(row.metrics, objective),
            tuple(row.params[k] for k in keys),
        ),
    )
    logger.info(
        "sweep over %d points: best %s=%.4f at %s",
        len(table),
        objective,
        getattr(best.metrics, objective),
        best.params,
    )
    return SweepResult(
        best=best.params,
        best_score=getattr(best.metrics, objective),
        best_config=spec.config.with_overrides(best.params),
        table=table,
    )


class TTestResult(NamedTuple):
    t_stat: float
    p_value: float


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """One-tailed paired t-test of mean(a) > mean(b)."""
    if len(a) != len(b) or len(a) < 2:  # noqa: PLR2004
        msg = f"need two equal-length samples of at least 2, got {len(a)} and {len(b)}"
        raise DegenerateVarianceError(msg)
    diffs = [x - y for x, y in zip(a, b, strict=True)]
    mean = statistics.fmean(diffs)
    sd = statistics.stdev(diffs)
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 0.5)
        return TTestResult(math.copysign(math.inf, mean), 0.0 if mean > 0.0 else 1.0)
    t_stat = mean / (sd / math.sqrt(len(diffs)))
    return TTestResult(t_stat, float(stats.t.sf(t_stat, df=len(diffs) - 1)))


class Interval(NamedTuple):
    mean: float
    half_width: float

    def __str__(self) -> str:
        return f"{self.mean:.6f} ± {self.half_width:.6f}"


class TimingReport(NamedTuple):
    n_events: int
    fit: Interval
    predict_proba: Interval
    predict: Interval


def _interval(samples: Sequence[float]) -> Interval:
    sd = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return Interval(statistics.fmean(samples), 1.96 * sd)


def time_model(
    spec: ModelSpec, dataset: Dataset, max_events: int = 10_000
) -> TimingReport:
    """Seconds per event for each call, as mean ± 1.96 sd."""
    fit: list[float] = []
    proba: list[float] = []
    predict: list[float] = []
    clock = time.perf_counter
    for user_id in dataset.user_ids:
        model = spec.build(user_id)
        for event in dataset.sessions[user_id].events:
            if len(fit) >= max_events:
                break
            t0 = clock()
            model.predict_proba(event)
            t1 = clock()
            model.predict(event)
            t2 = clock()
            model.fit(event)
            t3 = clock()
            proba.append(t1 - t0)
            predict.append(t2 - t1)
            fit.append(t3 - t2)
        if len(fit) >= max_events:
            break
    if not fit:
        msg = "no events to time"
        raise NoPredictionsError(msg)
    return TimingReport(len(fit), _interval(fit), _interval(proba), _interval(predict))


def write_report(payload: Mapping[str, Any], path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        msg = f"cannot write report {path}: {e.strerror}"
        raise DataError(msg) from e


def load_report(path: Path) -> EvalReport:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        msg = f"cannot read report {path}: {e.strerror}"
        raise DataError(msg) from e
    except json.JSONDecodeError as e:
        msg = f"report {path} is not JSON: {e}"
        raise DataError(msg) from e
    return EvalReport.from_json(data)


def paired_learner_metric(
    a: EvalReport, b: EvalReport, metric: str = "f1"
) -> tuple[list[float], list[float]]:
    """Per-learner metric of two reports over their common learners."""
    by_user_b = {r.user_id: r for r in b.per_learner}
    pairs = [
        (getattr(r.metrics, metric), getattr(by_user_b[r.user_id].metrics, metric))
        for r in a.per_learner
        if r.user_id in by_user_b
    ]
    return [x for x, _ in pairs], [y for _, y in pairs]
