"""
Per-learner state containers.
"""

import dataclasses
import logging
from collections.abc import Iterable, Mapping
from typing import Any, NamedTuple, Self

from .events import EngagementEvent
from .models import KcEngageError

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-9

SNAPSHOT_GAUSSIAN = "gaussian"
SNAPSHOT_BERNOULLI = "bernoulli"


class EmptyStateError(KcEngageError):
    pass


@dataclasses.dataclass(frozen=True, slots=True)
class GaussianSkill:
    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not self.variance > 0.0:
            msg = f"variance must be positive, got {self.variance}"
            raise ValueError(msg)

    @classmethod
    def floored(cls, mean: float, variance: float) -> Self:
        return cls(mean, max(variance, VARIANCE_FLOOR))


@dataclasses.dataclass(frozen=True, slots=True)
class BernoulliSkill:
    mastery: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mastery <= 1.0:
            msg = f"mastery must be in [0, 1], got {self.mastery}"
            raise ValueError(msg)


class ExportRow(NamedTuple):
    kc_id: int
    mean: float
    variance: float | None
    count: int


class HistoryPoint(NamedTuple):
    t: int
    mean: float
    variance: float | None


@dataclasses.dataclass
class StateCounters:
    user_id: int
    event_count: int = 0
    engagement_count: int = 0
    per_kc_event_count: dict[int, int] = dataclasses.field(default_factory=dict)
    track_history: bool = False
    history: dict[int, list[HistoryPoint]] = dataclasses.field(default_factory=dict)

    def record_event(self, event: EngagementEvent) -> None:
        self.event_count += 1
        self.engagement_count += event.label
        for kc_id in event.kc_ids:
            self.per_kc_event_count[kc_id] = self.per_kc_event_count.get(kc_id, 0) + 1

    def record_point(self, kc_id: int, mean: float, variance: float | None) -> None:
        if self.track_history:
            point = HistoryPoint(self.event_count, mean, variance)
            self.history.setdefault(kc_id, []).append(point)

    def history_snapshot(self) -> dict[str, list[list[Any]]]:
        return {
            str(kc_id): [list(p) for p in points]
            for kc_id, points in sorted(self.history.items())
        }

    def load_history(self, snapshot: Mapping[str, Any]) -> None:
        for kc_id, points in snapshot.get("history", {}).items():
            self.history[int(kc_id)] = [
                HistoryPoint(int(t), m, v) for t, m, v in points
            ]
        self.track_history = bool(self.history)


@dataclasses.dataclass
class LearnerState(StateCounters):
    """Open learner model: one Gaussian belief per KC seen so far."""

    skills: dict[int, GaussianSkill] = dataclasses.field(default_factory=dict)

    def set_skill(self, kc_id: int, skill: GaussianSkill) -> None:
        self.skills[kc_id] = skill
        self.record_point(kc_id, skill.mean, skill.variance)

    def to_snapshot(self) -> dict[str, Any]:
        snapshot: dict[str, Any] = {
            "kind": SNAPSHOT_GAUSSIAN,
            "user_id": self.user_id,
            "skills": [
                {
                    "kc_id": kc_id,
                    "mean": skill.mean,
                    "variance": skill.variance,
                    "count": self.per_kc_event_count.get(kc_id, 0),
                }
                for kc_id, skill in sorted(self.skills.items())
            ],
            "event_count": self.event_count,
            "engagement_count": self.engagement_count,
        }
        if self.history:
            snapshot["history"] = self.history_snapshot()
        return snapshot

    @classmethod
    def from_snapshot(cls, snapshot: Mapping[str, Any]) -> Self:
        state = cls(
            user_id=int(snapshot["user_id"]),
            event_count=int(snapshot["event_count"]),
            engagement_count=int(snapshot["engagement_count"]),
        )
        for row in snapshot["skills"]:
            kc_id = int(row["kc_id"])
            mean, variance = float(row["mean"]), float(row["variance"])
            state.skills[kc_id] = GaussianSkill(mean, variance)
            state.per_kc_event_count[kc_id] = int(row["count"])
        state.load_history(snapshot)
        return state


@dataclasses.dataclass
class MasteryState(StateCounters):
    skills: dict[int, BernoulliSkill] = dataclasses.field(default_factory=dict)

    def set_mastery(self, kc_id: int, mastery: float) -> None:
        self.skills[kc_id] = BernoulliSkill(mastery)
        self.record_point(kc_id, mastery, None)

    def mastery(self, kc_id: int, prior: float) -> float:
        if (skill := self.skills.get(kc_id)) is None:
            return prior
        return skill.mastery

    def to_snapshot(self) -> dict[str, Any]:
        snapshot: dict[str, Any] = {
            "kind": SNAPSHOT_BERNOULLI,
            "user_id": self.user_id,
            "skills": [
                {
                    "kc_id": kc_id,
                    "mean": skill.mastery,
                    "variance": None,
                    "count": self.per_kc_event_count.get(kc_id, 0),
                }
                for kc_id, skill in sorted(self.skills.items())
            ],
            "event_count": self.event_count,
            "engagement_count": self.engagement_count,
        }
        if self.history:
            snapshot["history"] = self.history_snapshot()
        return snapshot


@dataclasses.dataclass
class ScalarSkillMap:
    values: dict[int, float] = dataclasses.field(default_factory=dict)

    def add(self, kc_id: int, amount: float) -> None:
        if amount < 0.0:
            msg = f"accumulators only grow, got {amount}"
            raise ValueError(msg)
        self.values[kc_id] = self.values.get(kc_id, 0.0) + amount

    def mean_over(self, kc_ids: Iterable[int]) -> float:
        ids = list(kc_ids)
        if not ids:
            return 0.0
        return sum(self.values.get(k, 0.0) for k in ids) / len(ids)


def get_or_init_skill(
    state: LearnerState, kc_id: int, init_mean: float, init_variance: float
) -> GaussianSkill:
    if (skill := state.skills.get(kc_id)) is None:
        skill = state.skills[kc_id] = GaussianSkill(init_mean, init_variance)
    return skill


def export_state(state: LearnerState, top_k: int) -> list[ExportRow]:
    if top_k < 1:
        msg = f"top_k must be at least 1, got {top_k}"
        raise ValueError(msg)
    rows = [
        ExportRow(kc_id, s.mean, s.variance, state.per_kc_event_count.get(kc_id, 0))
        for kc_id, s in state.skills.items()
    ]
    rows.sort(key=lambda r: (-r.mean, r.variance or 0.0, r.kc_id))
    return rows[:top_k]


def export_mastery(state: MasteryState, top_k: int) -> list[ExportRow]:
    if top_k < 1:
        msg = f"top_k must be at least 1, got {top_k}"
        raise ValueError(msg)
    rows = [
        ExportRow(kc_id, s.mastery, None, state.per_kc_event_count.get(kc_id, 0))
        for kc_id, s in state.skills.items()
    ]
    rows.sort(key=lambda r: (-r.mean, r.kc_id))
    return rows[:top_k]


def rows_from_snapshot(snapshot: Mapping[str, Any], top_k: int) -> list[ExportRow]:
    """Ranked rows of a snapshot of either kind."""
    rows = [
        ExportRow(
            int(r["kc_id"]),
            float(r["mean"]),
            None if r["variance"] is None else float(r["variance"]),
            int(r["count"]),
        )
        for r in snapshot["skills"]
    ]
    if not rows:
        msg = f"learner {snapshot.get('user_id')} has no skills"
        raise EmptyStateError(msg)
    rows.sort(key=lambda r: (-r.mean, r.variance or 0.0, r.kc_id))
    return rows[:top_k]
