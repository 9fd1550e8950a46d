"""
Threshold baselines. Each exposes a similarity or accumulator score and
predicts engagement when the score reaches its threshold.
"""

import abc
import dataclasses
import itertools
import logging
import math
from collections import defaultdict
from collections.abc import Iterator, Mapping
from typing import ClassVar, Self

from ..config import ModelConfig
from ..events import EngagementEvent
from ..models import Dataset, UsageError
from ..skills import ScalarSkillMap
from .base import Learner, LearnerContext, clamp_proba, register_learner

logger = logging.getLogger(__name__)

FragmentKey = tuple[int, int, int]


def coverage_cosine(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    """Cosine of two sparse KC coverage vectors, 0 when either is all zero."""
    norm_a = math.sqrt(sum(v * v for v in a.values()))
    norm_b = math.sqrt(sum(v * v for v in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    dot = sum(v * b[k] for k, v in sorted(a.items()) if k in b)
    return min(1.0, dot / norm_a / norm_b)


def jaccard(a: set[int] | frozenset[int], b: set[int] | frozenset[int]) -> float:
    if not (union := len(a | b)):
        return 0.0
    return len(a & b) / union


@dataclasses.dataclass(frozen=True, slots=True)
class UserJaccardTable:
    """Fragment-to-fragment similarity of their training audiences."""

    viewers: Mapping[FragmentKey, frozenset[int]]

    def similarity(self, a: FragmentKey, b: FragmentKey) -> float:
        users_a, users_b = self.viewers.get(a), self.viewers.get(b)
        if not users_a or not users_b:
            return 0.0
        return jaccard(users_a, users_b)

    def pairs(self) -> Iterator[tuple[FragmentKey, FragmentKey, float]]:
        """Every ordered pair of distinct training fragments with overlap."""
        for a, b in itertools.permutations(sorted(self.viewers), 2):
            if sim := self.similarity(a, b):
                yield a, b, sim

    def __repr__(self) -> str:
        return f"{self.__class__.__qualname__}(fragments={len(self.viewers)})"


def build_user_jaccard_table(train: Dataset) -> UserJaccardTable:
    viewers: dict[FragmentKey, set[int]] = defaultdict(set)
    for event in train.events():
        viewers[event.fragment.key].add(event.user_id)
    logger.info("user jaccard table over %d training fragments", len(viewers))
    return UserJaccardTable({k: frozenset(v) for k, v in viewers.items()})


class ThresholdBaseline(Learner):
    def __init__(
        self, threshold: float, fallback_label: int = 1, user_id: int = 0
    ) -> None:
        super().__init__(user_id)
        self.threshold = threshold
        self.fallback_label = fallback_label

    @classmethod
    def from_config(
        cls, config: ModelConfig, context: LearnerContext, user_id: int = 0
    ) -> Self:
        return cls(config.baseline.threshold, config.baseline.fallback_label, user_id)

    @abc.abstractmethod
    def score(self, event: EngagementEvent) -> float | None:
        """Similarity or accumulator value; None when there is nothing to compare."""

    def predict(self, event: EngagementEvent) -> int:
        if (s := self.score(event)) is None:
            return self.fallback_label
        return int(s >= self.threshold)

    def predict_proba(self, event: EngagementEvent) -> float:
        if (s := self.score(event)) is None:
            return 0.75 if self.fallback_label else 0.25
        if s + self.threshold == 0.0:
            return 0.5
        return clamp_proba(s / (s + self.threshold))

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__qualname__}(user_id={self.user_id}, "
            f"threshold={self.threshold})"
        )


class PairwiseBaseline(ThresholdBaseline):
    """Compares each fragment with the learner's previous one."""

    def __init__(
        self, threshold: float, fallback_label: int = 1, user_id: int = 0
    ) -> None:
        super().__init__(threshold, fallback_label, user_id)
        self.previous: EngagementEvent | None = None

    @abc.abstractmethod
    def similarity(self, prev: EngagementEvent, event: EngagementEvent) -> float: ...

    def score(self, event: EngagementEvent) -> float | None:
        if self.previous is None:
            return None
        return self.similarity(self.previous, event)

    def fit(self, event: EngagementEvent) -> None:
        self.previous = event


@register_learner("cosine")
class CosineBaseline(PairwiseBaseline):
    def similarity(self, prev: EngagementEvent, event: EngagementEvent) -> float:
        return coverage_cosine(dict(prev.kcs), dict(event.kcs))


@register_learner("jaccard-c")
class ConceptJaccardBaseline(PairwiseBaseline):
    def similarity(self, prev: EngagementEvent, event: EngagementEvent) -> float:
        return jaccard(set(prev.kc_ids), set(event.kc_ids))


@register_learner("jaccard-u")
class UserJaccardBaseline(PairwiseBaseline):
    def __init__(
        self,
        table: UserJaccardTable,
        threshold: float,
        fallback_label: int = 1,
        user_id: int = 0,
    ) -> None:
        super().__init__(threshold, fallback_label, user_id)
        self.table = table

    @classmethod
    def from_config(
        cls, config: ModelConfig, context: LearnerContext, user_id: int = 0
    ) -> Self:
        if context.user_jaccard is None:
            msg = "jaccard-u needs a similarity table built from training data"
            raise UsageError(msg)
        b = config.baseline
        return cls(context.user_jaccard, b.threshold, b.fallback_label, user_id)

    def similarity(self, prev: EngagementEvent, event: EngagementEvent) -> float:
        return self.table.similarity(prev.fragment.key, event.fragment.key)


class TermFrequencyBaseline(ThresholdBaseline):
    """Mean accumulated value of the event's KCs, grown on engaged events only."""

    use_coverage: ClassVar[bool]

    def __init__(
        self, threshold: float, fallback_label: int = 1, user_id: int = 0
    ) -> None:
        super().__init__(threshold, fallback_label, user_id)
        self.counts = ScalarSkillMap()

    def score(self, event: EngagementEvent) -> float:
        return self.counts.mean_over(sorted(event.kc_ids))

    def fit(self, event: EngagementEvent) -> None:
        if not event.label:
            return
        for slot in sorted(event.kcs):
            self.counts.add(slot.kc_id, slot.coverage if self.use_coverage else 1.0)


@register_learner("tf-binary")
class BinaryTermFrequencyBaseline(TermFrequencyBaseline):
    use_coverage = False


@register_learner("tf-cosine")
class CosineTermFrequencyBaseline(TermFrequencyBaseline):
    use_coverage = True
