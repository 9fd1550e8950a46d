import logging
import math
from typing import Any, Self

from ..config import InkParams, ModelConfig
from ..events import EngagementEvent
from .base import (
    DECISION_THRESHOLD,
    Learner,
    LearnerContext,
    clamp_proba,
    register_learner,
)
from .trueskill import InterestLearner, NoveltyLearner

logger = logging.getLogger(__name__)

# below this the weights are rescaled; only their ratio matters
_WEIGHT_FLOOR = 1e-100


@register_learner("ink")
class InkLearner(Learner):
    """Weighted opinion pool of Interest and Novelty.

    After each label the weight of a sub-model decays by exp(-tau * |p - label|).
    In greedy mode the weights only move when the pooled prediction was wrong;
    both sub-models are always fitted.
    """

    def __init__(
        self,
        interest: InterestLearner,
        novelty: NoveltyLearner,
        meta: InkParams,
        user_id: int = 0,
    ) -> None:
        super().__init__(user_id)
        self.interest = interest
        self.novelty = novelty
        self.meta = meta
        self.w_interest, self.w_novelty = meta.weights
        self.weight_updates = 0

    @classmethod
    def from_config(
        cls, config: ModelConfig, context: LearnerContext, user_id: int = 0
    ) -> Self:
        return cls(
            InterestLearner.from_config(config, context, user_id),
            NoveltyLearner.from_config(config, context, user_id),
            config.ink,
            user_id,
        )

    @property
    def weights(self) -> tuple[float, float]:
        return self.w_interest, self.w_novelty

    def combine(self, p_interest: float, p_novelty: float) -> float:
        total = self.w_interest + self.w_novelty
        return (self.w_interest * p_interest + self.w_novelty * p_novelty) / total

    def predict_proba(self, event: EngagementEvent) -> float:
        return clamp_proba(
            self.combine(
                self.interest.predict_proba(event), self.novelty.predict_proba(event)
            )
        )

    def fit(self, event: EngagementEvent) -> None:
        p_i = self.interest.predict_proba(event)
        p_n = self.novelty.predict_proba(event)
        predicted = int(self.combine(p_i, p_n) >= DECISION_THRESHOLD)
        if not self.meta.greedy or predicted != event.label:
            self.w_interest *= math.exp(-self.meta.tau * abs(p_i - event.label))
            self.w_novelty *= math.exp(-self.meta.tau * abs(p_n - event.label))
            self._rescale()
            self.weight_updates += 1
        self.interest.fit(event)
        self.novelty.fit(event)

    def _rescale(self) -> None:
        total = self.w_interest + self.w_novelty
        if total < _WEIGHT_FLOOR:
            self.w_interest /= total
            self.w_novelty /= total

    def snapshot(self) -> dict[str, Any]:
        snapshot = self.novelty.snapshot()
        snapshot["ink_weights"] = list(self.weights)
        return snapshot

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__qualname__}(user_id={self.user_id}, "
            f"weights=({self.w_interest:.4g}, {self.w_novelty:.4g}))"
        )
