import logging
from typing import Any, Self

from ..config import KtParams, ModelConfig
from ..events import EngagementEvent
from ..skills import MasteryState
from .base import Learner, LearnerContext, clamp_proba, register_learner

logger = logging.getLogger(__name__)


def p_correct(mastery: float, params: KtParams) -> float:
    return mastery * (1.0 - params.p_slip) + (1.0 - mastery) * params.p_guess


def kt_posterior(mastery: float, label: int, params: KtParams) -> float:
    """Bayes update of mastery on one observation, then the learning step."""
    p = p_correct(mastery, params)
    if label:
        evidence, joint = p, mastery * (1.0 - params.p_slip)
    else:
        evidence, joint = 1.0 - p, mastery * params.p_slip
    posterior = joint / evidence if evidence > 0.0 else mastery
    learned = posterior + (1.0 - posterior) * params.p_learn
    return min(1.0, max(0.0, learned))


@register_learner("kt")
class KnowledgeTracingLearner(Learner):
    def __init__(
        self, params: KtParams, user_id: int = 0, *, track_history: bool = False
    ) -> None:
        super().__init__(user_id)
        self.params = params
        self.state = MasteryState(user_id=user_id, track_history=track_history)

    @classmethod
    def from_config(
        cls, config: ModelConfig, context: LearnerContext, user_id: int = 0
    ) -> Self:
        return cls(config.kt, user_id, track_history=context.track_history)

    def mastery(self, kc_id: int) -> float:
        return self.state.mastery(kc_id, self.params.init_mastery)

    def predict_proba(self, event: EngagementEvent) -> float:
        probs = [p_correct(self.mastery(k), self.params) for k in sorted(event.kc_ids)]
        return clamp_proba(sum(probs) / len(probs))

    def fit(self, event: EngagementEvent) -> None:
        self.state.record_event(event)
        for kc_id in sorted(event.kc_ids):
            updated = kt_posterior(self.mastery(kc_id), event.label, self.params)
            self.state.set_mastery(kc_id, updated)

    def snapshot(self) -> dict[str, Any]:
        return self.state.to_snapshot()
