"""
Interest and Novelty skill models: the learner's KC skills form one team, the
fragment's coverages the other.

Each game is rated by a trueskill env. The content team is a near point mass
at coverage * scale, so only the learner's skills move.
"""

import abc
import logging
import math
from typing import Any, ClassVar, Self

import trueskill

from ..config import ModelConfig, TrueSkillParams
from ..events import EngagementEvent
from ..skills import GaussianSkill, LearnerState, get_or_init_skill
from .base import Learner, LearnerContext, clamp_proba, register_learner
from .gaussian import UPDATE_ERRORS, draw_probability, environment, win_probability

logger = logging.getLogger(__name__)

CONTENT_SIGMA = 1e-4

WIN_RANKS = (0, 1)
LOSS_RANKS = (1, 0)
DRAW_RANKS = (0, 0)


class TrueSkillLearner(Learner):
    section: ClassVar[str]

    def __init__(
        self, params: TrueSkillParams, user_id: int = 0, *, track_history: bool = False
    ) -> None:
        super().__init__(user_id)
        self.params = params
        self.state = LearnerState(user_id=user_id, track_history=track_history)
        self.env = environment(
            params.beta,
            self.game_draw_probability(),
            mu=params.init_mean,
            sigma=math.sqrt(params.init_variance),
        )
        self.underflows = 0
        self._margins: dict[int, float] = {}

    @classmethod
    def from_config(
        cls, config: ModelConfig, context: LearnerContext, user_id: int = 0
    ) -> Self:
        params: TrueSkillParams = getattr(config, cls.section)
        return cls(params, user_id, track_history=context.track_history)

    def game_draw_probability(self) -> float:
        return self.params.draw_probability

    def margin(self, n_kcs: int) -> float:
        """Draw margin of a game between two teams of n_kcs players."""
        margin = self._margins.get(n_kcs)
        if margin is None:
            p = self.env.draw_probability
            margin = float(trueskill.calc_draw_margin(p, 2 * n_kcs, self.env))
            self._margins[n_kcs] = margin
        return margin

    def game(self, event: EngagementEvent) -> tuple[float, float]:
        """Mean and sd of the learner-minus-content performance difference."""
        p = self.params
        learner_mean = learner_var = content = 0.0
        # fixed KC order keeps the sums bitwise stable
        for slot in sorted(event.kcs):
            skill = self.state.skills.get(slot.kc_id)
            learner_mean += p.init_mean if skill is None else skill.mean
            learner_var += p.init_variance if skill is None else skill.variance
            content += slot.coverage * p.scale
        perf_var = 2 * len(event.kcs) * p.beta**2
        return learner_mean - content, math.sqrt(learner_var + perf_var)

    @abc.abstractmethod
    def ranks(self, event: EngagementEvent, delta: float) -> tuple[int, int]:
        """Ranks of the learner and content teams, lower is better."""

    def fit(self, event: EngagementEvent) -> None:
        p = self.params
        slots = sorted(event.kcs)
        learner: list[trueskill.Rating] = []
        content: list[trueskill.Rating] = []
        for slot in slots:
            skill = get_or_init_skill(
                self.state, slot.kc_id, p.init_mean, p.init_variance
            )
            sigma = math.sqrt(skill.variance + p.tau**2)
            learner.append(self.env.create_rating(skill.mean, sigma))
            content.append(
                self.env.create_rating(slot.coverage * p.scale, CONTENT_SIGMA)
            )
        self.state.record_event(event)
        delta = sum(r.mu for r in learner) - sum(r.mu for r in content)
        ranks = self.ranks(event, delta)
        try:
            rated, _ = self.env.rate([learner, content], ranks=ranks)
        except UPDATE_ERRORS:
            self.underflows += 1
            logger.warning(
                "learner %d: ranks %s underflowed (delta=%g), skills kept",
                self.user_id,
                ranks,
                delta,
            )
            return
        for slot, rating in zip(slots, rated, strict=True):
            self.state.set_skill(
                slot.kc_id, GaussianSkill.floored(rating.mu, rating.sigma**2)
            )

    def snapshot(self) -> dict[str, Any]:
        return self.state.to_snapshot()

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__qualname__}(user_id={self.user_id}, "
            f"skills={len(self.state.skills)}, events={self.state.event_count})"
        )


@register_learner("interest")
class InterestLearner(TrueSkillLearner):
    """Engagement is the learner's interest beating the content."""

    section = "interest"

    def game_draw_probability(self) -> float:
        # a zero draw probability puts the win threshold at zero
        return self.params.draw_probability if self.params.use_draw_margin else 0.0

    def ranks(self, event: EngagementEvent, delta: float) -> tuple[int, int]:
        return WIN_RANKS if event.label else LOSS_RANKS

    def predict_proba(self, event: EngagementEvent) -> float:
        delta, c = self.game(event)
        return clamp_proba(win_probability(delta, c, self.margin(len(event.kcs))))


@register_learner("novelty")
class NoveltyLearner(TrueSkillLearner):
    """Engagement is a draw: the content is neither too easy nor too hard."""

    section = "novelty"

    def ranks(self, event: EngagementEvent, delta: float) -> tuple[int, int]:
        if event.label:
            return DRAW_RANKS
        # the side ahead in expectation takes the decisive result, content on ties
        return WIN_RANKS if delta > 0.0 else LOSS_RANKS

    def predict_proba(self, event: EngagementEvent) -> float:
        delta, c = self.game(event)
        return clamp_proba(draw_probability(delta, c, self.margin(len(event.kcs))))
