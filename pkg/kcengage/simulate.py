"""
Synthetic learners engaging with fragments under the Novelty draw model.
"""

import dataclasses
import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import ndtr

from . import settings
from .annotate import WatchRecord, label_engagement, rebase_timestamps
from .config import TrueSkillParams
from .events import (
    ColumnLayout,
    EngagementEvent,
    FragmentId,
    KcAnnotationSlot,
    serialize_events,
)
from .learners.gaussian import draw_margin
from .models import DataError, Dataset, group_sessions, split_dataset

logger = logging.getLogger(__name__)

GROUND_TRUTH_FILE = "ground_truth.json"
PARTS_PER_VIDEO = 10
# unix-time window the first session of each learner starts in
_EPOCH_RANGE = (1_500_000_000, 1_600_000_000)


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_learners: int = Field(default=1000, ge=1)
    n_kcs: int = Field(default=10, ge=1)
    n_fragments: int = Field(default=200, ge=1)
    events_per_learner: int = Field(default=50, ge=1)
    kcs_per_fragment: int = Field(default=3, ge=1, le=5)
    true_beta: float = Field(default=0.07, gt=0.0)
    true_draw_probability: float = Field(default=0.9, gt=0.0, lt=1.0)
    skill_mean: float = 0.6
    skill_variance: float = Field(default=0.02, gt=0.0)
    train_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    seed: int = 0

    def novelty_params(self) -> TrueSkillParams:
        """Novelty hyperparameters matching the generating process."""
        return TrueSkillParams(
            beta=self.true_beta,
            tau=0.0,
            draw_probability=self.true_draw_probability,
            init_mean=self.skill_mean,
            init_variance=self.skill_variance,
        )


@dataclasses.dataclass(frozen=True, slots=True)
class SyntheticData:
    config: SyntheticConfig
    dataset: Dataset
    train: Dataset
    test: Dataset
    # user id -> true skill per kc id
    skills: dict[int, list[float]]
    # analytic engagement probability of every generated event, in order
    engagement_probabilities: list[float]

    def ground_truth(self) -> dict[str, Any]:
        return {
            "config": self.config.model_dump(),
            "skills": {str(u): s for u, s in sorted(self.skills.items())},
            "train_users": self.train.user_ids,
            "test_users": self.test.user_ids,
            "mean_engagement_probability": float(
                np.mean(self.engagement_probabilities)
            ),
        }


def _draw_probability(delta: float, n_kcs: int, config: SyntheticConfig) -> float:
    n = 2 * n_kcs
    margin = draw_margin(config.true_draw_probability, config.true_beta, n)
    c = math.sqrt(n) * config.true_beta
    return float(ndtr((margin - delta) / c) - ndtr((-margin - delta) / c))


def _fragments(
    rng: np.random.Generator, config: SyntheticConfig
) -> list[tuple[FragmentId, tuple[KcAnnotationSlot, ...], float]]:
    k = min(config.kcs_per_fragment, config.n_kcs)
    fragments = []
    for j in range(config.n_fragments):
        kc_ids = rng.choice(config.n_kcs, size=k, replace=False)
        coverages = rng.uniform(0.2, 1.0, size=k)
        slots = tuple(
            KcAnnotationSlot(int(kc), float(cov))
            for kc, cov in zip(kc_ids, coverages, strict=True)
        )
        fragment = FragmentId(j // PARTS_PER_VIDEO, 1, j % PARTS_PER_VIDEO + 1)
        fragments.append((fragment, slots, float(rng.uniform(180.0, 420.0))))
    return fragments


def generate(config: SyntheticConfig | None = None) -> SyntheticData:
    config = config or SyntheticConfig()
    fragment_seed, *learner_seeds = np.random.SeedSequence(config.seed).spawn(
        config.n_learners + 1
    )
    fragments = _fragments(np.random.default_rng(fragment_seed), config)
    events: list[EngagementEvent] = []
    probabilities: list[float] = []
    skills: dict[int, list[float]] = {}
    sd = math.sqrt(config.skill_variance)
    for user_id, seed in enumerate(learner_seeds):
        rng = np.random.default_rng(seed)
        skill = rng.normal(config.skill_mean, sd, size=config.n_kcs)
        skills[user_id] = [float(s) for s in skill]
        clock = int(rng.integers(*_EPOCH_RANGE))
        for j in rng.integers(0, len(fragments), size=config.events_per_learner):
            fragment, slots, duration = fragments[int(j)]
            delta = sum(float(skill[s.kc_id]) - s.coverage for s in sorted(slots))
            p = _draw_probability(delta, len(slots), config)
            engaged = bool(rng.random() < p)
            fraction = rng.uniform(0.8, 1.2) if engaged else rng.uniform(0.0, 0.7)
            _, label = label_engagement(WatchRecord(fraction * duration, duration))
            events.append(EngagementEvent(fragment, clock, user_id, slots, label))
            probabilities.append(p)
            clock += math.ceil(duration) + int(rng.integers(0, 600))
    dataset = group_sessions(rebase_timestamps(events))
    train, test = split_dataset(dataset, config.train_fraction, config.seed)
    logger.info(
        "generated %d learners x %d events (%d train, %d test learners)",
        config.n_learners,
        config.events_per_learner,
        len(train.sessions),
        len(test.sessions),
    )
    return SyntheticData(config, dataset, train, test, skills, probabilities)


def write_synthetic(
    data: SyntheticData, out_dir: Path, layout: ColumnLayout | None = None
) -> list[Path]:
    contents = {
        settings.fetch.train_file: serialize_events(data.train.events(), layout),
        settings.fetch.test_file: serialize_events(data.test.events(), layout),
        GROUND_TRUTH_FILE: json.dumps(data.ground_truth(), indent=2) + "\n",
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in contents.items():
            (out_dir / name).write_text(text, encoding="utf-8")
    except OSError as e:
        msg = f"cannot write synthetic data to {out_dir}: {e.strerror}"
        raise DataError(msg) from e
    return [out_dir / name for name in contents]
