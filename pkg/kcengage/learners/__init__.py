"""
Engagement classifiers. Importing this package registers every model under
its command-line name.
"""

from .base import (
    Learner,
    LearnerContext,
    UnknownModelError,
    build_learner,
    learner_names,
    lookup_learner,
    register_learner,
)
from .baselines import UserJaccardTable, build_user_jaccard_table
from .ink import InkLearner
from .kt import KnowledgeTracingLearner
from .trueskill import InterestLearner, NoveltyLearner

__all__ = [
    "InkLearner",
    "InterestLearner",
    "KnowledgeTracingLearner",
    "Learner",
    "LearnerContext",
    "NoveltyLearner",
    "UnknownModelError",
    "UserJaccardTable",
    "build_learner",
    "build_user_jaccard_table",
    "learner_names",
    "lookup_learner",
    "register_learner",
]
