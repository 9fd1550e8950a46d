"""
Online Bayesian learner models of video engagement over knowledge components.
"""

# this import should come first in order to init logging
# and to fail fast in the event of a mis-configuration
from .settings import __version__  # noqa: I001

from .config import ModelConfig, load_config
from .events import EngagementEvent, FragmentId, KcAnnotationSlot, parse_events
from .learners import Learner, build_learner, learner_names, register_learner
from .models import DataError, Dataset, KcEngageError, UsageError, group_sessions

__all__ = [
    "DataError",
    "Dataset",
    "EngagementEvent",
    "FragmentId",
    "KcAnnotationSlot",
    "KcEngageError",
    "Learner",
    "ModelConfig",
    "UsageError",
    "__version__",
    "build_learner",
    "group_sessions",
    "learner_names",
    "load_config",
    "parse_events",
    "register_learner",
]
