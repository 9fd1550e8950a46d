import abc
import dataclasses
import logging
from collections.abc import Callable
from typing import TYPE_CHECKING, Any, ClassVar, Self, TypeVar

from ..config import ModelConfig
from ..events import EngagementEvent
from ..models import UsageError

if TYPE_CHECKING:
    from .baselines import UserJaccardTable

logger = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5
# probabilities are kept strictly inside (0, 1)
PROBA_EPS = 1e-12

_L = TypeVar("_L", bound="Learner")


class UnknownModelError(UsageError):
    pass


@dataclasses.dataclass(frozen=True, slots=True)
class LearnerContext:
    """Read-only structures shared by every learner of one run."""

    user_jaccard: "UserJaccardTable | None" = None
    track_history: bool = False


class Learner(abc.ABC):
    name: ClassVar[str] = ""

    def __init__(self, user_id: int = 0) -> None:
        self.user_id = user_id

    @classmethod
    @abc.abstractmethod
    def from_config(
        cls, config: ModelConfig, context: LearnerContext, user_id: int = 0
    ) -> Self: ...

    @abc.abstractmethod
    def fit(self, event: EngagementEvent) -> None: ...

    @abc.abstractmethod
    def predict_proba(self, event: EngagementEvent) -> float: ...

    def predict(self, event: EngagementEvent) -> int:
        return int(self.predict_proba(event) >= DECISION_THRESHOLD)

    def snapshot(self) -> dict[str, Any] | None:
        """Exportable learner state, if the model keeps one."""
        return None

    def __repr__(self) -> str:
        return f"{self.__class__.__qualname__}(user_id={self.user_id})"


def clamp_proba(p: float) -> float:
    return min(1.0 - PROBA_EPS, max(PROBA_EPS, p))


_learner_by_name: dict[str, type[Learner]] = {}


def register_learner(name: str) -> Callable[[type[_L]], type[_L]]:
    def inner(cls: type[_L]) -> type[_L]:
        if name in _learner_by_name:
            msg = f"learner {name!r} registered twice"
            raise RuntimeError(msg)
        cls.name = name
        _learner_by_name[name] = cls
        return cls

    return inner


def learner_names() -> list[str]:
    return sorted(_learner_by_name)


def lookup_learner(name: str) -> type[Learner]:
    if (cls := _learner_by_name.get(name)) is None:
        msg = f"unknown model {name!r}, choose from: {', '.join(learner_names())}"
        raise UnknownModelError(msg)
    return cls


def build_learner(
    name: str,
    config: ModelConfig | None = None,
    context: LearnerContext | None = None,
    user_id: int = 0,
) -> Learner:
    return lookup_learner(name).from_config(
        config or ModelConfig(model=name), context or LearnerContext(), user_id
    )
