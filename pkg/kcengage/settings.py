"""
Library settings and configuration.
"""

import logging
import os
from pathlib import Path
from typing import Self

import dotenv
import pydantic_settings
from pydantic import Field, field_validator, model_validator

__version__ = "1.0.0"

PACKAGE_ROOT = Path(__file__).parent
PROJECT_ROOT = PACKAGE_ROOT.parent

DEFAULT_PEEKC_URL = "https://raw.githubusercontent.com/sahanbull/PEEKC-Dataset/main"

dotenv.load_dotenv()


class SharedSettings(pydantic_settings.BaseSettings):
    model_config = {"frozen": True}


class LogSettings(SharedSettings, env_prefix="KCENGAGE_LOG_"):
    level_root: str = "WARNING"
    level_core: str = "INFO"
    level_learners: str = "WARNING"
    level_evaluate: str = "INFO"
    level_fetch: str = "INFO"


log = LogSettings()

logging.basicConfig(
    format="%(asctime)s [%(levelname)s] %(name)s:%(funcName)s %(message)s"
)
logging.getLogger().setLevel(log.level_root)
logging.getLogger("kcengage").setLevel(log.level_core)
logging.getLogger("kcengage.learners").setLevel(log.level_learners)
logging.getLogger("kcengage.evaluate").setLevel(log.level_evaluate)
logging.getLogger("kcengage.fetch").setLevel(log.level_fetch)

logger = logging.getLogger(__name__)


class AppSettings(SharedSettings, env_prefix="KCENGAGE_"):
    data_dir: Path = Path("data")
    report_dir: Path = Path("reports")
    jobs: int = Field(default_factory=lambda: os.cpu_count() or 1)
    seed: int = 0
    # number of ranked KCs kept per fragment
    top_n: int = 5
    # per-timestep curves are truncated after this many events
    max_timesteps: int = 100

    @field_validator("jobs", "top_n", "max_timesteps")
    def _validate_positive(cls, v: int) -> int:
        if v < 1:
            msg = f"must be at least 1, got {v}"
            raise ValueError(msg)
        return v


class AnnotateSettings(SharedSettings, env_prefix="KCENGAGE_ANNOTATE_"):
    damping: float = 0.85
    tol: float = 1e-10
    max_iter: int = 200
    pagerank_weight: float = 0.8
    normalize_pagerank: bool = True
    target_chars: int = 5000
    engagement_threshold: float = 0.75

    @model_validator(mode="after")
    def _validate_model(self) -> Self:
        if not 0.0 < self.damping < 1.0:
            msg = f"damping must be in (0, 1), got {self.damping}"
            raise ValueError(msg)
        if not 0.0 <= self.pagerank_weight <= 1.0:
            msg = f"pagerank_weight must be in [0, 1], got {self.pagerank_weight}"
            raise ValueError(msg)
        if self.tol <= 0.0 or self.max_iter < 1 or self.target_chars < 1:
            msg = "tol, max_iter and target_chars must be positive"
            raise ValueError(msg)
        return self


class FetchSettings(SharedSettings, env_prefix="PEEKC_"):
    url: str = DEFAULT_PEEKC_URL
    train_file: str = "train.csv"
    test_file: str = "test.csv"
    checksum_file: str = "checksums.json"
    timeout: float = 300.0
    chunk_size: int = 1 << 16


app = AppSettings()
annotate = AnnotateSettings()
fetch = FetchSettings()
