"""
Model hyperparameters, read from a TOML file.

    model = "ink"

    [novelty]
    draw_probability = 0.52
    init_variance = 0.25
    beta = 0.42

    [ink]
    greedy = true
    tau = 0.5

Dotted overrides (``ink.tau``) address the same fields; unknown keys are
rejected.
"""

import logging
import math
import tomllib
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Self

import pydantic
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import ndtri

from .models import UsageError

logger = logging.getLogger(__name__)

ConfigValue = bool | int | float | str


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TrueSkillParams(_Section):
    beta: float = Field(gt=0.0)
    tau: float = Field(default=0.0, ge=0.0)
    draw_probability: float = Field(gt=0.0, lt=1.0)
    init_variance: float = Field(gt=0.0)
    init_mean: float = 0.0
    # content performance is coverage * scale
    scale: float = Field(default=1.0, gt=0.0)
    # interest only: use the draw margin as the win threshold instead of 0
    use_draw_margin: bool = False

    @model_validator(mode="after")
    def _validate_margin(self) -> Self:
        margin = float(ndtri((self.draw_probability + 1.0) / 2.0)) * self.beta
        if not (math.isfinite(margin) and margin > 0.0):
            msg = f"draw probability {self.draw_probability} gives no usable margin"
            raise ValueError(msg)
        return self


class InkParams(_Section):
    greedy: bool = True
    tau: float = Field(default=0.5, ge=0.0, le=1.0)
    weights: tuple[float, float] = (1.0, 1.0)

    @model_validator(mode="after")
    def _validate_weights(self) -> Self:
        if min(self.weights) <= 0.0:
            msg = f"weights must be positive, got {self.weights}"
            raise ValueError(msg)
        return self


class KtParams(_Section):
    p_learn: float = Field(default=0.05, ge=0.0, le=1.0)
    p_slip: float = Field(default=0.1, ge=0.0, lt=1.0)
    p_guess: float = Field(default=0.2, ge=0.0, lt=1.0)
    init_mastery: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _validate_identifiable(self) -> Self:
        if self.p_slip + self.p_guess >= 1.0:
            msg = f"p_slip + p_guess must be below 1, got {self.p_slip + self.p_guess}"
            raise ValueError(msg)
        return self


class BaselineParams(_Section):
    threshold: float = Field(default=0.5, ge=0.0)
    # prediction when a pairwise rule has no previous event to compare with
    fallback_label: int = Field(default=1, ge=0, le=1)


INTEREST_DEFAULTS = TrueSkillParams(
    beta=8.83, tau=0.0, draw_probability=0.52, init_variance=300.0
)
NOVELTY_DEFAULTS = TrueSkillParams(
    beta=0.42, tau=0.0, draw_probability=0.52, init_variance=0.25
)


class ModelConfig(_Section):
    model: str = "novelty"
    interest: TrueSkillParams = INTEREST_DEFAULTS
    novelty: TrueSkillParams = NOVELTY_DEFAULTS
    ink: InkParams = InkParams()
    kt: KtParams = KtParams()
    baseline: BaselineParams = BaselineParams()

    def with_overrides(self, overrides: Mapping[str, ConfigValue]) -> "ModelConfig":
        data = self.model_dump()
        for key, value in overrides.items():
            _set_dotted(data, key, value)
        return parse_config(data)

    def get(self, key: str) -> Any:
        node: Any = self
        for part in key.split("."):
            node = getattr(node, part)
        return node


def parse_config(data: Mapping[str, Any]) -> ModelConfig:
    try:
        return ModelConfig.model_validate(_expand_dotted(data))
    except pydantic.ValidationError as e:
        errors = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
            for err in e.errors()
        )
        msg = f"invalid model config: {errors}"
        raise UsageError(msg) from e


def load_config(path: Path | None) -> ModelConfig:
    if path is None:
        return ModelConfig()
    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        msg = f"cannot read config {path}: {e.strerror}"
        raise UsageError(msg) from e
    except tomllib.TOMLDecodeError as e:
        msg = f"config {path} is not valid TOML: {e}"
        raise UsageError(msg) from e
    config = parse_config(data)
    logger.debug("config loaded from %s: %r", path, config)
    return config


def dump_config(config: ModelConfig) -> str:
    data = config.model_dump()
    lines = [f"model = {_toml_value(data.pop('model'))}"]
    for section, values in data.items():
        lines += ["", f"[{section}]"]
        lines += [f"{key} = {_toml_value(value)}" for key, value in values.items()]
    return "\n".join(lines) + "\n"


def _toml_value(value: Any) -> str:
    match value:
        case bool():
            return "true" if value else "false"
        case int() | float():
            return repr(value)
        case str():
            return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
        case tuple() | list():
            return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    msg = f"cannot write {value!r} as TOML"
    raise TypeError(msg)


def _set_dotted(data: dict[str, Any], key: str, value: Any) -> None:
    *parents, leaf = key.split(".")
    node = data
    for part in parents:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            msg = f"{key}: {part} is not a section"
            raise UsageError(msg)
        node = child
    node[leaf] = value


def _expand_dotted(data: Mapping[str, Any]) -> dict[str, Any]:
    """Nest top-level keys written as ``"section.key" = value``."""
    out: dict[str, Any] = {}
    for key, value in data.items():
        item = _expand_dotted(value) if isinstance(value, Mapping) else value
        if "." in key:
            _set_dotted(out, key, item)
        elif isinstance(item, dict) and isinstance(out.get(key), dict):
            out[key].update(item)
        else:
            out[key] = item
    return out
