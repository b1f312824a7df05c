"""key=value settings file shared by the command-line tools."""
import logging
from typing import Any, Dict, Optional, Tuple

from attrs import define, evolve, field, fields

from .constants import (
    DEFAULT_P_TARGET,
    DEFAULT_SAMPLE_RATE,
    DEFAULT_TOP_K,
    CohortMode,
    EnrollStrategy,
)
from .errors import RVectorError
from .metrics import DcfParams

__author__ = "rvector Contributors"
__copyright__ = "Copyright 2026 rvector Contributors"
__license__ = "Apache License, Version 2.0"


log = logging.getLogger(__name__)


class ConfigError(RVectorError):
    pass


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError("expecting a boolean, got {!r}".format(value))


def _as_weights(value: Any) -> Optional[Tuple[float, ...]]:
    if value is None or value == "":
        return None
    if isinstance(value, str):
        value = value.replace(",", " ").split()
    return tuple(float(w) for w in value)


def _check_top_k(instance, attribute, value) -> None:
    if value < 2:
        raise ConfigError("top_k must be at least 2, got {!r}".format(value))


def _check_positive(instance, attribute, value) -> None:
    if value <= 0:
        raise ConfigError("{} must be positive, got {!r}".format(attribute.name, value))


@define(frozen=True, slots=True)
class Settings:
    """Defaults score with cosine, AS-norm and embedding averaging."""

    top_k: int = field(default=DEFAULT_TOP_K, converter=int, validator=_check_top_k)
    p_target: float = field(default=DEFAULT_P_TARGET, converter=float)
    c_miss: float = field(default=1.0, converter=float)
    c_fa: float = field(default=1.0, converter=float)
    strategy: EnrollStrategy = field(
        default=EnrollStrategy.EmbAvg, converter=EnrollStrategy
    )
    asnorm: bool = field(default=True, converter=_as_bool)
    cohort_mode: CohortMode = field(default=CohortMode.Adaptive, converter=CohortMode)
    normalize_after_average: bool = field(default=False, converter=_as_bool)
    fusion_weights: Optional[Tuple[float, ...]] = field(
        default=None, converter=_as_weights
    )
    sample_rate: int = field(
        default=DEFAULT_SAMPLE_RATE, converter=int, validator=_check_positive
    )
    seed: int = field(default=0, converter=int)
    batch_size: int = field(default=128, converter=int, validator=_check_positive)

    @property
    def dcf_params(self) -> DcfParams:
        return DcfParams(p_target=self.p_target, c_miss=self.c_miss, c_fa=self.c_fa)

    def evolve_from(self, overrides: Dict[str, Any]) -> "Settings":
        """Copy with every non-None override applied (e.g. vars() of parsed flags)."""
        names = {a.name for a in fields(Settings)}
        changes = {k: v for k, v in overrides.items() if k in names and v is not None}
        return evolve(self, **changes)


def parse_config(text: str, source: str = "<config>") -> Dict[str, str]:
    names = {a.name for a in fields(Settings)}
    values: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError("{}:{}: expecting key=value".format(source, number))
        if key not in names:
            raise ConfigError("{}:{}: unknown key {!r}".format(source, number, key))
        values[key] = value.strip()
    return values


def load_config(path: Optional[str] = None) -> Settings:
    """Settings from a key=value file; no path means the built-in defaults."""
    if path is None:
        return Settings()
    with open(path, "r", encoding="utf-8") as handle:
        values = parse_config(handle.read(), path)
    log.debug("Loaded %d settings from %r", len(values), path)
    try:
        return Settings(**values)
    except ValueError as exc:
        raise ConfigError("{}: {}".format(path, exc)) from exc
