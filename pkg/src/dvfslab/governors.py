"""Linux CPUFreq built-in governors re-expressed over period observations."""

from dataclasses import dataclass

from .errors import ConfigError
from .power import FreqLevel, FrequencyTable


class Governor:
    """Decides the package frequency for the next sampling period.

    ``start`` picks the level for the first period of a task (before any
    observation); ``next`` sees the last period's observation.
    """

    name = "governor"

    def reset(self) -> None:
        pass

    def start(self, table: FrequencyTable) -> FreqLevel:
        return table.min_level

    def next(self, observation, table: FrequencyTable) -> FreqLevel:
        raise NotImplementedError


@dataclass(frozen=True)
class OndemandConfig:
    up_threshold: float = 0.8
    powersave_bias: float = 0.0

    def __post_init__(self):
        for name in ("up_threshold", "powersave_bias"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


def ondemand_next(u: float, cfg: OndemandConfig, table: FrequencyTable) -> FreqLevel:
    if u > cfg.up_threshold:
        next_f = table.f_max
    else:
        next_f = table.f_min + (table.f_max - table.f_min) * u
    next_f = (1.0 - cfg.powersave_bias) * next_f
    return table.floor(next_f)


def schedutil_like_next(u: float, table: FrequencyTable, headroom: float = 1.25) -> FreqLevel:
    # PELT is not modelled; util_max with the usual 25% headroom stands in for it
    return table.floor(headroom * u * table.f_max)


class Ondemand(Governor):
    name = "ondemand"

    def __init__(self, cfg: OndemandConfig = OndemandConfig()):
        self.cfg = cfg

    def next(self, observation, table):
        return ondemand_next(observation.util_max, self.cfg, table)


class SchedutilLike(Governor):
    name = "schedutil_like"

    def next(self, observation, table):
        return schedutil_like_next(observation.util_max, table)


class Conservative(Governor):
    """Moves one level at a time: up above ``up_threshold``, down below ``down_threshold``."""

    name = "conservative"

    def __init__(self, up_threshold: float = 0.8, down_threshold: float = 0.2, step: int = 1):
        if not 0.0 <= down_threshold < up_threshold <= 1.0:
            raise ValueError("need 0 <= down_threshold < up_threshold <= 1")
        if step < 1:
            raise ValueError("step must be at least one level")
        self.up_threshold = up_threshold
        self.down_threshold = down_threshold
        self.step = step
        self.current = 0

    def reset(self):
        self.current = 0

    def start(self, table):
        return table[self.current]

    def next(self, observation, table):
        u = observation.util_max
        if u > self.up_threshold:
            self.current = min(self.current + self.step, len(table) - 1)
        elif u < self.down_threshold:
            self.current = max(self.current - self.step, 0)
        return table[self.current]


class StaticGovernor(Governor):
    """Pins one level: ``performance`` (max), ``powersave`` (min) or a given frequency."""

    def __init__(self, which="performance"):
        self.which = which
        if which in ("performance", "powersave"):
            self.name = which
        else:
            self.name = f"pinned:{float(which):g}"

    def _level(self, table):
        if self.which == "performance":
            return table.max_level
        if self.which == "powersave":
            return table.min_level
        i = table.find(float(self.which))
        if i is None:
            # reported by the simulator as a protocol error
            return FreqLevel(float(self.which), table.max_level.voltage)
        return table[i]

    def start(self, table):
        return self._level(table)

    def next(self, observation, table):
        return self._level(table)


def static_governor(level="performance") -> StaticGovernor:
    if isinstance(level, FreqLevel):
        level = level.frequency
    return StaticGovernor(level)


BUILTIN_NAMES = ("performance", "powersave", "ondemand", "conservative", "schedutil_like")


def make_builtin(name: str, **tunables) -> Governor:
    """Build a governor from its sysfs-style name (``pinned:<GHz>`` pins a level)."""
    try:
        if name in ("performance", "powersave"):
            return StaticGovernor(name)
        if name.startswith("pinned:"):
            return StaticGovernor(float(name.split(":", 1)[1]))
        if name == "ondemand":
            keys = {k: float(v) for k, v in tunables.items() if k in ("up_threshold", "powersave_bias")}
            return Ondemand(OndemandConfig(**keys))
        if name == "conservative":
            keys = {k: float(v) for k, v in tunables.items() if k in ("up_threshold", "down_threshold")}
            if "step" in tunables:
                keys["step"] = int(tunables["step"])
            return Conservative(**keys)
        if name in ("schedutil_like", "schedutil"):
            return SchedutilLike()
    except ValueError as exc:
        raise ConfigError(f"bad tunables for {name}: {exc}") from exc
    raise ConfigError(f"unknown governor {name!r}")
