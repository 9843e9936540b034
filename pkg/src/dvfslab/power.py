"""CPU frequency/voltage levels, instantaneous power and energy integration.

Power of one package-wide V/f level at average core utilization ``u``::

    P = base + (k * V) * V + aC * V**2 * f * u

where ``k * V`` is the static (leakage) current and ``aC`` lumps switching
activity and capacitance into one calibration constant. Dynamic power is
weighted by the utilization averaged over cores: more busy cores flip more
bits per second.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

# Frequencies are compared at 1 Hz resolution (kernel tables are integer kHz).
FREQ_EPS = 1e-9


@dataclass(frozen=True, order=True)
class FreqLevel:
    frequency: float  # GHz
    voltage: float  # V

    def __post_init__(self):
        if not (self.frequency > 0 and self.voltage > 0):
            raise ValueError(f"frequency and voltage must be positive, got {self}")

    @property
    def khz(self) -> int:
        return int(round(self.frequency * 1e6))


@dataclass(frozen=True)
class FrequencyTable:
    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) < 2:
            raise ValueError("a frequency table needs at least two levels")
        for lo, hi in zip(levels, levels[1:]):
            if not hi.frequency > lo.frequency:
                raise ValueError("levels must be strictly increasing in frequency")
            if hi.voltage < lo.voltage:
                raise ValueError("voltage must be non-decreasing with frequency")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "FrequencyTable":
        return cls(tuple(FreqLevel(float(f), float(v)) for f, v in pairs))

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    def __getitem__(self, i) -> FreqLevel:
        return self.levels[i]

    @property
    def min_level(self) -> FreqLevel:
        return self.levels[0]

    @property
    def max_level(self) -> FreqLevel:
        return self.levels[-1]

    @property
    def f_min(self) -> float:
        return self.levels[0].frequency

    @property
    def f_max(self) -> float:
        return self.levels[-1].frequency

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([lv.frequency for lv in self.levels])

    def normalized(self, frequency: float) -> float:
        return (frequency - self.f_min) / (self.f_max - self.f_min)

    def find(self, frequency: float):
        """Index of the level running at ``frequency`` or None."""
        for i, lv in enumerate(self.levels):
            if abs(lv.frequency - frequency) <= FREQ_EPS:
                return i
        return None

    def index_of(self, level) -> int:
        freq = level.frequency if isinstance(level, FreqLevel) else float(level)
        i = self.find(freq)
        if i is None or (isinstance(level, FreqLevel) and level.voltage != self.levels[i].voltage):
            raise KeyError(f"{level!r} is not a level of this table")
        return i

    def floor(self, frequency: float) -> FreqLevel:
        """Highest level at or below ``frequency``; the lowest level if none is."""
        chosen = self.levels[0]
        for lv in self.levels:
            if lv.frequency <= frequency + FREQ_EPS:
                chosen = lv
        return chosen

    def digest(self) -> str:
        text = ";".join(f"{lv.khz}@{lv.voltage:.6f}" for lv in self.levels)
        return hashlib.sha256(text.encode()).hexdigest()


V_LOW = 0.8
V_HIGH = 1.1

# Two V/f points exposed to the learned governor.
JETSON2 = FrequencyTable.from_pairs([(0.307, V_LOW), (1.479, V_HIGH)])

# Full frequency ladder from 0.307 GHz up, still only two voltage rails.
_JETSON_FREQS = (0.307, 0.403, 0.518, 0.614, 0.710, 0.826, 0.922,
                 1.037, 1.133, 1.224, 1.326, 1.428, 1.479)
JETSON_FULL = FrequencyTable.from_pairs(
    [(f, V_LOW if f <= 0.307 + FREQ_EPS else V_HIGH) for f in _JETSON_FREQS])

TABLE_PRESETS = {"jetson2": JETSON2, "jetson_full": JETSON_FULL}


@dataclass(frozen=True)
class PowerParams:
    switch_activity_capacitance: float  # W / (V^2 GHz)
    static_current_per_volt: float  # A / V
    base_board_power: float  # W

    def __post_init__(self):
        if min(self.switch_activity_capacitance, self.base_board_power) < 0:
            raise ValueError("power constants must be non-negative")
        if not self.static_current_per_volt > 0:
            raise ValueError("static current must grow with voltage")


def calibrate(table: FrequencyTable, idle_ratio: float = 0.64, busy_ratio: float = 2.0,
              base_board_power: float = 0.5) -> PowerParams:
    """Solve for constants matching two observed ratios on ``table``.

    ``idle_ratio`` is idle power at the lowest level over idle power at the
    highest; ``busy_ratio`` is fully-busy power at the highest level over
    fully-busy power at the lowest.
    """
    lo, hi = table.min_level, table.max_level
    vl2, vh2 = lo.voltage ** 2, hi.voltage ** 2
    denom = idle_ratio * vh2 - vl2
    if denom <= 0:
        raise ValueError("idle ratio unreachable with this voltage spread")
    k = base_board_power * (1 - idle_ratio) / denom
    idle_lo = base_board_power + k * vl2
    idle_hi = base_board_power + k * vh2
    a = (busy_ratio * idle_lo - idle_hi) / (vh2 * hi.frequency - busy_ratio * vl2 * lo.frequency)
    if a < 0:
        raise ValueError("busy ratio unreachable with this table")
    return PowerParams(a, k, base_board_power)


DEFAULT_PARAMS = calibrate(JETSON2)


def static_power(level: FreqLevel, params: PowerParams) -> float:
    return params.static_current_per_volt * level.voltage * level.voltage


def dynamic_power(level: FreqLevel, avg_utilization: float, params: PowerParams) -> float:
    return params.switch_activity_capacitance * level.voltage ** 2 * level.frequency * avg_utilization


def instant_power(level: FreqLevel, avg_utilization: float, params: PowerParams) -> float:
    return (params.base_board_power + static_power(level, params)
            + dynamic_power(level, avg_utilization, params))


@dataclass(frozen=True)
class EnergyReport:
    dynamic_joules: float = 0.0
    static_joules: float = 0.0
    base_joules: float = 0.0
    duration: float = 0.0
    time_at: dict = field(default_factory=dict)  # GHz -> seconds

    @property
    def total_joules(self) -> float:
        return self.dynamic_joules + self.static_joules + self.base_joules

    def shares(self) -> dict:
        if self.duration <= 0:
            return {}
        return {f: t / self.duration for f, t in sorted(self.time_at.items())}

    def __add__(self, other: "EnergyReport") -> "EnergyReport":
        time_at = dict(self.time_at)
        for f, t in other.time_at.items():
            time_at[f] = time_at.get(f, 0.0) + t
        return EnergyReport(self.dynamic_joules + other.dynamic_joules,
                            self.static_joules + other.static_joules,
                            self.base_joules + other.base_joules,
                            self.duration + other.duration, time_at)


def energy_of_trace(trace, params: PowerParams) -> EnergyReport:
    """Integrate piecewise-constant power over ``(level, avg_util, seconds)`` segments."""
    dyn = stat = base = dur = 0.0
    time_at = {}
    for level, util, seconds in trace:
        if seconds < 0:
            raise ValueError("segment durations must be non-negative")
        dyn += dynamic_power(level, util, params) * seconds
        stat += static_power(level, params) * seconds
        base += params.base_board_power * seconds
        dur += seconds
        time_at[level.frequency] = time_at.get(level.frequency, 0.0) + seconds
    return EnergyReport(dyn, stat, base, dur, time_at)


# ---------------------------------------------------------------------------
# config sections


def table_from_section(section) -> FrequencyTable:
    """Build a table from an INI section: ``preset = jetson2`` or
    ``levels = 0.307@0.8, 1.479@1.1``."""
    if "levels" in section:
        try:
            pairs = [item.strip().split("@") for item in section["levels"].split(",") if item.strip()]
            return FrequencyTable.from_pairs((float(f), float(v)) for f, v in pairs)
        except ValueError as exc:
            raise ConfigError(f"bad levels entry: {exc}") from exc
    name = section.get("preset", "jetson2")
    if name not in TABLE_PRESETS:
        raise ConfigError(f"unknown table preset {name!r}")
    return TABLE_PRESETS[name]


def table_to_section(table: FrequencyTable) -> dict:
    return {"levels": ", ".join(f"{lv.frequency:g}@{lv.voltage:g}" for lv in table)}


def params_from_section(section, table: FrequencyTable = JETSON2) -> PowerParams:
    keys = ("switch_activity_capacitance", "static_current_per_volt", "base_board_power")
    try:
        if all(k in section for k in keys):
            return PowerParams(*(float(section[k]) for k in keys))
        return calibrate(table,
                         idle_ratio=float(section.get("idle_ratio", 0.64)),
                         busy_ratio=float(section.get("busy_ratio", 2.0)),
                         base_board_power=float(section.get("base_board_power", 0.5)))
    except ValueError as exc:
        raise ConfigError(f"bad power section: {exc}") from exc


def params_to_section(params: PowerParams) -> dict:
    return {
        "switch_activity_capacitance": repr(params.switch_activity_capacitance),
        "static_current_per_volt": repr(params.static_current_per_volt),
        "base_board_power": repr(params.base_board_power),
    }
