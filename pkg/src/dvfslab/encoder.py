"""Temporal encoding of the observations seen so far in one task period.

The state has four parts:

* ``i``: the last observation (normalized frequency, util_avg, util_max);
* ``u``: time-weighted average utilization so far, over the deadline;
* ``c``: elapsed time over the deadline;
* ``p``: deadline-normalized time spent in each (level, util_max interval)
  cell, so ``p.sum() == c`` after every step.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .power import FrequencyTable


class StateLayout(str, Enum):
    """How an encoded state is flattened into the network input.

    ``compact`` keeps (freq, util_max, u, c) plus per-level totals of ``p``;
    ``full`` keeps every field, ``p`` row-major.
    """

    COMPACT = "compact-v1"
    FULL = "full-v1"

    @classmethod
    def parse(cls, name) -> "StateLayout":
        if isinstance(name, cls):
            return name
        for layout in cls:
            if name in (layout.value, layout.name.lower()):
                return layout
        raise ValueError(f"unknown state layout {name!r}")


@dataclass(frozen=True)
class EncoderConfig:
    table: FrequencyTable
    deadline_s: float
    # upper bounds of the utilization intervals; the first interval is closed at 0
    util_bounds: tuple = (0.6, 1.0)

    def __post_init__(self):
        b = tuple(float(x) for x in self.util_bounds)
        object.__setattr__(self, "util_bounds", b)
        if not self.deadline_s > 0:
            raise ValueError("deadline must be positive")
        if not b or b[-1] != 1.0 or b[0] <= 0 or any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("utilization bounds must be strictly increasing and end at 1")

    @property
    def n_intervals(self) -> int:
        return len(self.util_bounds)

    def interval_index(self, util: float) -> int:
        for k, bound in enumerate(self.util_bounds):
            if util <= bound:
                return k
        return len(self.util_bounds) - 1

    def state_size(self, layout) -> int:
        layout = StateLayout.parse(layout)
        if layout is StateLayout.COMPACT:
            return 4 + len(self.table)
        return 5 + len(self.table) * self.n_intervals


@dataclass(frozen=True, eq=False)
class EncodedState:
    freq_normalized: float
    util_avg: float
    util_max: float
    u: float
    c: float
    p: np.ndarray

    @classmethod
    def zero(cls, cfg: EncoderConfig) -> "EncodedState":
        p = np.zeros((len(cfg.table), cfg.n_intervals))
        p.flags.writeable = False
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, p)


def encode_step(prev: EncodedState, obs, cfg: EncoderConfig) -> EncodedState:
    level = cfg.table.find(obs.freq)
    if level is None:
        raise KeyError(f"observed frequency {obs.freq} GHz is not in the encoder's table")
    share = obs.elapsed_s / cfg.deadline_s
    p = prev.p.copy()
    p[level, cfg.interval_index(obs.util_max)] += share
    p.flags.writeable = False
    return EncodedState(
        cfg.table.normalized(cfg.table[level].frequency),
        obs.util_avg,
        obs.util_max,
        prev.u + share * obs.util_avg,
        prev.c + share,
        p,
    )


def flatten(state: EncodedState, layout=StateLayout.COMPACT) -> np.ndarray:
    layout = StateLayout.parse(layout)
    if layout is StateLayout.COMPACT:
        head = [state.freq_normalized, state.util_max, state.u, state.c]
        return np.concatenate([head, state.p.sum(axis=1)])
    head = [state.freq_normalized, state.util_avg, state.util_max, state.u, state.c]
    return np.concatenate([head, state.p.ravel()])
