"""Period-granular simulation of one periodic multi-core task under a governor.

Time advances in sampling periods. Inside a period, compute phases burn
per-core cycles at the current package frequency (a core with ``c`` giga-cycles
left needs ``c / f`` seconds) and IO waits burn wall time with the cores
idle. At each period boundary the governor sees the period's
:class:`Observation` and chooses the level for the next period.

A task runs from t=0; its period ``T`` is also its deadline. Simulation
continues past completion until ``T`` (idle tail) so energy and rewards cover
the whole period, and past ``T`` until completion when the deadline is missed,
unless ``truncate_at_deadline`` is set.
"""

import configparser
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .encoder import EncoderConfig, EncodedState, encode_step
from .errors import ConfigError, GovernorProtocolError, SimulationError
from .power import EnergyReport, FreqLevel, FrequencyTable, PowerParams, energy_of_trace
from .trace import FLAG_DEADLINE_MISS, FLAG_IO, FLAG_TERMINAL, TraceBuffer

_EPS = 1e-12
_TIME_EPS = 1e-9


class PhaseKind(str, Enum):
    COMPUTE = "compute"
    IO_WAIT = "io_wait"


@dataclass(frozen=True)
class Phase:
    """One step of a task.

    A compute phase carries giga-cycles per core and ends when the busiest
    core finishes. With ``wait_io`` it first waits for background IO to end.
    An IO phase blocks for ``wall_duration`` seconds, or with ``background``
    starts IO that overlaps the phases after it (a recording running while
    the CPU works).
    """

    kind: PhaseKind
    per_core_cycles: tuple = ()
    wall_duration: float = 0.0
    background: bool = False
    wait_io: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", PhaseKind(self.kind))
        object.__setattr__(self, "per_core_cycles", tuple(float(c) for c in self.per_core_cycles))
        if self.kind is PhaseKind.COMPUTE:
            cyc = self.per_core_cycles
            if not cyc or min(cyc) < 0 or max(cyc) <= 0:
                raise ValueError("compute phase needs non-negative cycles with at least one > 0")
        elif not self.wall_duration > 0:
            raise ValueError("IO phase needs a positive wall duration")

    @classmethod
    def compute(cls, cycles, wait_io=False) -> "Phase":
        return cls(PhaseKind.COMPUTE, tuple(cycles), wait_io=wait_io)

    @classmethod
    def io(cls, seconds, background=False) -> "Phase":
        return cls(PhaseKind.IO_WAIT, wall_duration=float(seconds), background=background)


@dataclass(frozen=True)
class Workload:
    phases: tuple
    period_s: float
    cores: int
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.period_s > 0:
            raise ValueError("period must be positive")
        if self.cores < 1:
            raise ValueError("need at least one core")
        for ph in self.phases:
            if ph.kind is PhaseKind.COMPUTE and len(ph.per_core_cycles) != self.cores:
                raise ValueError(f"compute phase has {len(ph.per_core_cycles)} entries for {self.cores} cores")

    def with_period(self, period_s: float) -> "Workload":
        return Workload(self.phases, period_s, self.cores, self.name)

    @property
    def total_cycles(self) -> float:
        return sum(sum(ph.per_core_cycles) for ph in self.phases)

    def io_seconds(self) -> float:
        return sum(ph.wall_duration for ph in self.phases if ph.kind is PhaseKind.IO_WAIT)

    def runtime_at(self, frequency: float) -> float:
        """Completion time at a fixed frequency (no period granularity)."""
        t = 0.0
        io_end = 0.0
        for ph in self.phases:
            if ph.kind is PhaseKind.IO_WAIT:
                if ph.background:
                    io_end = max(io_end, t + ph.wall_duration)
                else:
                    t += ph.wall_duration
            else:
                if ph.wait_io:
                    t = max(t, io_end)
                t += max(ph.per_core_cycles) / frequency
        return t


@dataclass(frozen=True)
class Observation:
    freq: float  # GHz in force during the period
    util_avg: float
    util_max: float
    elapsed_s: float
    per_core: tuple = ()
    t_end: float = 0.0
    io_active: bool = False


@dataclass
class EpisodeResult:
    workload: Workload
    observations: list
    levels: list  # level in force during each period
    actions: list  # level index chosen after each observation
    completion_time_s: float
    energy: EnergyReport
    end_time_s: float
    segments: list = field(default_factory=list)
    cycles_done: float = 0.0
    io_time_s: float = 0.0

    @property
    def period_s(self) -> float:
        return self.workload.period_s

    @property
    def deadline_met(self) -> bool:
        return self.completion_time_s <= self.period_s + _TIME_EPS

    def time_at_level(self, frequency: float, until: Optional[float] = None) -> float:
        """Seconds spent at ``frequency``, optionally only before ``until``."""
        total = 0.0
        for obs in self.observations:
            if abs(obs.freq - frequency) > _TIME_EPS:
                continue
            start = obs.t_end - obs.elapsed_s
            end = obs.t_end if until is None else min(obs.t_end, until)
            total += max(0.0, end - start)
        return total

    def mean_util(self, until: Optional[float] = None) -> float:
        horizon = self.end_time_s if until is None else until
        acc = 0.0
        for obs in self.observations:
            start = obs.t_end - obs.elapsed_s
            end = min(obs.t_end, horizon)
            if end > start:
                acc += obs.util_avg * (end - start)
        return acc / horizon if horizon > 0 else 0.0


class _Engine:
    """Mutable execution state of one task instance."""

    def __init__(self, workload: Workload):
        self.w = workload
        self.phase = 0
        self.remaining = None
        self.io_left = 0.0
        self.bg_io_end = 0.0
        self.completion = math.inf
        self.cycles_done = 0.0
        self.io_time = 0.0
        self._load_phase()

    @property
    def done(self) -> bool:
        return self.phase >= len(self.w.phases)

    def _load_phase(self):
        while not self.done:
            ph = self.w.phases[self.phase]
            if ph.kind is PhaseKind.COMPUTE:
                self.remaining = np.array(ph.per_core_cycles, dtype=float)
                return
            if ph.background:
                self.bg_io_end = max(self.bg_io_end, self._now + ph.wall_duration)
                self.io_time += ph.wall_duration
                self.phase += 1
                continue
            self.io_left = ph.wall_duration
            self.io_time += ph.wall_duration
            return

    _now = 0.0

    def advance(self, t0: float, length: float, freq: float):
        """Run ``length`` seconds from ``t0``; returns per-core busy seconds."""
        busy = np.zeros(self.w.cores)
        tau = 0.0
        io_seen = t0 < self.bg_io_end - _TIME_EPS
        while tau < length - _EPS and not self.done:
            now = t0 + tau
            self._now = now
            ph = self.w.phases[self.phase]
            room = length - tau
            if ph.kind is PhaseKind.IO_WAIT:
                io_seen = True
                used = min(self.io_left, room)
                self.io_left -= used
                tau += used
                if self.io_left <= _EPS:
                    self._finish(t0 + tau)
                continue
            if ph.wait_io and now < self.bg_io_end - _TIME_EPS:
                tau += min(self.bg_io_end - now, room)
                continue
            need = self.remaining / freq
            finish = float(need.max())
            if finish <= room + _EPS:
                busy += need
                self.cycles_done += float(self.remaining.sum())
                self.remaining[:] = 0.0
                tau += finish
                self._finish(t0 + tau)
            else:
                spent = np.minimum(need, room)
                busy += spent
                burnt = spent * freq
                self.cycles_done += float(burnt.sum())
                self.remaining = np.maximum(self.remaining - burnt, 0.0)
                tau = length
        return np.minimum(busy, length), io_seen

    def _finish(self, t):
        self.phase += 1
        self._now = t
        self._load_phase()
        if self.done:
            self.completion = t if self.completion == math.inf else self.completion


def run_episode(workload: Workload, governor, table: FrequencyTable, params: PowerParams,
                sampling_period_s: float = 0.02, seed: int = 0, *,
                truncate_at_deadline: bool = False, jitter: float = 0.0,
                trace: Optional[TraceBuffer] = None, max_periods: float = 50.0) -> EpisodeResult:
    """Simulate one task period under ``governor``.

    ``jitter`` stretches or shrinks each sampling period by up to that
    fraction (seeded); the period that reaches the deadline is cut short so
    that a boundary falls exactly on it.
    """
    if not sampling_period_s > 0:
        raise ValueError("sampling period must be positive")
    if not 0.0 <= jitter < 1.0:
        raise ValueError("jitter must be in [0, 1)")
    rng = np.random.default_rng(seed)
    T = workload.period_s
    horizon = max_periods * T
    eng = _Engine(workload)
    enc_cfg = EncoderConfig(table, T)
    state = EncodedState.zero(enc_cfg)

    governor.reset()
    if trace is not None and getattr(governor, "layout", None) is not None:
        trace.layout = governor.layout.value
    level = _checked(governor.start(table), table, governor)
    t = 0.0
    observations, levels, actions, segments = [], [], [], []
    while True:
        if truncate_at_deadline and t >= T - _TIME_EPS:
            break
        if eng.done and t >= T - _TIME_EPS:
            break
        if t > horizon:
            raise SimulationError(f"task did not finish within {horizon:g} s under {governor.name}")
        length = sampling_period_s
        if jitter:
            length *= 1.0 + jitter * rng.uniform(-1.0, 1.0)
        if t < T - _TIME_EPS and t + length > T - _TIME_EPS:
            length = T - t
        busy, io_seen = eng.advance(t, length, level.frequency)
        util = busy / length
        t_end = T if abs(t + length - T) <= _TIME_EPS else t + length
        obs = Observation(level.frequency, float(util.mean()), float(util.max()), length,
                          tuple(float(u) for u in util), t_end, io_seen)
        observations.append(obs)
        levels.append(level)
        segments.append((level, obs.util_avg, length))
        t = t_end
        state = encode_step(state, obs, enc_cfg)
        next_level = _checked(governor.next(obs, table), table, governor)
        actions.append(table.index_of(next_level))
        if trace is not None:
            flags = FLAG_IO if io_seen else 0
            if abs(t - T) <= _TIME_EPS:
                flags |= FLAG_TERMINAL
                if not eng.done:
                    flags |= FLAG_DEADLINE_MISS
            trace.record(int(round(t * 1e6)), level.khz, obs.util_max, obs.util_avg, obs.per_core,
                         _q6(state),
                         actions[-1], 0.0, flags | getattr(governor, "last_flags", 0))
        level = next_level

    return EpisodeResult(workload, observations, levels, actions, eng.completion,
                         energy_of_trace(segments, params), t, segments, eng.cycles_done, eng.io_time)


def _q6(state):
    # compact layout for two-level tables; extra levels fold into the top slot
    p = state.p.sum(axis=1)
    return (state.freq_normalized, state.util_max, state.u, state.c, p[0], p[1:].sum())


def _checked(level, table: FrequencyTable, governor) -> FreqLevel:
    if not isinstance(level, FreqLevel):
        raise GovernorProtocolError(f"{governor.name} returned {level!r}, not a FreqLevel")
    i = table.find(level.frequency)
    if i is None or table[i].voltage != level.voltage:
        raise GovernorProtocolError(f"{governor.name} returned {level.frequency} GHz, not in the table")
    return table[i]


# ---------------------------------------------------------------------------
# scenarios


def _fmax_cycles(seconds, f_max):
    return seconds * f_max


def face_recog_like(cores: int = 4, period_s: float = 1.0, runtime_s: float = 0.35,
                    f_max: float = 1.479) -> Workload:
    """Single-threaded read/pre-process, then multi-threaded detection.

    Stage lengths at ``f_max`` alternate single-core and all-core work so the
    average utilization swings while the maximum stays at 100%.
    """
    shares = (0.25, 0.35, 0.10, 0.30)  # single, parallel, single, parallel
    phases = []
    for k, share in enumerate(shares):
        busy = _fmax_cycles(runtime_s * share, f_max)
        if k % 2 == 0:
            cyc = [busy] + [0.0] * (cores - 1)
        else:
            cyc = [busy] * cores
        phases.append(Phase.compute(cyc))
    return Workload(tuple(phases), period_s, cores, "face_recog_like")


def audio_recog_like(cores: int = 4, io_s: float = 0.6, period_s: float = 1.0,
                     face_s: float = 0.32, analysis_s: float = 0.28,
                     f_max: float = 1.479) -> Workload:
    """Recording in the background while faces are processed, then audio analysis.

    At ``f_max`` the CPU idles ``io_s - face_s`` seconds inside the task waiting
    for the recording, and the task ends at ``io_s + analysis_s``.
    """
    if face_s > io_s:
        raise ValueError("face stage must fit inside the recording for internal slack")
    face = face_recog_like(cores, period_s, face_s, f_max)
    analysis = _fmax_cycles(analysis_s, f_max)
    phases = [Phase.io(io_s, background=True), *face.phases,
              Phase.compute([analysis] + [analysis * 0.5] * (cores - 1), wait_io=True)]
    return Workload(tuple(phases), period_s, cores, "audio_recog_like")


def unbalanced(cores: int = 4, period_s: float = 1.0, segments: int = 4,
               segment_s: float = 0.1, f_max: float = 1.479) -> Workload:
    """Alternating all-core and single-core segments of equal length at ``f_max``."""
    busy = _fmax_cycles(segment_s, f_max)
    phases = []
    for k in range(segments):
        cyc = [busy] * cores if k % 2 == 0 else [busy] + [0.0] * (cores - 1)
        phases.append(Phase.compute(cyc))
    return Workload(tuple(phases), period_s, cores, "unbalanced")


def mibench_like(cores: int = 4, period_s: float = 1.0, runtime_s: float = 0.3,
                 f_max: float = 1.479) -> Workload:
    """One balanced compute phase sized to ``runtime_s`` at ``f_max``."""
    busy = _fmax_cycles(runtime_s, f_max)
    return Workload((Phase.compute([busy] * cores),), period_s, cores, "mibench_like")


SCENARIOS = {
    "face_recog_like": face_recog_like,
    "audio_recog_like": audio_recog_like,
    "unbalanced": unbalanced,
    "mibench_like": mibench_like,
}


def scenario(name: str, **dims) -> Workload:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    if dims.get("cores", 1) < 1:
        raise ValueError("cores must be >= 1")
    return factory(**dims)


# ---------------------------------------------------------------------------
# plain-text workload files


def workload_to_config(workload: Workload) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp["workload"] = {"name": workload.name, "period_s": repr(workload.period_s),
                      "cores": str(workload.cores), "phases": str(len(workload.phases))}
    for i, ph in enumerate(workload.phases):
        sec = {"kind": ph.kind.value}
        if ph.kind is PhaseKind.COMPUTE:
            sec["cycles"] = ", ".join(repr(c) for c in ph.per_core_cycles)
            sec["wait_io"] = str(ph.wait_io).lower()
        else:
            sec["seconds"] = repr(ph.wall_duration)
            sec["background"] = str(ph.background).lower()
        cp[f"phase.{i}"] = sec
    return cp


def save_workload(workload: Workload, path):
    with open(path, "w") as fh:
        workload_to_config(workload).write(fh)


def workload_from_config(cp: configparser.ConfigParser) -> Workload:
    try:
        head = cp["workload"]
        n = head.getint("phases")
        phases = []
        for i in range(n):
            sec = cp[f"phase.{i}"]
            if sec["kind"] == PhaseKind.COMPUTE.value:
                cyc = [float(x) for x in sec["cycles"].split(",")]
                phases.append(Phase.compute(cyc, wait_io=sec.getboolean("wait_io", False)))
            else:
                phases.append(Phase.io(float(sec["seconds"]), background=sec.getboolean("background", False)))
        return Workload(tuple(phases), head.getfloat("period_s"), head.getint("cores"),
                        head.get("name", "custom"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad workload file: {exc}") from exc


def load_workload(path) -> Workload:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"cannot read workload file {path}")
    return workload_from_config(cp)
