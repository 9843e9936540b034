"""Experiment configuration read from INI files.

Schema (every key optional unless noted)::

    [experiment]
    scenario = face_recog_like        ; or use [workload] file = path.ini
    deadlines = 0.6, 0.9, 1.2         ; seconds, one run per deadline
    sampling_period_s = 0.02
    seeds = 0, 1, 2, 3, 4
    episodes = 300
    governor = ondemand               ; used by ``run``
    governors = performance, ondemand, conservative, powersave, rl
    out = results
    jitter = 0.0                      ; relative jitter of the sampling period

    [scenario]                        ; keyword arguments of the scenario
    io_s = 0.6

    [workload]
    file = my_workload.ini            ; relative to the config file

    [table]                           ; platform table for built-in governors
    preset = jetson_full              ; or levels = 0.307@0.8, 1.479@1.1

    [power]                           ; calibration ratios or explicit constants
    idle_ratio = 0.64
    busy_ratio = 2.0
    base_board_power = 0.5

    [governor.ondemand]               ; tunables per built-in governor
    up_threshold = 0.8
    powersave_bias = 0.0

    [rl]
    table = jetson2
    layout = compact-v1
    model = model.json                ; needed when ``rl`` is compared or run
    lr = 0.001
    batch_size = 16
    sync_every = 32
    gamma = 0.99
"""

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .encoder import StateLayout
from .errors import ConfigError
from .power import (DEFAULT_PARAMS, JETSON2, JETSON_FULL, FrequencyTable, PowerParams,
                    TABLE_PRESETS, params_from_section, table_from_section)
from .rl.ddqn import TrainConfig
from .workload import SCENARIOS, Workload, load_workload, scenario


def _floats(text: str):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str):
    return tuple(int(x) for x in text.split(",") if x.strip())


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _names(text: str):
    return tuple(x.strip() for x in text.split(",") if x.strip())


@dataclass
class ExperimentConfig:
    scenario: str = "face_recog_like"
    dims: dict = field(default_factory=dict)
    workload_file: Path = None
    table: FrequencyTable = JETSON_FULL
    params: PowerParams = DEFAULT_PARAMS
    governor: str = "ondemand"
    governors: tuple = ("performance", "ondemand", "conservative", "powersave")
    tunables: dict = field(default_factory=dict)  # governor name -> dict
    deadlines: tuple = (1.0,)
    sampling_period_s: float = 0.02
    seeds: tuple = (0,)
    episodes: int = 300
    out: Path = Path("results")
    jitter: float = 0.0
    rl_table: FrequencyTable = JETSON2
    layout: StateLayout = StateLayout.COMPACT
    model: Path = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.deadlines or min(self.deadlines) <= 0:
            raise ConfigError("deadlines must be > 0")
        if self.sampling_period_s <= 0:
            raise ConfigError("sampling_period_s must be > 0")
        if self.episodes < 0:
            raise ConfigError("episodes must be >= 0")
        if not 0.0 <= self.jitter < 1.0:
            raise ConfigError("jitter must be in [0, 1)")
        if self.workload_file is None and self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.workload_file is not None and not Path(self.workload_file).is_file():
            raise ConfigError(f"workload file {self.workload_file} does not exist")
        if self.model is not None and not Path(self.model).is_file():
            raise ConfigError(f"model file {self.model} does not exist")

    def workload(self, deadline: float = None) -> Workload:
        deadline = self.deadlines[0] if deadline is None else deadline
        if self.workload_file is not None:
            return load_workload(self.workload_file).with_period(deadline)
        dims = dict(self.dims)
        dims["period_s"] = deadline
        return scenario(self.scenario, **dims)

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


_TRAIN_KEYS = {"lr": float, "batch_size": int, "sync_every": int, "gamma": float,
               "per_bucket": int, "bucket_capacity": int}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_parser(cp, base_dir=path.parent)


def config_from_parser(cp: configparser.ConfigParser, base_dir=Path(".")) -> ExperimentConfig:
    base_dir = Path(base_dir)
    resolve = lambda p: p if Path(p).is_absolute() else base_dir / p
    kw = {}
    try:
        ex = cp["experiment"] if cp.has_section("experiment") else {}
        if "scenario" in ex:
            kw["scenario"] = ex["scenario"].strip()
        if "deadlines" in ex:
            kw["deadlines"] = _floats(ex["deadlines"])
        if "sampling_period_s" in ex:
            kw["sampling_period_s"] = float(ex["sampling_period_s"])
        if "seeds" in ex:
            kw["seeds"] = _ints(ex["seeds"])
        if "episodes" in ex:
            kw["episodes"] = int(ex["episodes"])
        if "governor" in ex:
            kw["governor"] = ex["governor"].strip()
        if "governors" in ex:
            kw["governors"] = _names(ex["governors"])
        if "out" in ex:
            kw["out"] = resolve(ex["out"].strip())
        if "jitter" in ex:
            kw["jitter"] = float(ex["jitter"])
        if cp.has_section("scenario"):
            kw["dims"] = {k: _number(v) for k, v in cp["scenario"].items()}
        if cp.has_section("workload") and "file" in cp["workload"]:
            kw["workload_file"] = resolve(cp["workload"]["file"].strip())
        if cp.has_section("table"):
            kw["table"] = table_from_section(cp["table"])
        if cp.has_section("power"):
            kw["params"] = params_from_section(cp["power"], JETSON2)
        kw["tunables"] = {s.split(".", 1)[1]: dict(cp[s]) for s in cp.sections()
                          if s.startswith("governor.")}
        if cp.has_section("rl"):
            rl = cp["rl"]
            if "table" in rl:
                name = rl["table"].strip()
                if name not in TABLE_PRESETS:
                    raise ConfigError(f"unknown table preset {name!r}")
                kw["rl_table"] = TABLE_PRESETS[name]
            if "layout" in rl:
                kw["layout"] = StateLayout.parse(rl["layout"].strip())
            if "model" in rl:
                kw["model"] = resolve(rl["model"].strip())
            train = {k: conv(rl[k]) for k, conv in _TRAIN_KEYS.items() if k in rl}
            kw["train"] = TrainConfig(**train)
    except ConfigError:
        raise
    except (ValueError, KeyError, configparser.Error) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return ExperimentConfig(**kw)
