"""The learned governor and the interleaved act/learn loop."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..encoder import EncoderConfig, EncodedState, StateLayout, encode_step, flatten
from ..governors import Governor
from ..power import FrequencyTable, PowerParams
from ..trace import FLAG_RANDOM
from ..workload import Workload, run_episode
from .ddqn import DDQNTrainer, TrainConfig
from .qnet import QNet, action_inputs, greedy_index
from .replay import EpisodeTransitions, ReplayBuckets, build_training_pool
from .reward import compute_reward


def select_action(net: QNet, state, explore: float, rng, action_values):
    """Epsilon-greedy choice; returns ``(level_index, was_random)``.

    With probability ``explore`` a uniformly random level, otherwise the
    argmax of Q with ties resolved towards the lowest level.
    """
    if explore > 0.0 and rng.random() < explore:
        return int(rng.integers(len(action_values))), True
    return greedy_index(net.q_values(state, action_values)), False


class RLGovernor(Governor):
    """Encodes the period's observations and picks levels from a Q-network.

    Pass ``quantized`` to decide with the integer engine instead of the
    float network. Visited states and chosen actions are kept for training.
    """

    name = "rl"

    def __init__(self, net, table: FrequencyTable, deadline_s: float,
                 layout=StateLayout.COMPACT, util_bounds=(0.6, 1.0), explore: float = 0.0,
                 rng=None, quantized=None):
        self.net = net
        self.quantized = quantized
        self.table = table
        self.layout = StateLayout.parse(layout)
        self.cfg = EncoderConfig(table, deadline_s, util_bounds)
        self.explore = explore
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.action_values = action_inputs(table)
        self.reset()

    def reset(self):
        self.state = EncodedState.zero(self.cfg)
        self.states = []
        self.actions = []
        self.randomized = []
        self.last_flags = 0

    def _choose(self):
        vec = flatten(self.state, self.layout)
        if self.explore > 0.0 and self.rng.random() < self.explore:
            a, rand = int(self.rng.integers(len(self.table))), True
        elif self.quantized is not None:
            a, rand = self.quantized.argmax_action(vec), False
        else:
            a, rand = greedy_index(self.net.q_values(vec, self.action_values)), False
        self.states.append(vec)
        self.actions.append(a)
        self.randomized.append(rand)
        self.last_flags = FLAG_RANDOM if rand else 0
        return self.table[a]

    def start(self, table):
        self._check_table(table)
        return self._choose()

    def next(self, observation, table):
        self.state = encode_step(self.state, observation, self.cfg)
        return self._choose()

    def _check_table(self, table):
        if table.digest() != self.table.digest():
            raise ValueError("governor was built for a different frequency table")

    def transitions(self, reward: float, horizon: int = None) -> EpisodeTransitions:
        """Transitions of the last run, truncated to ``horizon`` decisions."""
        n = len(self.states) if horizon is None else min(horizon + 1, len(self.states))
        return EpisodeTransitions.from_trajectory(self.states[:n], self.actions[:n], reward)


@dataclass
class CurvePoint:
    episode: int
    mean_reward: float
    std_reward: float
    mean_completion_s: float
    train_reward: float = 0.0
    explore: float = 0.0
    mean_loss: float = float("nan")


@dataclass
class TrainResult:
    net: QNet
    curve: list = field(default_factory=list)
    bucket_sizes: tuple = ()
    seed: int = 0


def evaluate_policy(net, workload: Workload, table, params, sampling_period_s=0.02, runs=5,
                    seed=0, jitter=0.0, layout=StateLayout.COMPACT, quantized=None, trace=None):
    """Greedy runs of the policy; returns the episode results."""
    results = []
    n_sim = runs if jitter else 1  # without jitter every run is identical
    for k in range(n_sim):
        gov = RLGovernor(net, table, workload.period_s, layout, quantized=quantized)
        results.append(run_episode(workload, gov, table, params, sampling_period_s,
                                   seed=seed + k, jitter=jitter, trace=trace if k == 0 else None))
    return results * (runs // n_sim)


def train_governor(workload: Workload, table: FrequencyTable, params: PowerParams,
                   cfg: TrainConfig = TrainConfig(), episodes: int = 300, seed: int = 0,
                   sampling_period_s: float = 0.02, layout=StateLayout.COMPACT,
                   eval_every: int = 1, eval_runs: int = 5, eval_jitter: float = 0.0,
                   util_bounds=(0.6, 1.0), callback=None) -> TrainResult:
    """Alternate exploring runs and DDQN training; fully determined by ``seed``."""
    layout = StateLayout.parse(layout)
    enc = EncoderConfig(table, workload.period_s, util_bounds)
    sizes = (enc.state_size(layout) + 1, *cfg.hidden, 1)
    init_ss, explore_ss, pool_ss = np.random.SeedSequence(seed).spawn(3)
    net = QNet.init(sizes, np.random.default_rng(init_ss), cfg.init_scale)
    explore_rng = np.random.default_rng(explore_ss)
    pool_rng = np.random.default_rng(pool_ss)
    trainer = DDQNTrainer(net, cfg, action_inputs(table))
    buckets = ReplayBuckets(capacity=cfg.bucket_capacity)
    result = TrainResult(net, seed=seed)

    for ep in range(episodes):
        p = cfg.schedule(ep)
        gov = RLGovernor(net, table, workload.period_s, layout, util_bounds, explore=p, rng=explore_rng)
        run = run_episode(workload, gov, table, params, sampling_period_s, seed=ep,
                          truncate_at_deadline=True)
        reward = compute_reward(run, table)
        buckets.add(gov.transitions(reward, horizon=len(run.observations)))
        pool = build_training_pool(buckets, cfg.per_bucket, cfg.batch_size, pool_rng)
        losses = trainer.train_on_pool(pool)

        if eval_every and (ep + 1) % eval_every == 0:
            evals = evaluate_policy(net, workload, table, params, sampling_period_s, eval_runs,
                                    seed=10_000 + ep, jitter=eval_jitter, layout=layout)
            rewards = np.array([compute_reward(r, table) for r in evals])
            point = CurvePoint(ep + 1, float(rewards.mean()), float(rewards.std()),
                               float(np.mean([r.completion_time_s for r in evals])),
                               reward, p, float(losses.mean()) if losses.size else float("nan"))
            result.curve.append(point)
            if callback is not None:
                callback(point)
    result.bucket_sizes = tuple(buckets.sizes())
    return result


CURVE_COLUMNS = ("episode", "mean_reward", "std", "mean_completion_s")


def write_curve(curve, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS + ("train_reward", "explore", "mean_loss"))
        for p in curve:
            w.writerow([p.episode, f"{p.mean_reward:.6f}", f"{p.std_reward:.6f}",
                        f"{p.mean_completion_s:.6f}", f"{p.train_reward:.6f}", f"{p.explore:.2f}",
                        f"{p.mean_loss:.6g}"])
    return path
