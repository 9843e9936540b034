"""Double-DQN updates with Adam over replayed batches."""

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels as K
from ..errors import TrainingDiverged
from .qnet import QNet


@dataclass(frozen=True)
class ExplorationSchedule:
    """Probability of a random action by episode index."""

    stages: tuple = ((50, 0.7), (50, 0.5))
    final: float = 0.3

    def __post_init__(self):
        for n, p in self.stages:
            if n < 0 or not 0.0 <= p <= 1.0:
                raise ValueError("stage lengths must be >= 0 and probabilities in [0, 1]")
        if not 0.0 <= self.final <= 1.0:
            raise ValueError("final probability must be in [0, 1]")

    def __call__(self, episode: int) -> float:
        start = 0
        for n, p in self.stages:
            if episode < start + n:
                return p
            start += n
        return self.final


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 16
    sync_every: int = 32  # batches between target-network copies
    gamma: float = 0.99
    per_bucket: int = 64
    bucket_capacity: int = 1000
    schedule: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    hidden: tuple = (8, 8)
    init_scale: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.sync_every, self.per_bucket, self.bucket_capacity) <= 0:
            raise ValueError("training hyper-parameters must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")


class DDQNTrainer:
    """Online net, target net and Adam state; one ``step`` per batch."""

    def __init__(self, net: QNet, cfg: TrainConfig, action_values):
        self.net = net
        self.target = net.copy()
        self.cfg = cfg
        self.action_values = np.ascontiguousarray(action_values, dtype=np.float64)
        self.m = np.zeros(net.n_params)
        self.v = np.zeros(net.n_params)
        self.adam_steps = 0
        self.batches_seen = 0

    def targets(self, rewards, next_states, terminal) -> np.ndarray:
        """``r`` for terminal transitions, else ``r + gamma * Q'(s', argmax_a Q(s', a))``."""
        return K.ddqn_targets(self.net.theta, self.target.theta, self.net.sizes_array,
                              np.ascontiguousarray(rewards, dtype=np.float64),
                              np.ascontiguousarray(next_states, dtype=np.float64),
                              np.ascontiguousarray(terminal, dtype=np.bool_),
                              self.action_values, self.cfg.gamma)

    def _run(self, states, actions, rewards, next_states, terminal, order):
        cfg = self.cfg
        losses, self.adam_steps, self.batches_seen = K.train_batches(
            self.net.theta, self.target.theta, self.m, self.v, self.adam_steps,
            self.net.sizes_array,
            np.ascontiguousarray(states, dtype=np.float64),
            np.ascontiguousarray(actions, dtype=np.int64),
            np.ascontiguousarray(rewards, dtype=np.float64),
            np.ascontiguousarray(next_states, dtype=np.float64),
            np.ascontiguousarray(terminal, dtype=np.bool_),
            self.action_values, np.ascontiguousarray(order, dtype=np.int64),
            cfg.batch_size, cfg.gamma, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps,
            cfg.sync_every, self.batches_seen)
        if losses.shape[0] and not np.isfinite(losses[-1]):
            raise TrainingDiverged(
                f"non-finite loss {losses[-1]} after {self.adam_steps} updates "
                f"(max |theta| = {np.max(np.abs(self.net.theta)):.3g})")
        return losses

    def step(self, states, actions, rewards, next_states, terminal) -> float:
        """One gradient step on one batch; returns the pre-update loss."""
        n = len(actions)
        if n == 0:
            raise ValueError("empty batch")
        order = np.arange(n)
        saved = self.cfg.batch_size
        if n > saved:
            raise ValueError(f"batch of {n} exceeds batch_size {saved}")
        return float(self._run(states, actions, rewards, next_states, terminal, order)[0])

    def train_on_pool(self, pool) -> np.ndarray:
        """All batches of a training pool in one compiled loop; returns batch losses."""
        if pool.batch_size != self.cfg.batch_size:
            raise ValueError("pool was chunked with a different batch size")
        return self._run(pool.states, pool.actions, pool.rewards, pool.next_states,
                         pool.terminal, pool.order)


def ddqn_train_step(trainer: DDQNTrainer, batch) -> float:
    """Apply one DDQN update for ``batch = (s, a, r, s_next, terminal)``."""
    return trainer.step(*batch)


def batch_loss(net: QNet, target: QNet, batch, action_values, gamma) -> float:
    """Loss the next update would see, without changing anything."""
    s, a, r, s2, term = batch
    tr = DDQNTrainer(net, TrainConfig(gamma=gamma), action_values)
    tr.target = target
    y = tr.targets(r, s2, term)
    x = np.concatenate([np.asarray(s, float), np.asarray(action_values)[np.asarray(a)][:, None]], axis=1)
    q = net.forward(x)
    return float(np.mean((y - q) ** 2))
