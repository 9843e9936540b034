"""Reward-bucketed episode replay."""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass
class EpisodeTransitions:
    """All transitions of one period; only the last one is terminal."""

    states: np.ndarray  # (n, d)
    actions: np.ndarray  # (n,) level indices
    rewards: np.ndarray  # (n,)
    next_states: np.ndarray  # (n, d), zeros where terminal
    terminal: np.ndarray  # (n,) bool
    reward: float = 0.0

    def __len__(self):
        return self.actions.shape[0]

    @classmethod
    def from_trajectory(cls, states, actions, reward: float) -> "EpisodeTransitions":
        """Chain ``states[k] --actions[k]--> states[k+1]``; the final state is terminal."""
        states = np.asarray(states, dtype=np.float64)
        n = len(states) - 1
        if n < 1:
            raise ValueError("need at least two states for one transition")
        s = states[:-1].copy()
        nxt = states[1:].copy()
        nxt[-1] = 0.0
        rewards = np.zeros(n)
        rewards[-1] = reward
        terminal = np.zeros(n, dtype=bool)
        terminal[-1] = True
        return cls(s, np.asarray(actions[:n], dtype=np.int64), rewards, nxt, terminal, float(reward))


def bucket_index(reward: float, n_buckets: int = 10) -> int:
    if not 0.0 <= reward <= 1.0:
        raise ValueError(f"reward {reward} outside [0, 1]")
    return min(int(math.floor(reward * n_buckets + 1e-12)), n_buckets - 1)


class ReplayBuckets:
    """Bucket ``k`` holds episodes whose reward lies in ``[k/10, (k+1)/10)``."""

    def __init__(self, n_buckets: int = 10, capacity: int = 1000):
        self.n_buckets = n_buckets
        self.capacity = capacity
        self.buckets = [deque(maxlen=capacity) for _ in range(n_buckets)]

    def add(self, episode: EpisodeTransitions) -> int:
        k = bucket_index(episode.reward, self.n_buckets)
        self.buckets[k].append(episode)
        return k

    def __len__(self):
        return sum(len(b) for b in self.buckets)

    def sizes(self):
        return [len(b) for b in self.buckets]


@dataclass
class TrainingPool:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminal: np.ndarray
    order: np.ndarray  # shuffled transition indices
    batch_size: int
    episodes_per_bucket: tuple = ()

    def __len__(self):
        return self.order.shape[0]

    @property
    def n_batches(self) -> int:
        return -(-len(self) // self.batch_size)

    def batches(self):
        for lo in range(0, len(self), self.batch_size):
            idx = self.order[lo:lo + self.batch_size]
            yield (self.states[idx], self.actions[idx], self.rewards[idx],
                   self.next_states[idx], self.terminal[idx])


def build_training_pool(buckets: ReplayBuckets, per_bucket: int, batch_size: int, rng) -> TrainingPool:
    """Draw up to ``per_bucket`` episodes (without replacement) from every
    non-empty bucket, flatten them to transitions and shuffle."""
    chosen = []
    counts = []
    for bucket in buckets.buckets:
        if not bucket:
            counts.append(0)
            continue
        take = min(per_bucket, len(bucket))
        idx = rng.choice(len(bucket), size=take, replace=False)
        chosen.extend(bucket[i] for i in sorted(idx))
        counts.append(take)
    if not chosen:
        raise ValueError("replay is empty")
    cat = lambda name: np.concatenate([getattr(e, name) for e in chosen])
    states = cat("states")
    order = rng.permutation(states.shape[0])
    return TrainingPool(states, cat("actions"), cat("rewards"), cat("next_states"),
                        cat("terminal"), order, batch_size, tuple(counts))
