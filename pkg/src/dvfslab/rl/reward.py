"""Sparse end-of-period reward."""


def frequency_weight(f: float, f_min: float, f_max: float) -> float:
    """1 at the lowest frequency, 0 at the highest, cubic in between."""
    return 1.0 - (f ** 3 - f_min ** 3) / (f_max ** 3 - f_min ** 3)


def reward_from_shares(shares, mean_util: float, f_min: float, f_max: float) -> float:
    """``shares`` maps frequency (GHz) to its fraction of the period."""
    r_freq = sum(frequency_weight(f, f_min, f_max) * x for f, x in shares.items())
    return r_freq / 2.0 + mean_util / 2.0


def compute_reward(episode, table, deadline_s=None) -> float:
    """Reward of a finished period: 0 on a deadline miss, else the average of
    the cubic low-frequency time share and the mean CPU utilization over the
    period (idle time counts as zero utilization)."""
    T = episode.period_s if deadline_s is None else deadline_s
    if not episode.completion_time_s <= T + 1e-9:
        return 0.0
    shares = {}
    for obs in episode.observations:
        start = obs.t_end - obs.elapsed_s
        seconds = min(obs.t_end, T) - start
        if seconds > 0:
            shares[obs.freq] = shares.get(obs.freq, 0.0) + seconds / T
    return reward_from_shares(shares, episode.mean_util(until=T), table.f_min, table.f_max)
