"""Independent reference implementations used by the tests.

These are written from the algorithm descriptions with plain Python floats
and loops, without calling into the package's own helpers.
"""

import math

import numpy as np

TOL = 1e-9  # frequencies closer than this are the same level


def ondemand_oracle(u, up_threshold, bias, freqs):
    """Index of the level Ondemand picks; ``freqs`` ascending in GHz."""
    min_f, max_f = freqs[0], freqs[-1]
    if u > up_threshold:
        next_f = max_f
    else:
        next_f = min_f + (max_f - min_f) * u
    next_f = next_f * (1 - bias)
    best = 0
    for i, f in enumerate(freqs):
        if f <= next_f + TOL:
            best = i
    return best


def reward_oracle(shares, util_avg, deadline_met, f_min, f_max):
    """``shares``: list of (frequency, fraction of the period)."""
    if not deadline_met:
        return 0.0
    r_freq = 0.0
    for f, x in shares:
        r_freq += (1 - (f ** 3 - f_min ** 3) / (f_max ** 3 - f_min ** 3)) * x
    return r_freq / 2 + util_avg / 2


def mlp_oracle(theta, sizes, x):
    """Forward pass with explicit loops over units."""
    a = list(x)
    off = 0
    for li in range(len(sizes) - 1):
        n_in, n_out = sizes[li], sizes[li + 1]
        out = []
        for o in range(n_out):
            s = theta[off + n_in * n_out + o]
            for j in range(n_in):
                s += theta[off + o * n_in + j] * a[j]
            out.append(max(0.0, s) if li < len(sizes) - 2 else s)
        off += n_in * n_out + n_out
        a = out
    return a[0]


def preactivations(theta, sizes, x):
    acts, pre, off = np.asarray(x, float), [], 0
    for li in range(len(sizes) - 1):
        n_in, n_out = sizes[li], sizes[li + 1]
        W = np.asarray(theta[off:off + n_in * n_out]).reshape(n_out, n_in)
        b = np.asarray(theta[off + n_in * n_out:off + n_in * n_out + n_out])
        z = W @ acts + b
        pre.append(z)
        acts = np.maximum(z, 0) if li < len(sizes) - 2 else z
        off += n_in * n_out + n_out
    return pre


def mse(theta, sizes, xs, ys):
    return float(np.mean([(y - mlp_oracle(theta, sizes, x)) ** 2 for x, y in zip(xs, ys)]))


def fd_gradient(theta, sizes, xs, ys, h=1e-5):
    g = np.zeros_like(theta)
    for k in range(len(theta)):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        g[k] = (mse(tp, sizes, xs, ys) - mse(tm, sizes, xs, ys)) / (2 * h)
    return g


def round_half_away(x):
    return math.copysign(math.floor(abs(x) + 0.5), x)
