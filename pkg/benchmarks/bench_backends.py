"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at import
time from ``DVFSLAB_DISABLE_JIT``. Compilation is excluded by a warm-up call.

    python3 benchmarks/bench_backends.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, time
import numpy as np
from dvfslab import _kernels as K
from dvfslab.power import DEFAULT_PARAMS, JETSON2
from dvfslab.quant import quantize, quantize_values
from dvfslab.rl import QNet, train_governor
from dvfslab.rl.qnet import action_inputs
from dvfslab.workload import face_recog_like

repeat = int(__import__("sys").argv[1])
rng = np.random.default_rng(0)
net = QNet.init((7, 8, 8, 1), rng)
acts = action_inputs(JETSON2)
states = rng.uniform(0, 1, (4096, 6))
qnet = quantize(net, "compact-v1", JETSON2)
states_q = quantize_values(states)
n = 4096
s, a = states, rng.integers(0, 2, n)
r, term = rng.uniform(0, 1, n), rng.random(n) < 0.1
order = rng.permutation(n)

def timed(fn):
    fn()  # warm-up, includes compilation
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best

def q_loop():
    for k in range(2000):
        net.q_values(states[k], acts)

def int_loop():
    for k in range(2000):
        qnet.q_values(states_q[k])

def train_pool():
    th = net.theta.copy()
    K.train_batches(th, th.copy(), np.zeros_like(th), np.zeros_like(th), 0, net.sizes_array,
                    s, a, r, s, term, acts, order, 16, 0.99, 1e-3, 0.9, 0.999, 1e-8, 32, 0)

def train_short():
    train_governor(face_recog_like(period_s=0.6), JETSON2, DEFAULT_PARAMS, episodes=20, seed=0,
                   eval_every=0)

print(json.dumps({
    "backend": K.BACKEND,
    "float q_values x2000 (s)": timed(q_loop),
    "int q_values x2000 (s)": timed(int_loop),
    "train 256 batches (s)": timed(train_pool),
    "train 20 episodes (s)": timed(train_short),
}))
"""


def run(disable_jit: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env["DVFSLAB_DISABLE_JIT"] = "1" if disable_jit else "0"
    out = subprocess.run([sys.executable, "-c", CHILD, str(repeat)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    jit, ref = run(False, args.repeat), run(True, args.repeat)
    keys = [k for k in jit if k != "backend"]
    print(f"{'kernel':<28}{'numba':>10}{'numpy':>10}{'speed-up':>10}")
    for k in keys:
        print(f"{k:<28}{jit[k]:>10.4f}{ref[k]:>10.4f}{ref[k] / jit[k]:>9.1f}x")


if __name__ == "__main__":
    main()
