"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``python3 -m pytest tests/test_acceptance.py``; the lines are
printed in the terminal summary. Criteria 6 to 9 share one training sweep
(5 seeds x 4 workloads, 300 episodes each, a few minutes).

Seed aggregation for 7 to 9 uses the median over the 5 seeds, counting a
policy that misses the deadline as the worst possible outcome.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from dvfslab import _kernels as K
from dvfslab.encoder import EncodedState, EncoderConfig, encode_step
from dvfslab.governors import Ondemand, OndemandConfig, StaticGovernor, ondemand_next
from dvfslab.power import DEFAULT_PARAMS, JETSON2, JETSON_FULL, FrequencyTable
from dvfslab.quant import QuantizedQNet, dequantize, quantize, quantize_values
from dvfslab.rl import QNet, evaluate_policy, train_governor
from dvfslab.rl.qnet import action_inputs, greedy_index
from dvfslab.rl.reward import compute_reward
from dvfslab.trace import RECORD_DTYPE, RECORD_SIZE, TraceBuffer, export, load, time_at_frequency
from dvfslab.workload import EpisodeResult, Observation, audio_recog_like, face_recog_like, run_episode
from oracles import fd_gradient, ondemand_oracle, preactivations, reward_oracle

SEEDS = (0, 1, 2, 3, 4)
EPISODES = 300
LOW = JETSON2.f_min
IO_S = 0.6


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def test_c01_ondemand_conformance():
    rng = np.random.default_rng(101)
    tables = []
    for _ in range(500):
        khz = np.sort(rng.choice(np.arange(100_000, 3_000_001, 1_000), rng.integers(2, 14), replace=False))
        tables.append(FrequencyTable.from_pairs([(k / 1e6, 1.0) for k in khz]))
    t0 = time.perf_counter()
    mismatches = 0
    n = 100_000
    for k in range(n):
        table = tables[rng.integers(len(tables))]
        kind = k % 10
        th = float(rng.uniform())
        u = th if kind == 0 else float(rng.uniform())  # exact threshold hits
        bias = 0.0 if kind in (1, 2) else (1.0 if kind == 3 else float(rng.uniform()))
        if kind == 4:  # land exactly on a level through the proportional formula
            f = table.frequencies[rng.integers(len(table))]
            u = float((f - table.f_min) / (table.f_max - table.f_min))
            th, bias = 1.0, 0.0
        got = table.index_of(ondemand_next(u, OndemandConfig(th, bias), table))
        mismatches += got != ondemand_oracle(u, th, bias, list(table.frequencies))
    elapsed = time.perf_counter() - t0
    report(1, mismatches == 0 and elapsed < 10.0,
           f"Ondemand vs transcription oracle: {mismatches} mismatches in {n} draws, {elapsed:.1f} s")


def test_c02_encoder_conservation():
    rng = np.random.default_rng(102)
    cfg = EncoderConfig(JETSON_FULL, 1.0)
    freqs = JETSON_FULL.frequencies
    worst, violations = 0.0, 0
    for _ in range(10_000):
        s = EncodedState.zero(cfg)
        cfg_T = cfg
        for _ in range(rng.integers(1, 60)):
            a, b = rng.uniform(size=2)
            obs = Observation(float(freqs[rng.integers(len(freqs))]), min(a, b), max(a, b),
                              float(rng.uniform(1e-3, 0.04)))
            s = encode_step(s, obs, cfg_T)
            worst = max(worst, abs(s.p.sum() - s.c))
            violations += s.u > s.c
    report(2, worst <= 1e-9 and violations == 0,
           f"10000 episodes: max |sum p - c| = {worst:.2e}, u > c in {violations} steps")


def _synthetic_episode(rng, T, met):
    freqs = JETSON_FULL.frequencies
    k = rng.integers(1, len(freqs) + 1)
    chosen = rng.choice(freqs, size=k, replace=False)
    shares = rng.dirichlet(np.ones(k))
    obs, t = [], 0.0
    for f, x in zip(chosen, shares):
        u = float(rng.uniform())
        t += x * T
        obs.append(Observation(float(f), u, u, x * T, (u,), t))
    done = T * rng.uniform(0.5, 1.0) if met else T * rng.uniform(1.01, 2.0)
    return EpisodeResult(face_recog_like(period_s=T), obs, [], [], done, None, T), list(zip(chosen, shares))


def test_c03_reward_oracle():
    rng = np.random.default_rng(103)
    worst, nonzero_misses = 0.0, 0
    for k in range(1000):
        T = float(rng.uniform(0.3, 2.0))
        ep, shares = _synthetic_episode(rng, T, met=True)
        util = sum(o.util_avg * o.elapsed_s for o in ep.observations) / T
        want = reward_oracle(shares, util, True, JETSON_FULL.f_min, JETSON_FULL.f_max)
        worst = max(worst, abs(compute_reward(ep, JETSON_FULL) - want))
        missed, _ = _synthetic_episode(rng, T, met=False)
        nonzero_misses += compute_reward(missed, JETSON_FULL) != 0.0
    report(3, worst <= 1e-12 and nonzero_misses == 0,
           f"1000 splits: max error {worst:.1e}; missed deadlines with nonzero reward: {nonzero_misses}")


def test_c04_gradients():
    rng = np.random.default_rng(104)
    sizes = np.array([7, 8, 8, 1], dtype=np.int64)
    worst = 0.0
    for _ in range(100):
        xs, ys = rng.uniform(0, 1, (4, 7)), rng.uniform(0, 1, 4)
        while True:  # keep hidden pre-activations away from the ReLU kink
            theta = rng.uniform(-1, 1, 145)
            pre = np.concatenate([z for x in xs for z in preactivations(theta, sizes, x)[:-1]])
            if np.abs(pre).min() >= 1e-3:
                break
        _, g = K.loss_grad(theta, sizes, xs, ys)
        fd = fd_gradient(theta, sizes, xs, ys, h=1e-5)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), np.linalg.norm(g), 1e-12))
    report(4, worst <= 1e-4, f"100 nets: worst relative gradient error {worst:.2e} (limit 1e-4)")


def test_c05_quantization():
    rng = np.random.default_rng(105)
    v = np.concatenate([rng.uniform(-10, 10, 100_000), [-10.0, 10.0, 0.0]])
    rt = float(np.abs(dequantize(quantize_values(v)) - v).max())
    acts = action_inputs(JETSON2)
    net = QNet.init(rng=rng)
    q = quantize(net, table=JETSON2)
    states = rng.uniform(0, 1, (10_000, 6))
    div, agree = 0.0, 0
    for s in states:
        qi, qf = q.q_values(quantize_values(s)), net.q_values(s, acts)
        div = max(div, float(np.abs(dequantize(qi) - qf).max()))
        agree += int(np.argmax(qi)) == greedy_index(qf)
    doc = json.loads((Path(__file__).parent / "data" / "golden_int_forward.json").read_text())
    golden_bad = sum(int((QuantizedQNet(doc["sizes"], np.array(c["params"])).forward(np.array(c["inputs"]))
                          != np.array(c["outputs"])).sum()) for c in doc["cases"])
    ok = rt <= 10 / 2 ** 30 and div <= 1e-3 and agree / 1e4 >= 0.999 and golden_bad == 0
    report(5, ok, f"round trip {rt:.2e} (limit {10 / 2 ** 30:.2e}), divergence {div:.2e}, "
                  f"argmax agreement {agree / 1e4:.4f}, golden mismatches {golden_bad}")


# ---------------------------------------------------------------------------
# training sweep shared by criteria 6 to 9

CASES = {("face", 0.6): face_recog_like(period_s=0.6),
         ("face", 0.9): face_recog_like(period_s=0.9),
         ("face", 1.2): face_recog_like(period_s=1.2),
         ("audio", 1.0): audio_recog_like(io_s=IO_S, period_s=1.0)}


@pytest.fixture(scope="session")
def sweep():
    out = {}
    for key, w in CASES.items():
        T = w.period_s
        od = run_episode(w, Ondemand(), JETSON_FULL, DEFAULT_PARAMS).energy.total_joules
        perf = run_episode(w, StaticGovernor("performance"), JETSON_FULL, DEFAULT_PARAMS).energy.total_joules
        seeds = []
        for seed in SEEDS:
            res = train_governor(w, JETSON2, DEFAULT_PARAMS, episodes=EPISODES, seed=seed, eval_every=0)
            buf = TraceBuffer(10_000)
            runs = evaluate_policy(res.net, w, JETSON2, DEFAULT_PARAMS, runs=5, trace=buf)
            ev = runs[0]
            recs = buf.records()
            seeds.append({
                "completion": float(np.mean([r.completion_time_s for r in runs])),
                "met": float(np.mean([r.deadline_met for r in runs])),
                "energy": float(np.mean([r.energy.total_joules for r in runs])),
                "low_share": ev.time_at_level(LOW, T) / T,
                "io_low_share": time_at_frequency(recs, LOW, (0.0, IO_S)) / IO_S,
            })
        out[key] = {"ondemand": od, "performance": perf, "seeds": seeds}
    return out


def _median_worst(values, met, worst):
    return float(np.median([v if m == 1.0 else worst for v, m in zip(values, met)]))


@pytest.mark.slow
def test_c06_training_convergence(sweep):
    s = sweep[("face", 0.6)]["seeds"]
    mean_c = float(np.mean([x["completion"] for x in s]))
    met = float(np.mean([x["met"] for x in s]))
    report(6, mean_c <= 1.05 * 0.6 and met >= 0.8,
           f"face 0.6 s, 5 seeds: mean completion {mean_c:.3f} s (limit 0.630), deadline-met rate {met:.2f}")


@pytest.mark.slow
def test_c07_energy_ordering(sweep):
    parts, ok = [], True
    for key in (("face", 0.9), ("face", 1.2), ("audio", 1.0)):
        d = sweep[key]
        s = d["seeds"]
        met = [x["met"] for x in s]
        savings = [1 - x["energy"] / d["ondemand"] for x in s]
        med_saving = _median_worst(savings, met, -np.inf)
        med_energy = _median_worst([x["energy"] for x in s], met, np.inf)
        ok &= med_saving >= 0.03 and med_energy < d["performance"]
        parts.append(f"{key[0]} {key[1]} s: median saving vs Ondemand {med_saving:+.1%} "
                     f"(mean {np.mean(savings):+.1%}), {med_energy:.3f} J vs performance {d['performance']:.3f} J")
    report(7, ok, "; ".join(parts))


@pytest.mark.slow
def test_c08_internal_slack(sweep):
    s = sweep[("audio", 1.0)]["seeds"]
    shares = [x["io_low_share"] for x in s]
    met = [x["met"] for x in s]
    med = _median_worst(shares, met, 0.0)
    report(8, med >= 0.5,
           f"audio 1.0 s: median IO-window time at {LOW} GHz {med:.0%} (per seed "
           f"{', '.join(f'{v:.0%}' if m == 1.0 else 'miss' for v, m in zip(shares, met))})")


@pytest.mark.slow
def test_c09_deadline_monotonicity(sweep):
    meds = [float(np.median([x["low_share"] for x in sweep[("face", T)]["seeds"]])) for T in (0.6, 0.9, 1.2)]
    ok = meds[0] <= meds[1] <= meds[2]
    report(9, ok, "face median low-frequency share at 0.6/0.9/1.2 s: " + " / ".join(f"{m:.2f}" for m in meds))


def test_c10_trace_format(tmp_path):
    rng = np.random.default_rng(110)
    recs = np.frombuffer(rng.integers(0, 256, 1000 * RECORD_SIZE, dtype=np.uint8).tobytes(), RECORD_DTYPE)
    back = load(export(recs, tmp_path / "r.dvtr")).records
    buf = TraceBuffer(500)
    run_episode(audio_recog_like(), Ondemand(), JETSON_FULL, DEFAULT_PARAMS, trace=buf)
    sim = buf.records()
    sim_back = load(export(buf, tmp_path / "s.dvtr")).records
    ok = RECORD_SIZE == 42 and back.tobytes() == recs.tobytes() and sim_back.tobytes() == sim.tobytes()
    report(10, ok, f"record size {RECORD_SIZE} bytes; 1000 random and {len(sim)} simulated records "
                   f"round-trip bit-exact: {back.tobytes() == recs.tobytes() and sim_back.tobytes() == sim.tobytes()}")
