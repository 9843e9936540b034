"""Command-line harness: ``dvfslab run|train|compare|plot|bench``.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.
"""

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import _kernels as K
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DvfsLabError
from .governors import BUILTIN_NAMES, make_builtin
from .power import energy_of_trace
from .quant import (dequantize, load_quantized, quantize, quantize_values, save_quantized)
from .rl import RLGovernor, evaluate_policy, load_model, save_model, train_governor
from .rl.agent import write_curve
from .rl.qnet import action_inputs, greedy_index
from .rl.reward import compute_reward
from .trace import TraceBuffer, export, load, segments_of, to_csv

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(t: float) -> str:
    return f"{t:g}"


def _check_name(name: str):
    if name == "rl" or name in BUILTIN_NAMES:
        return name
    if name.startswith("pinned:"):
        try:
            float(name.split(":", 1)[1])
            return name
        except ValueError:
            pass
    raise UsageError(f"unknown governor {name!r}; choose from {', '.join(BUILTIN_NAMES)}, "
                     "pinned:<GHz> or rl")


def _governor(name: str, cfg: ExperimentConfig, deadline: float):
    """Returns ``(governor, table)`` for a built-in name or ``rl``."""
    if name == "rl":
        if cfg.model is None:
            raise ConfigError("the rl governor needs a model file ([rl] model = ...)")
        net, layout, table = load_model(cfg.model)
        return RLGovernor(net, table, deadline, layout), table
    return make_builtin(name, **cfg.tunables.get(name, {})), cfg.table


def _metadata(cfg, args, command):
    return {"command": command, "version": __version__, "seed": args.seed,
            "config": str(args.config) if args.config else None, "backend": K.BACKEND}


def _write_meta(out: Path, meta: dict):
    (out / "metadata.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def _simulate(name, cfg, deadline, seed, trace_path=None):
    from .workload import run_episode

    gov, table = _governor(name, cfg, deadline)
    buf = TraceBuffer(capacity=100_000) if trace_path else None
    res = run_episode(cfg.workload(deadline), gov, table, cfg.params, cfg.sampling_period_s,
                      seed=seed, jitter=cfg.jitter, trace=buf)
    if buf is not None:
        if name == "rl":
            buf.annotate_last(reward=compute_reward(res, table))
        export(buf, trace_path)
    return res, table


def cmd_run(cfg: ExperimentConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = _check_name(args.governor or cfg.governor)
    rows = []
    for T in cfg.deadlines:
        stem = f"run_{name.replace(':', '-')}_T{_fmt(T)}"
        res, _ = _simulate(name, cfg, T, args.seed, out / f"{stem}.dvtr")
        (out / f"{stem}.csv").write_text(to_csv(load(out / f"{stem}.dvtr").records))
        rows.append((name, T, res.completion_time_s, res.energy.total_joules, res.deadline_met))
        print(f"{name} T={_fmt(T)}s completion={res.completion_time_s:.4f}s "
              f"energy={res.energy.total_joules:.4f}J deadline_met={res.deadline_met}")
    _write_meta(out, _metadata(cfg, args, "run"))
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = (args.seed,) if args.seed is not None else cfg.seeds
    episodes = cfg.episodes if args.episodes is None else args.episodes
    for T in cfg.deadlines:
        wl = cfg.workload(T)
        for seed in seeds:
            t0 = time.perf_counter()
            res = train_governor(wl, cfg.rl_table, cfg.params, cfg.train, episodes=episodes,
                                 seed=seed, sampling_period_s=cfg.sampling_period_s,
                                 layout=cfg.layout)
            stem = f"model_T{_fmt(T)}_s{seed}"
            save_model(res.net, out / f"{stem}.json", cfg.layout, cfg.rl_table)
            write_curve(res.curve, out / f"curve_T{_fmt(T)}_s{seed}.csv")
            try:
                save_quantized(quantize(res.net, cfg.layout, cfg.rl_table), out / f"{stem}.dvqn")
            except DvfsLabError as exc:
                print(f"warning: no quantized model for {stem}: {exc}", file=sys.stderr)
            last = res.curve[-1] if res.curve else None
            summary = (f" final_reward={last.mean_reward:.4f} completion={last.mean_completion_s:.4f}s"
                       if last else "")
            print(f"trained T={_fmt(T)}s seed={seed} episodes={episodes} "
                  f"in {time.perf_counter() - t0:.1f}s{summary}")
    meta = _metadata(cfg, args, "train")
    meta.update(episodes=episodes, seeds=list(seeds))
    _write_meta(out, meta)
    return EXIT_OK


COMPARE_COLUMNS = ("governor", "deadline_s", "energy_j", "normalized_energy", "completion_s",
                   "deadline_met_rate", "trace_energy_j")


def cmd_compare(cfg: ExperimentConfig, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = tuple(args.governors.split(",")) if args.governors else cfg.governors
    names = tuple(_check_name(n.strip()) for n in names)
    if "performance" not in names:
        names = ("performance",) + tuple(names)
    seeds = (args.seed,) if args.seed is not None else cfg.seeds
    rows = []
    for T in cfg.deadlines:
        base = None
        for name in names:
            energies, times, met, traced = [], [], [], []
            for seed in seeds:
                path = out / f"trace_{name.replace(':', '-')}_T{_fmt(T)}_s{seed}.dvtr"
                res, table = _simulate(name, cfg, T, seed, path)
                energies.append(res.energy.total_joules)
                times.append(res.completion_time_s)
                met.append(res.deadline_met)
                traced.append(energy_of_trace(segments_of(load(path).records, table),
                                              cfg.params).total_joules)
            e = float(np.mean(energies))
            if name == "performance":
                base = e
            rows.append([name, T, e, None, float(np.mean(times)), float(np.mean(met)),
                         float(np.mean(traced))])
        for r in rows:
            if r[1] == T:
                r[3] = r[2] / base
    rows.sort(key=lambda r: (r[1], names.index(r[0])))
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_COLUMNS)
        for r in rows:
            w.writerow([r[0], _fmt(r[1]), f"{r[2]:.6f}", f"{r[3]:.4f}", f"{r[4]:.6f}",
                        f"{r[5]:.3f}", f"{r[6]:.6f}"])
    with open(out / "energy_bars.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("deadline_s", "governor", "normalized_energy"))
        for r in rows:
            w.writerow([_fmt(r[1]), r[0], f"{r[3]:.2f}"])
    print(f"{'governor':<16}{'T':>6}{'energy J':>11}{'norm':>7}{'done s':>9}{'met':>6}")
    for r in rows:
        print(f"{r[0]:<16}{r[1]:>6g}{r[2]:>11.4f}{r[3]:>7.2f}{r[4]:>9.4f}{r[5]:>6.2f}")
    meta = _metadata(cfg, args, "compare")
    meta["seeds"] = list(seeds)
    _write_meta(out, meta)
    return EXIT_OK


def _svg(fig, path):
    import matplotlib.pyplot as plt

    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "dvfslab"
    import matplotlib.pyplot as plt

    return plt


def plot_trace(trace_path, svg_path):
    plt = _pyplot()
    recs = load(trace_path).records
    t = recs["timestamp_us"] / 1e6
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.step(t, recs["freq_khz"] / 1e6, where="post", label="freq (GHz)")
    ax.plot(t, recs["util_max_millis"] / 1000, label="util_max")
    ax.plot(t, recs["util_avg_millis"] / 1000, label="util_avg")
    ax.set_xlabel("time (s)")
    ax.legend(loc="upper right")
    _svg(fig, svg_path)
    return svg_path


def plot_curve(csv_path, svg_path):
    plt = _pyplot()
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    ep = [int(r["episode"]) for r in rows]
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(ep, [float(r["mean_reward"]) for r in rows], label="mean reward")
    ax.plot(ep, [float(r["mean_completion_s"]) for r in rows], label="completion (s)")
    ax.set_xlabel("episode")
    ax.legend(loc="lower right")
    _svg(fig, svg_path)
    return svg_path


def cmd_plot(cfg, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for src in args.inputs:
        src = Path(src)
        if not src.is_file():
            raise ConfigError(f"{src} does not exist")
        dst = out / (src.stem + ".svg")
        if src.suffix == ".csv":
            plot_curve(src, dst)
        else:
            plot_trace(src, dst)
        print(dst)
    return EXIT_OK


def _latency_stats(fn, inputs, iterations):
    times = np.empty(iterations)
    n = len(inputs)
    for k in range(iterations):
        x = inputs[k % n]
        t0 = time.perf_counter_ns()
        fn(x)
        times[k] = time.perf_counter_ns() - t0
    us = times / 1e3
    return {"mean_us": float(us.mean()), "p50_us": float(np.percentile(us, 50)),
            "p99_us": float(np.percentile(us, 99))}


def cmd_bench(cfg, args) -> int:
    if args.iterations < 1:
        raise UsageError("--iterations must be at least 1")
    path = Path(args.model)
    if not path.is_file():
        raise ConfigError(f"model file {path} does not exist")
    if path.suffix == ".dvqn":
        qnet = load_quantized(path)
        net = qnet.dequantized()
        actions = dequantize(qnet.action_q)
    else:
        net, layout, table = load_model(path)
        qnet = quantize(net, layout, table)
        actions = action_inputs(table)
    rng = np.random.default_rng(args.seed or 0)
    states = rng.uniform(0.0, 1.0, (1024, net.sizes[0] - 1))
    states_q = [quantize_values(s) for s in states]
    # warm the compiled kernels before timing
    qnet.q_values(states_q[0])
    net.q_values(states[0], actions)
    result = {
        "iterations": args.iterations,
        "backend": K.BACKEND,
        "int": _latency_stats(lambda s: int(np.argmax(qnet.q_values(s))), states_q, args.iterations),
        "float": _latency_stats(lambda s: greedy_index(net.q_values(s, actions)), list(states),
                                args.iterations),
    }
    faster = result["int"]["mean_us"] < result["float"]["mean_us"]
    result["note"] = ("integer path is faster" if faster else
                      "integer path is not faster on this host; both paths are dominated by "
                      "per-call dispatch overhead at this network size")
    for path_name in ("int", "float"):
        s = result[path_name]
        print(f"{path_name:<6} mean={s['mean_us']:.2f}us p50={s['p50_us']:.2f}us p99={s['p99_us']:.2f}us")
    print(result["note"])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment config")
    common.add_argument("--seed", type=int, default=None, help="override the config seeds")
    common.add_argument("--out", type=Path, default=None, help="output directory")

    p = _Parser(prog="dvfslab", description="DVFS governor lab")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    r = sub.add_parser("run", parents=[common], help="simulate one governor and write traces")
    r.add_argument("--governor", help="built-in name, pinned:<GHz> or rl")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", parents=[common], help="train the learned governor")
    t.add_argument("--episodes", type=int, default=None)
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", parents=[common], help="energy/deadline table across governors")
    c.add_argument("--governors", help="comma-separated names, rl needs a model")
    c.set_defaults(func=cmd_compare)

    pl = sub.add_parser("plot", parents=[common], help="SVG plots of traces or training curves")
    pl.add_argument("inputs", nargs="+", help=".dvtr trace files or curve CSV files")
    pl.set_defaults(func=cmd_plot)

    b = sub.add_parser("bench", parents=[common], help="inference latency, integer vs float")
    b.add_argument("model", help="model .json or quantized .dvqn")
    b.add_argument("--iterations", type=int, default=10_000)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.out is None:
            args.out = cfg.out
        if args.seed is not None and args.command == "run":
            cfg = cfg.with_(seeds=(args.seed,))
        elif args.seed is None and args.command == "run":
            args.seed = cfg.seeds[0]
        return args.func(cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DvfsLabError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
