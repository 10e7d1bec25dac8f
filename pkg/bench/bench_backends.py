"""Timing comparison between the compiled and pure-numpy backends.

Runs the two hot paths (the 500 Hz simulation loop and one training step
of each network) in a fresh subprocess per backend, since the backend is
chosen at import time from SCRAWL_NUMBA.  Compile time is excluded by a
warmup pass.

    python bench/bench_backends.py [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _time_best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_worker(repeat: int):
    import numpy as np

    from scrawl import glyphs, sim
    from scrawl.backend import backend_name
    from scrawl.nn import (LstmParams, MlpParams, TrainHyper,
                           sequence_loss_and_grads)

    results = {"backend": backend_name()}

    plan = glyphs.glyph_plan("A")
    warm = glyphs.StrokePlan(
        "warm", [glyphs.Stroke(np.array([[0.13, -0.01], [0.14, 0.0]]))],
        settle_time=0.05, lower_time=0.05, raise_time=0.05,
        press_ramp=0.05, end_hold=0.05)
    cfg = sim.SimConfig()
    sim.run_demonstration(warm, 1, cfg, jitter=False)  # trigger compile
    ep = None

    def demo():
        nonlocal ep
        ep = sim.run_demonstration(plan, 1, cfg, jitter=False)

    results["demo_episode_s"] = _time_best(demo, repeat)
    results["demo_samples"] = int(ep.f.shape[0])

    rng = np.random.default_rng(0)
    x = rng.normal(size=(16, 300, 18))
    y = rng.normal(size=(16, 300, 18))
    mlp = MlpParams.init(18, 18, rng=rng)
    lstm = LstmParams.init(18, 18, rng=rng)
    sequence_loss_and_grads(lstm, x[:2, :8], y[:2, :8])  # trigger compile
    results["mlp_train_step_s"] = _time_best(
        lambda: sequence_loss_and_grads(mlp, x, y), repeat)
    results["lstm_train_step_s"] = _time_best(
        lambda: sequence_loss_and_grads(lstm, x, y), repeat)
    print(json.dumps(results))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--worker", choices=("0", "1"), help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker is not None:
        run_worker(args.repeat)
        return

    rows = []
    for flag in ("1", "0"):
        env = dict(os.environ, SCRAWL_NUMBA=flag)
        out = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker", flag,
             "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True, check=True)
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))

    keys = ["demo_episode_s", "mlp_train_step_s", "lstm_train_step_s"]
    names = {"demo_episode_s": "demonstration episode",
             "mlp_train_step_s": "mlp train step (16x300)",
             "lstm_train_step_s": "lstm train step (16x300)"}
    a, b = rows
    print(f"\n{'workload':<28} {a['backend']:>12} {b['backend']:>12} "
          f"{'speedup':>9}")
    for k in keys:
        ratio = b[k] / a[k] if a[k] > 0 else float("inf")
        print(f"{names[k]:<28} {a[k]:>11.4f}s {b[k]:>11.4f}s {ratio:>8.1f}x")
    print(f"\nsimulated samples per episode: {a['demo_samples']}")


if __name__ == "__main__":
    main()
