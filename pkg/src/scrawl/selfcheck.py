"""Built-in numerical sanity checks, runnable as `scrawl selfcheck`.

These are quick cross-checks of the load-bearing math: analytic gradients
against finite differences, filter behavior against closed forms, and the
slow-target correction against its defining identity (a perfect predictor
must make the corrected input bit-identical to the uncorrected one).  They
run on whatever compute backend is active, so they double as a smoke test
after toggling SCRAWL_NUMBA.
"""

from __future__ import annotations

import math

import numpy as np

from . import pipeline, sim
from .backend import backend_name
from .glyphs import Stroke, StrokePlan
from .hierarchy import (RolloutSettings, UpperReplay, oracle_policy,
                        run_autonomous)
from .nn import LstmParams, MlpParams, sequence_loss_and_grads


def _fd_gradcheck(params, x, y, rng, probes: int = 6, eps: float = 1e-6):
    """Worst relative error between analytic and central-difference grads."""
    _, grads = sequence_loss_and_grads(params, x, y)
    worst = 0.0
    for arr, g in zip(params.arrays(), grads):
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in rng.choice(flat.size, size=min(probes, flat.size),
                              replace=False):
            keep = flat[idx]
            flat[idx] = keep + eps
            up, _ = sequence_loss_and_grads(params, x, y)
            flat[idx] = keep - eps
            dn, _ = sequence_loss_and_grads(params, x, y)
            flat[idx] = keep
            fd = (up - dn) / (2.0 * eps)
            scale = max(abs(fd), abs(gflat[idx]), 1e-8)
            worst = max(worst, abs(fd - gflat[idx]) / scale)
    return worst


def check_mlp_gradients(instances: int = 10):
    rng = np.random.default_rng(20240501)
    worst = 0.0
    for _ in range(instances):
        d_in, d_out = rng.integers(2, 6), rng.integers(1, 4)
        p = MlpParams.init(int(d_in), int(d_out), hidden=7, rng=rng)
        x = rng.normal(size=(3, 4, int(d_in)))
        y = rng.normal(size=(3, 4, int(d_out)))
        worst = max(worst, _fd_gradcheck(p, x, y, rng))
    return worst < 1e-4, f"worst relative error {worst:.2e}"


def check_lstm_gradients(instances: int = 10):
    rng = np.random.default_rng(20240502)
    worst = 0.0
    for _ in range(instances):
        d_in, d_out = rng.integers(2, 6), rng.integers(1, 4)
        p = LstmParams.init(int(d_in), int(d_out), hidden=5, rng=rng)
        x = rng.normal(size=(2, 5, int(d_in)))
        y = rng.normal(size=(2, 5, int(d_out)))
        worst = max(worst, _fd_gradcheck(p, x, y, rng))
    return worst < 1e-4, f"worst relative error {worst:.2e}"


def check_filter_coefficient():
    """One step of the smoother on a unit step must rise by 1 - exp(-w*dt)."""
    y = pipeline.lowpass_filter(np.array([[0.0], [1.0]]), 20.0, 0.002)
    got = float(y[1, 0])
    want = 1.0 - math.exp(-0.04)
    return abs(got - want) < 1e-12, f"first-step gain {got:.9f} vs {want:.9f}"


def check_filter_attenuation():
    """At the cutoff frequency the gain should sit near -3 dB."""
    dt, w = 0.002, 20.0
    t = np.arange(0, 40.0, dt)
    x = np.sin(w * t)[:, None]
    y = pipeline.lowpass_filter(x, w, dt)
    tail = slice(t.size // 2, None)
    gain_db = 20.0 * math.log10(np.max(np.abs(y[tail, 0])))
    return abs(gain_db + 3.01) < 0.5, f"gain at cutoff {gain_db:.2f} dB"


def check_noise_variance():
    rng_seed = 99
    x = np.zeros((1000, 1000))
    noisy = pipeline.add_noise(x, 0.01, rng_seed)
    var = float(np.var(noisy))
    return abs(var - 0.01) < 0.0005, f"sample variance {var:.5f}"


def check_downsample_partition():
    x = np.arange(411 * 2, dtype=float).reshape(411, 2)
    parts = pipeline.downsample_shift(x, 10)
    total = sum(p.shape[0] for p in parts)
    ok = len(parts) == 10 and total == 411
    interleaved = np.concatenate(
        [np.arange(o, 411, 10) for o in range(10)])
    ok = ok and np.array_equal(np.sort(interleaved), np.arange(411))
    return ok, f"{len(parts)} offsets, {total} rows kept"


def _probe_plan():
    pts = np.array([[0.13, -0.01], [0.15, 0.01]])
    return StrokePlan("probe", [Stroke(pts)], draw_speed=0.12,
                      settle_time=0.1, lower_time=0.05, raise_time=0.05,
                      press_ramp=0.05, end_hold=0.1)


def check_feedback_stub_identity():
    """With a perfect predictor the corrected input equals the plain one.

    The correction adds (one-step reference minus previous prediction) to
    the ten-step reference; a stub that replays the reference makes that
    difference cancel exactly, so the network inputs and the resulting
    follower trajectory must match bit for bit with the correction on or
    off.
    """
    cfg = sim.SimConfig()
    ep = sim.run_demonstration(_probe_plan(), 3, cfg, jitter=False)
    replay = UpperReplay.from_episode(ep)
    pol = oracle_policy(replay)
    st = RolloutSettings()
    on = run_autonomous(pol, replay, cfg, True, 11, st)
    pol2 = oracle_policy(replay)
    off = run_autonomous(pol2, replay, cfg, False, 11, st)
    same_x = np.array_equal(on.nn_inputs, off.nn_inputs)
    same_f = np.array_equal(on.f, off.f)
    return same_x and same_f, (
        f"inputs identical: {same_x}, trajectories identical: {same_f}")


CHECKS = [
    ("mlp gradients vs finite differences", check_mlp_gradients),
    ("lstm gradients vs finite differences", check_lstm_gradients),
    ("smoother step response coefficient", check_filter_coefficient),
    ("smoother cutoff attenuation", check_filter_attenuation),
    ("training noise variance", check_noise_variance),
    ("shift downsampling partition", check_downsample_partition),
    ("slow-target correction stub identity", check_feedback_stub_identity),
]


def run_selfcheck(verbose: bool = True) -> bool:
    if verbose:
        print(f"backend: {backend_name()}")
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # noqa: BLE001 - report, keep checking
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok = all_ok and ok
        if verbose:
            print(f"{'ok' if ok else 'FAIL':>4}  {name}: {detail}")
    return all_ok
