"""Two-rate policy execution with output-error feedback.

A slow reference replay (a recorded follower trajectory at the 20 ms
network rate) stands in for a planning layer: it emits a ten-step-ahead
target, refreshed every ten network steps and held in between, plus a
one-step-ahead value every step.  The fast learned layer maps the measured
follower state and the (feature-selected) slow target to next-step
predictions of both arms; the predicted leader state drives the follower's
bilateral controller, zero-order held over ten 2 ms control steps.

The feedback mechanism corrects the held target by the error between the
one-step reference and the fast layer's previous prediction.  It runs with
a one-step delay (at step k the reference for step k is compared with the
prediction of step k made at step k-1), which keeps the loop causal; the
correction only exists during autonomy, never in training data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .errors import RolloutError, ShapeError
from .nn import NormStats, Policy, lstm_step, mlp_forward
from .pipeline import LOOKAHEAD, NN_PERIOD
from .sim import STATE_WIDTH, Episode, SimConfig, _filter_coeffs

ROLLOUT_FORMAT_VERSION = 1


class FeatureSet(Enum):
    """Slice of the follower state the slow reference exposes."""

    POS = "pos"
    POS_VEL = "pos_vel"
    POS_VEL_TRQ = "pos_vel_trq"

    @property
    def dim(self) -> int:
        return {"pos": 3, "pos_vel": 6, "pos_vel_trq": 9}[self.value]

    def select(self, state):
        state = np.asarray(state)
        if state.shape[-1] != STATE_WIDTH:
            raise ShapeError(f"state width {state.shape[-1]}, needs {STATE_WIDTH}")
        return state[..., :self.dim]

    @classmethod
    def from_label(cls, label: str) -> "FeatureSet":
        for fs in cls:
            if fs.value == label:
                return fs
        raise KeyError(f"unknown feature set {label!r}")


@dataclass
class UpperReplay:
    """Slow-rate reference trajectory replayed by the upper layer."""

    follower: np.ndarray  # (T, 9) at the network rate
    leader: np.ndarray    # (T, 9), kept for oracle checks and debugging
    glyph: str
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_episode(cls, ep: Episode, period: int = NN_PERIOD):
        return cls(np.ascontiguousarray(ep.f[::period]),
                   np.ascontiguousarray(ep.l[::period]),
                   ep.meta.get("plan_id", "?"),
                   {"episode_seed": ep.meta.get("seed"),
                    "dt": ep.meta.get("dt"), "period": period})

    def __len__(self):
        return self.follower.shape[0]


def upper_outputs(replay: UpperReplay, k: int, fs: FeatureSet):
    """(one-step, ten-step) reference values at network step k.

    The ten-step target refreshes only when k crosses a multiple of ten and
    is held in between; indices past the end clamp to the final sample.
    """
    last = len(replay) - 1
    if k < 0 or k >= last:
        raise IndexError(f"step {k} outside replay of length {last + 1}")
    f1 = fs.select(replay.follower[min(k + 1, last)])
    f10 = fs.select(replay.follower[min(NN_PERIOD * (k // NN_PERIOD + 1), last)])
    return f1, f10


def feedback_combine(f10, f1, fhat_prev, enabled: bool):
    """Corrected slow target: f10 + (f1 - fhat_prev) when enabled.

    fhat_prev is the fast layer's previous prediction of the step f1 refers
    to; None (first step) or disabled feedback returns f10 unchanged.
    """
    f10 = np.asarray(f10, dtype=float)
    if not enabled or fhat_prev is None:
        return f10.copy()
    f1 = np.asarray(f1, dtype=float)
    fhat_prev = np.asarray(fhat_prev, dtype=float)
    if f1.shape != f10.shape or fhat_prev.shape != f10.shape:
        raise ShapeError(f"feedback widths differ: {f10.shape} {f1.shape} "
                         f"{fhat_prev.shape}")
    return f10 + (f1 - fhat_prev)


@dataclass
class FeedbackState:
    """Carries the previous full prediction between network steps."""

    enabled: bool
    prev_pred: np.ndarray | None = None  # physical follower prediction (9,)


# ---------------------------------------------------------------------------
# policy runtimes


@dataclass
class OracleSource:
    """Stub parameters: replays the recorded next-step states verbatim."""

    follower: np.ndarray
    leader: np.ndarray
    step: int = 0


def oracle_policy(replay: UpperReplay) -> Policy:
    """Perfect-prediction stub used for loop checks and sim tuning.

    Identity normalization makes its outputs pass through the rollout's
    de/normalization unchanged, so its predictions match the replay bitwise.
    """
    src = OracleSource(replay.follower.copy(), replay.leader.copy())
    d_in = STATE_WIDTH + FeatureSet.POS_VEL_TRQ.dim
    return Policy("oracle", FeatureSet.POS_VEL_TRQ.value, src,
                  NormStats.identity(d_in),
                  NormStats.identity(2 * STATE_WIDTH),
                  {"oracle": True})


class PolicyRuntime:
    """Stateful wrapper: holds LSTM hidden state / the oracle step counter."""

    def __init__(self, policy: Policy):
        self.policy = policy
        self.hidden = None

    def reset(self):
        self.hidden = None
        if isinstance(self.policy.params, OracleSource):
            self.policy.params.step = 0

    def infer(self, x):
        kind = self.policy.kind
        if kind == "mlp":
            return mlp_forward(self.policy.params, x)
        if kind == "lstm":
            y, self.hidden = lstm_step(self.policy.params, x, self.hidden)
            return y
        if kind == "oracle":
            src = self.policy.params
            last = src.follower.shape[0] - 1
            idx = min(src.step + 1, last)
            src.step += 1
            return np.concatenate([src.follower[idx], src.leader[idx]])
        raise RolloutError(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------------------
# autonomous rollout


@dataclass
class RolloutSettings:
    init_perturb_rad: float = 0.01   # revolute joints, uniform bound
    init_perturb_m: float = 0.001    # pen axis
    feedback_space: str = "normalized"  # or "physical"


@dataclass
class RolloutLog:
    """Control-rate follower log plus every network-rate channel."""

    f: np.ndarray          # (10*(T-1)+1, 9)
    ink: np.ndarray
    ink_flag: np.ndarray
    nn_inputs: np.ndarray  # (T-1, d_in), normalized, exactly as inferred
    nn_f_hat: np.ndarray   # (T-1, 9) physical
    nn_l_hat: np.ndarray   # (T-1, 9) physical
    nn_upper: np.ndarray   # (T-1, |F|) normalized slow target after feedback
    nn_error: np.ndarray   # (T-1, |F|) normalized feedback term
    meta: dict

    @property
    def nn_grid_states(self):
        """Follower states on the network-step grid, (T, 9)."""
        return self.f[::NN_PERIOD]


def save_rollout(path, rl: RolloutLog):
    np.savez_compressed(
        path, f=rl.f, ink=rl.ink, ink_flag=rl.ink_flag,
        nn_inputs=rl.nn_inputs, nn_f_hat=rl.nn_f_hat, nn_l_hat=rl.nn_l_hat,
        nn_upper=rl.nn_upper, nn_error=rl.nn_error,
        meta=np.array(json.dumps(rl.meta, sort_keys=True)))


def load_rollout(path) -> RolloutLog:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != ROLLOUT_FORMAT_VERSION:
            raise ValueError(f"unsupported rollout format in {path}")
        rl = RolloutLog(z["f"], z["ink"], z["ink_flag"], z["nn_inputs"],
                        z["nn_f_hat"], z["nn_l_hat"], z["nn_upper"],
                        z["nn_error"], meta)
    for a in (rl.f, rl.ink, rl.ink_flag, rl.nn_inputs, rl.nn_f_hat,
              rl.nn_l_hat, rl.nn_upper, rl.nn_error):
        a.flags.writeable = False
    return rl


def run_autonomous(policy: Policy, replay: UpperReplay, sim_cfg: SimConfig,
                   feedback: bool, seed,
                   settings: RolloutSettings | None = None) -> RolloutLog:
    """Write one character autonomously and log everything.

    Per network step k (one per replay interval): measure the follower,
    build the corrected slow target, infer, then hold the predicted leader
    state as the follower's bilateral command for ten control steps.  The
    seed only perturbs the initial follower pose.
    """
    settings = settings or RolloutSettings()
    if settings.feedback_space not in ("normalized", "physical"):
        raise RolloutError(f"unknown feedback space {settings.feedback_space!r}")
    fs = FeatureSet.from_label(policy.feature_set)
    t_replay = len(replay)
    if t_replay < 2:
        raise RolloutError(f"replay too short ({t_replay} steps)")
    d_in = STATE_WIDTH + fs.dim
    if policy.in_stats.mean.shape[0] != d_in:
        raise ShapeError(f"policy expects {policy.in_stats.mean.shape[0]} "
                         f"inputs, rollout builds {d_in}")

    rng = np.random.default_rng(seed)
    perturb = np.concatenate([
        rng.uniform(-settings.init_perturb_rad, settings.init_perturb_rad, 2),
        rng.uniform(-settings.init_perturb_m, settings.init_perturb_m, 1)])
    q = replay.follower[0, :3].copy() + perturb
    v = np.zeros(3)
    qprev = q.copy()
    vest = np.zeros(3)
    doby = np.zeros(3)
    rfoy = np.zeros(3)
    tcp = np.zeros(3)
    tdis = np.zeros(3)
    text = np.zeros(3)

    n2 = NN_PERIOD * (t_replay - 1) + 1
    out_f = np.empty((n2, STATE_WIDTH))
    out_ink = np.empty((n2, 3))
    out_flag = np.empty(n2, dtype=np.uint8)
    n_nn = t_replay - 1
    nn_inputs = np.empty((n_nn, d_in))
    nn_f_hat = np.empty((n_nn, STATE_WIDTH))
    nn_l_hat = np.empty((n_nn, STATE_WIDTH))
    nn_upper = np.empty((n_nn, fs.dim))
    nn_error = np.empty((n_nn, fs.dim))

    arm = sim_cfg.arm
    jn = np.asarray(arm.inertia, dtype=float)
    fric = np.asarray(arm.friction, dtype=float)
    kp = np.asarray(sim_cfg.gains.kp, dtype=float)
    kd = np.asarray(sim_cfg.gains.kd, dtype=float)
    kf = np.asarray(sim_cfg.gains.kf, dtype=float)
    a_v, a_d, a_r = _filter_coeffs(sim_cfg)
    meas_args = (jn, fric, arm.dt, a_v, a_d, a_r, sim_cfg.observers.g_d,
                 arm.l1, arm.l2, sim_cfg.contact.stiffness,
                 sim_cfg.contact.damping, sim_cfg.contact.ink_threshold,
                 out_f, out_ink, out_flag)

    in_mean = policy.in_stats.mean
    in_std = policy.in_stats.std
    u_mean, u_std = in_mean[STATE_WIDTH:], in_std[STATE_WIDTH:]
    runtime = PolicyRuntime(policy)
    runtime.reset()
    fstate = FeedbackState(enabled=feedback)
    last = t_replay - 1

    for k in range(n_nn):
        kernels.follower_measure(q, v, qprev, vest, doby, rfoy, tcp, tdis,
                                 text, *meas_args, NN_PERIOD * k)
        f_meas = out_f[NN_PERIOD * k]
        f10 = fs.select(replay.follower[min(NN_PERIOD * (k // NN_PERIOD + 1),
                                            last)])
        f1_ref = fs.select(replay.follower[k])
        if fstate.enabled and fstate.prev_pred is not None:
            prev_sel = fs.select(fstate.prev_pred)
            if settings.feedback_space == "normalized":
                err = (f1_ref - u_mean) / u_std - (prev_sel - u_mean) / u_std
                u_norm = (f10 - u_mean) / u_std + err
            else:
                u_phys = feedback_combine(f10, f1_ref, prev_sel, True)
                u_norm = (u_phys - u_mean) / u_std
                err = u_norm - (f10 - u_mean) / u_std
        else:
            u_norm = (f10 - u_mean) / u_std
            err = np.zeros(fs.dim)
        x = np.empty(d_in)
        x[:STATE_WIDTH] = (f_meas - in_mean[:STATE_WIDTH]) / in_std[:STATE_WIDTH]
        x[STATE_WIDTH:] = u_norm
        y_norm = runtime.infer(x)
        y_phys = policy.out_stats.denormalize(y_norm)
        f_hat = y_phys[:STATE_WIDTH]
        l_hat = y_phys[STATE_WIDTH:]
        fstate.prev_pred = f_hat
        nn_inputs[k] = x
        nn_f_hat[k] = f_hat
        nn_l_hat[k] = l_hat
        nn_upper[k] = u_norm
        nn_error[k] = err
        status = kernels.follower_advance(
            q, v, qprev, vest, doby, rfoy, tcp, tdis, text,
            np.ascontiguousarray(l_hat[:3]),
            np.ascontiguousarray(l_hat[3:6]),
            np.ascontiguousarray(l_hat[6:9]),
            jn, fric, kp, kd, kf, arm.dt, a_v, a_d, a_r,
            sim_cfg.observers.g_d, arm.l1, arm.l2,
            sim_cfg.contact.stiffness, sim_cfg.contact.damping,
            sim_cfg.contact.ink_threshold,
            out_f, out_ink, out_flag, NN_PERIOD * k, NN_PERIOD)
        if status >= 0:
            raise RolloutError(
                f"follower diverged at network step {k}, sub-step {status}")
    kernels.follower_measure(q, v, qprev, vest, doby, rfoy, tcp, tdis,
                             text, *meas_args, n2 - 1)

    meta = {
        "format_version": ROLLOUT_FORMAT_VERSION,
        "kind": policy.kind,
        "feature_set": policy.feature_set,
        "glyph": replay.glyph,
        "feedback": bool(feedback),
        "feedback_space": settings.feedback_space,
        "seed": None if seed is None else int(seed),
        "replay_steps": int(t_replay),
        "nn_steps": int(n_nn),
        "dt": arm.dt,
        "nn_period": NN_PERIOD,
        "lookahead": LOOKAHEAD,
        "config_hash": sim_cfg.content_hash(),
        "policy_meta": {k2: policy.meta[k2]
                        for k2 in ("train_seed", "dataset")
                        if k2 in policy.meta},
    }
    return RolloutLog(out_f, out_ink, out_flag, nn_inputs, nn_f_hat,
                      nn_l_hat, nn_upper, nn_error, meta)
