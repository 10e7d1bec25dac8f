"""Two-arm bilateral writing simulator.

Both arms are identical 3-joint desk robots: two revolute links moving the
pen tip in the board plane plus one prismatic pen axis normal to it.  A
scripted hand guides the leader pen along a stroke plan; four-channel
bilateral control synchronizes the follower, whose pen writes on a stiff
board.  Joint dynamics are decoupled (J*acc = tau + tau_ext - b*vel) and
integrated semi-implicitly at 2 ms.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import glyphs, kernels
from .errors import ShapeError, SimulationError

EPISODE_FORMAT_VERSION = 1
STATE_WIDTH = 9  # [theta(3), vel(3), tau_hat(3)]


@dataclass
class ArmConfig:
    l1: float = 0.15
    l2: float = 0.15
    inertia: tuple = (0.01, 0.01, 0.5)    # kg*m^2, kg*m^2, kg
    friction: tuple = (0.05, 0.05, 2.0)   # viscous, per joint
    dt: float = 0.002


@dataclass
class ObserverConfig:
    g_v: float = 100.0  # velocity pseudo-differentiation cutoff, rad/s
    g_d: float = 100.0  # disturbance observer cutoff
    g_r: float = 100.0  # reaction force observer cutoff


@dataclass
class GainConfig:
    kp: tuple = (400.0, 400.0, 400.0)
    kd: tuple = (40.0, 40.0, 40.0)
    kf: tuple = (1.0, 1.0, 1.0)


@dataclass
class HandConfig:
    """Scripted-demonstrator impedance, per axis group.

    The in-plane stiffness is deliberately high: the grip couples to the
    arms mostly through the force servo (the disturbance observer cancels
    slow external pushes), so a soft hand tracks with seconds of lag.  The
    damping values sit well below the 500 Hz sampling stability bound of
    the direct (above observer bandwidth) path, dh < J/dt per axis.
    """

    kh_xy: float = 10000.0  # N/m
    dh_xy: float = 100.0    # N*s/m
    kh_z: float = 2000.0
    dh_z: float = 100.0


@dataclass
class ContactConfig:
    stiffness: float = 2000.0   # N/m
    damping: float = 10.0       # N*s/m
    ink_threshold: float = 0.3  # N


@dataclass
class SimConfig:
    arm: ArmConfig = field(default_factory=ArmConfig)
    observers: ObserverConfig = field(default_factory=ObserverConfig)
    gains: GainConfig = field(default_factory=GainConfig)
    hand: HandConfig = field(default_factory=HandConfig)
    contact: ContactConfig = field(default_factory=ContactConfig)

    def as_dict(self):
        return asdict(self)

    def content_hash(self):
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# kinematics


def forward_kinematics(theta, cfg: SimConfig):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (3,):
        raise ShapeError(f"joint vector has shape {theta.shape}, needs (3,)")
    return np.array(kernels.pen_tip(theta[0], theta[1], theta[2],
                                    cfg.arm.l1, cfg.arm.l2))


def inverse_kinematics(x, y, cfg: SimConfig):
    """Planar joints reaching tip (x, y); fixed elbow branch (q2 <= 0)."""
    l1, l2 = cfg.arm.l1, cfg.arm.l2
    r2 = x * x + y * y
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if c2 < -1.0 or c2 > 1.0:
        raise ValueError(f"point ({x:.3f}, {y:.3f}) is outside the workspace")
    q2 = -math.acos(c2)
    q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2),
                                       l1 + l2 * math.cos(q2))
    return q1, q2


def jacobian(theta, cfg: SimConfig):
    j11, j12, j21, j22 = kernels.planar_jacobian(theta[0], theta[1],
                                                 cfg.arm.l1, cfg.arm.l2)
    return np.array([[j11, j12], [j21, j22]])


# ---------------------------------------------------------------------------
# recorded episodes


@dataclass
class Episode:
    f: np.ndarray         # follower state rows (N, 9)
    l: np.ndarray         # leader state rows (N, 9)
    ink: np.ndarray       # (N, 3): tip x, tip y, contact force
    ink_flag: np.ndarray  # (N,) uint8, 1 while the pen deposits ink
    meta: dict

    @property
    def n_samples(self):
        return self.f.shape[0]

    @property
    def duration(self):
        return self.f.shape[0] * self.meta["dt"]


def save_episode(path, ep: Episode):
    meta = dict(ep.meta)
    meta.setdefault("format_version", EPISODE_FORMAT_VERSION)
    np.savez_compressed(path, f=ep.f, l=ep.l, ink=ep.ink,
                        ink_flag=ep.ink_flag,
                        meta=np.array(json.dumps(meta, sort_keys=True)))


def load_episode(path) -> Episode:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != EPISODE_FORMAT_VERSION:
            raise ValueError(f"unsupported episode format in {path}")
        ep = Episode(z["f"], z["l"], z["ink"], z["ink_flag"], meta)
    for a in (ep.f, ep.l, ep.ink, ep.ink_flag):
        a.flags.writeable = False
    return ep


# ---------------------------------------------------------------------------
# demonstration


def _filter_coeffs(cfg: SimConfig):
    dt = cfg.arm.dt
    a_v = math.exp(-cfg.observers.g_v * dt)
    a_d = math.exp(-cfg.observers.g_d * dt)
    a_r = math.exp(-cfg.observers.g_r * dt)
    return a_v, a_d, a_r


def initial_pose(plan_start, cfg: SimConfig):
    """Joint pose with the pen tip at plan_start = (x, y, z)."""
    q1, q2 = inverse_kinematics(plan_start[0], plan_start[1], cfg)
    return np.array([q1, q2, plan_start[2]])


def run_demonstration(plan: glyphs.StrokePlan, seed, cfg: SimConfig,
                      jitter: bool = True) -> Episode:
    """Record one bilateral demonstration of a stroke plan.

    The seed drives waypoint and pressure jitter when jitter is on; the
    simulation itself is deterministic.  Both arms start at rest on the
    plan's entry point.
    """
    rng = np.random.default_rng(seed)
    used = glyphs.jitter_plan(plan, rng) if jitter else plan
    pdes, press, pen_down = glyphs.compile_plan(used, cfg.arm.dt)
    n = pdes.shape[0]
    q0 = initial_pose(pdes[0], cfg)
    out_f = np.empty((n, STATE_WIDTH))
    out_l = np.empty((n, STATE_WIDTH))
    out_ink = np.empty((n, 3))
    out_flag = np.empty(n, dtype=np.uint8)
    a_v, a_d, a_r = _filter_coeffs(cfg)
    status = kernels.demo_episode(
        cfg.arm.dt, cfg.arm.l1, cfg.arm.l2,
        np.asarray(cfg.arm.inertia, dtype=float),
        np.asarray(cfg.arm.friction, dtype=float),
        np.asarray(cfg.gains.kp, dtype=float),
        np.asarray(cfg.gains.kd, dtype=float),
        np.asarray(cfg.gains.kf, dtype=float),
        a_v, a_d, a_r, cfg.observers.g_d,
        cfg.hand.kh_xy, cfg.hand.dh_xy, cfg.hand.kh_z, cfg.hand.dh_z,
        cfg.contact.stiffness, cfg.contact.damping,
        cfg.contact.ink_threshold,
        pdes, press, pen_down, q0,
        out_f, out_l, out_ink, out_flag)
    if status >= 0:
        raise SimulationError(
            f"plant diverged at sample {status} ({status * cfg.arm.dt:.3f} s)")
    meta = {
        "format_version": EPISODE_FORMAT_VERSION,
        "dt": cfg.arm.dt,
        "joints": 3,
        "plan_id": used.name,
        "seed": None if seed is None else int(seed),
        "jitter": bool(jitter),
        "config_hash": cfg.content_hash(),
        "n_samples": int(n),
    }
    return Episode(out_f, out_l, out_ink, out_flag, meta)
