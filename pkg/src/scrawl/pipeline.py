"""Episode-to-training-set pipeline.

Recorded 2 ms episodes become 20 ms step sequences by shift-downsampling
(factor 10, one sequence per offset, a tenfold augmentation that exactly
partitions the samples).  Teacher targets are low-pass filtered copies of
the logged states; network inputs stay raw and receive Gaussian noise after
normalization.  All sequences are padded to a common length by repeating
their last sample, so the padded teacher motion has zero velocity.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .nn import NormStats
from .sim import STATE_WIDTH, Episode

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
NN_PERIOD = 10       # control samples per network step
LOOKAHEAD = 10       # network steps the slow reference runs ahead
TARGET_WIDTH = 2 * STATE_WIDTH


def lowpass_filter(series, cutoff: float, dt: float):
    """One-pole low-pass along axis 0 with a = exp(-cutoff*dt), y0 = x0."""
    x = np.asarray(series, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("cannot filter an empty series")
    a = np.exp(-cutoff * dt)
    y = np.empty_like(x)
    y[0] = x[0]
    for k in range(1, x.shape[0]):
        y[k] = a * y[k - 1] + (1.0 - a) * x[k]
    return y


def downsample_shift(series, factor: int = NN_PERIOD):
    """All phase-shifted decimations of a series: one per offset 0..factor-1.

    Together the returned series partition the input rows exactly; lengths
    are ceil((n - o) / factor).
    """
    x = np.asarray(series)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if x.shape[0] < factor:
        raise ValueError(f"series of length {x.shape[0]} is shorter than "
                         f"the factor {factor}")
    return [x[o::factor] for o in range(factor)]


def add_noise(x, variance: float, rng):
    """Gaussian noise with the given variance; variance 0 is an exact no-op."""
    if variance < 0:
        raise ValueError(f"variance must be >= 0, got {variance}")
    x = np.asarray(x, dtype=float)
    if variance == 0:
        return x.copy()
    return x + rng.normal(0.0, np.sqrt(variance), size=x.shape)


def pad_sequences(seqs):
    """Extend every (n_i, d) sequence to the common maximum length by
    repeating its final row; returns (stacked (m, n_max, d), lengths)."""
    if not seqs:
        raise ValueError("no sequences to pad")
    lengths = [s.shape[0] for s in seqs]
    n_max = max(lengths)
    out = np.empty((len(seqs), n_max, seqs[0].shape[1]))
    for i, s in enumerate(seqs):
        out[i, :s.shape[0]] = s
        if s.shape[0] < n_max:
            out[i, s.shape[0]:] = s[-1]
    return out, lengths


def compute_norm_stats(rows) -> NormStats:
    return NormStats.from_rows(rows)


@dataclass
class DataSettings:
    lpf_cutoff: float = 20.0        # rad/s, applied to teacher series at 2 ms
    noise_variance: float = 0.01    # on normalized inputs
    downsample: int = NN_PERIOD
    train_episodes: int = 5
    val_episodes: int = 2
    hold_upper_during_training: bool = False


@dataclass
class SequenceDataset:
    """Padded, normalized step sequences ready for fit()."""

    x_train: np.ndarray  # (n, T, d_in), noise applied
    y_train: np.ndarray  # (n, T, 18)
    x_val: np.ndarray    # clean
    y_val: np.ndarray
    in_stats: NormStats
    out_stats: NormStats
    feature_set: str
    meta: dict = field(default_factory=dict)

    @property
    def d_in(self):
        return self.x_train.shape[2]


def _upper_index(k: int, last: int, hold: bool):
    if hold:
        idx = NN_PERIOD * (k // NN_PERIOD + 1)
    else:
        idx = k + LOOKAHEAD
    return min(idx, last)


def build_training_set(train_eps, val_eps, feature_slice: slice,
                       feature_label: str, settings: DataSettings,
                       seed) -> SequenceDataset:
    """Assemble the supervised two-rate dataset from recorded episodes.

    Input rows are [follower_k, slice(follower_k+10)] (raw), targets are
    [follower_k+1, leader_k+1] from the filtered teacher copies.  Usable
    steps end ten slow steps before each padded sequence ends.  Stats come
    from the training split only; the validation split reuses them and
    stays noise-free.
    """
    if not train_eps or not val_eps:
        raise ValueError("need at least one training and one validation episode")
    factor = settings.downsample

    def expand(eps):
        raw, teach_f, teach_l, origin = [], [], [], []
        for ei, ep in enumerate(eps):
            if ep.f.shape[1] != STATE_WIDTH:
                raise ShapeError(f"episode state width {ep.f.shape[1]}")
            dt = ep.meta["dt"]
            ff = lowpass_filter(ep.f, settings.lpf_cutoff, dt)
            lf = lowpass_filter(ep.l, settings.lpf_cutoff, dt)
            for o, (r, tf, tl) in enumerate(zip(
                    downsample_shift(ep.f, factor),
                    downsample_shift(ff, factor),
                    downsample_shift(lf, factor))):
                raw.append(r)
                teach_f.append(tf)
                teach_l.append(tl)
                origin.append({"episode": ep.meta.get("plan_id", "?"),
                               "index": ei, "offset": o})
        return raw, teach_f, teach_l, origin

    tr_raw, tr_tf, tr_tl, tr_org = expand(train_eps)
    va_raw, va_tf, va_tl, va_org = expand(val_eps)

    all_raw, _ = pad_sequences(tr_raw + va_raw)
    all_tf, _ = pad_sequences(tr_tf + va_tf)
    all_tl, _ = pad_sequences(tr_tl + va_tl)
    n_tr = len(tr_raw)
    m = all_raw.shape[1]
    steps = m - (LOOKAHEAD + 1)
    if steps < 1:
        raise ValueError(f"padded length {m} leaves no usable steps")

    d_in = STATE_WIDTH + len(range(*feature_slice.indices(STATE_WIDTH)))
    n_all = all_raw.shape[0]
    x = np.empty((n_all, steps, d_in))
    y = np.empty((n_all, steps, TARGET_WIDTH))
    for k in range(steps):
        ku = _upper_index(k, m - 1, settings.hold_upper_during_training)
        x[:, k, :STATE_WIDTH] = all_raw[:, k]
        x[:, k, STATE_WIDTH:] = all_raw[:, ku, feature_slice]
        y[:, k, :STATE_WIDTH] = all_tf[:, k + 1]
        y[:, k, STATE_WIDTH:] = all_tl[:, k + 1]

    in_stats = compute_norm_stats(x[:n_tr].reshape(-1, d_in))
    out_stats = compute_norm_stats(y[:n_tr].reshape(-1, TARGET_WIDTH))
    xn = in_stats.normalize(x)
    yn = out_stats.normalize(y)
    rng = np.random.default_rng(seed)
    x_train = add_noise(xn[:n_tr], settings.noise_variance, rng)
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "feature_set": feature_label,
        "noise_variance": settings.noise_variance,
        "lpf_cutoff": settings.lpf_cutoff,
        "downsample": settings.downsample,
        "hold_upper_during_training": settings.hold_upper_during_training,
        "seed": None if seed is None else int(seed),
        "padded_length": int(m),
        "steps": int(steps),
        "train_sequences": tr_org,
        "val_sequences": va_org,
    }
    return SequenceDataset(x_train, yn[:n_tr], xn[n_tr:], yn[n_tr:],
                           in_stats, out_stats, feature_label, meta)


def save_dataset(path, ds: SequenceDataset):
    np.savez_compressed(
        path,
        x_train=ds.x_train, y_train=ds.y_train,
        x_val=ds.x_val, y_val=ds.y_val,
        in_mean=ds.in_stats.mean, in_std=ds.in_stats.std,
        out_mean=ds.out_stats.mean, out_std=ds.out_stats.std,
        meta=np.array(json.dumps(ds.meta, sort_keys=True)))


def load_dataset(path) -> SequenceDataset:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != DATASET_FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format in {path}")
        ds = SequenceDataset(
            z["x_train"], z["y_train"], z["x_val"], z["y_val"],
            NormStats(z["in_mean"], z["in_std"]),
            NormStats(z["out_mean"], z["out_std"]),
            meta["feature_set"], meta)
    return ds
