"""From-scratch MLP and LSTM regressors with exact gradients and Adam.

Both network kinds share the training entry point fit(): mean squared error
over (input, target) step sequences, Adam updates, per-epoch train and
validation losses.  The MLP treats every step independently; the LSTM is
unrolled over the full sequence and backpropagated exactly (no truncation,
no gradient clipping).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError, TrainingError

HIDDEN = 200  # production width of every hidden layer


def _uniform_init(rng, fan_in, shape):
    s = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-s, s, size=shape)


@dataclass
class MlpParams:
    """Four fully connected layers; tanh on the first three, linear output."""

    weights: list
    biases: list

    @classmethod
    def init(cls, d_in: int, d_out: int, hidden: int = HIDDEN, rng=None):
        rng = np.random.default_rng(rng)
        widths = [d_in, hidden, hidden, hidden, d_out]
        ws, bs = [], []
        for a, b in zip(widths[:-1], widths[1:]):
            ws.append(_uniform_init(rng, a, (a, b)))
            bs.append(_uniform_init(rng, a, (b,)))
        return cls(ws, bs)

    @property
    def d_in(self):
        return self.weights[0].shape[0]

    @property
    def d_out(self):
        return self.weights[-1].shape[1]

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class LstmCell:
    wx: np.ndarray  # (d_in, 4H), gate order i|f|g|o
    wh: np.ndarray  # (H, 4H)
    b: np.ndarray   # (4H,)


@dataclass
class LstmParams:
    """Three stacked LSTM layers followed by one linear readout."""

    cells: list
    fc_w: np.ndarray
    fc_b: np.ndarray

    @classmethod
    def init(cls, d_in: int, d_out: int, hidden: int = HIDDEN, rng=None):
        rng = np.random.default_rng(rng)
        cells = []
        d = d_in
        for _ in range(3):
            wx = _uniform_init(rng, d, (d, 4 * hidden))
            wh = _uniform_init(rng, hidden, (hidden, 4 * hidden))
            b = _uniform_init(rng, hidden, (4 * hidden,))
            b[hidden:2 * hidden] = 1.0  # forget gate opens long memory early
            cells.append(LstmCell(wx, wh, b))
            d = hidden
        fc_w = _uniform_init(rng, hidden, (hidden, d_out))
        fc_b = _uniform_init(rng, hidden, (d_out,))
        return cls(cells, fc_w, fc_b)

    @property
    def hidden(self):
        return self.cells[0].wh.shape[0]

    @property
    def d_in(self):
        return self.cells[0].wx.shape[0]

    @property
    def d_out(self):
        return self.fc_w.shape[1]

    def arrays(self):
        out = []
        for c in self.cells:
            out.extend([c.wx, c.wh, c.b])
        out.extend([self.fc_w, self.fc_b])
        return out


# ---------------------------------------------------------------------------
# MLP forward/backward


def mlp_forward_batch(params: MlpParams, x):
    """x: (n, d_in) -> (y, hidden activations h1..h3)."""
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ShapeError(f"mlp input has shape {x.shape}, needs (*, {params.d_in})")
    hs = []
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
        hs.append(h)
    y = h @ params.weights[-1] + params.biases[-1]
    return y, hs


def mlp_forward(params: MlpParams, x):
    """Single-vector forward pass."""
    y, _ = mlp_forward_batch(params, np.asarray(x, dtype=float)[None, :])
    return y[0]


def mlp_loss_and_grads(params: MlpParams, x, y):
    yhat, hs = mlp_forward_batch(params, x)
    diff = yhat - y
    loss = float(np.mean(diff * diff))
    dy = (2.0 / diff.size) * diff
    grads = [None] * 8
    acts = [x] + hs
    delta = dy
    for layer in range(3, -1, -1):
        grads[2 * layer] = acts[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (1.0 - acts[layer] ** 2)
    return loss, grads


# ---------------------------------------------------------------------------
# LSTM forward/backward (sequence kernels live in kernels.py)


def _lstm_seq_forward(params: LstmParams, x_tbd):
    """x_tbd: (T, B, d_in) -> (y (T, B, d_out), caches per layer)."""
    T, B, _ = x_tbd.shape
    H = params.hidden
    caches = []
    inp = x_tbd
    for cell in params.cells:
        d = inp.shape[2]
        pre = (inp.reshape(T * B, d) @ cell.wx).reshape(T, B, 4 * H)
        ga = np.empty((T, B, 4 * H))
        cs = np.empty((T, B, H))
        tc = np.empty((T, B, H))
        hs = np.empty((T, B, H))
        kernels.lstm_layer_forward(pre, cell.wh, cell.b, ga, cs, tc, hs)
        caches.append((inp, ga, cs, tc, hs))
        inp = hs
    y = (inp.reshape(T * B, H) @ params.fc_w + params.fc_b).reshape(
        T, B, params.d_out)
    return y, caches


def _lstm_seq_backward(params: LstmParams, caches, dy_tbd):
    T, B, d_out = dy_tbd.shape
    H = params.hidden
    h3 = caches[-1][4]
    dy_flat = dy_tbd.reshape(T * B, d_out)
    g_fc_w = h3.reshape(T * B, H).T @ dy_flat
    g_fc_b = dy_flat.sum(axis=0)
    dh = (dy_flat @ params.fc_w.T).reshape(T, B, H)
    cell_grads = [None] * 3
    for layer in range(2, -1, -1):
        inp, ga, cs, tc, hs = caches[layer]
        cell = params.cells[layer]
        dpre = np.empty_like(ga)
        kernels.lstm_layer_backward(ga, cs, tc, cell.wh, dh, dpre)
        dpre_flat = dpre.reshape(T * B, 4 * H)
        h_shift = np.concatenate([np.zeros((1, B, H)), hs[:-1]], axis=0)
        g_wh = h_shift.reshape(T * B, H).T @ dpre_flat
        d = inp.shape[2]
        g_wx = inp.reshape(T * B, d).T @ dpre_flat
        g_b = dpre_flat.sum(axis=0)
        cell_grads[layer] = (g_wx, g_wh, g_b)
        dh = (dpre_flat @ cell.wx.T).reshape(T, B, d)
    grads = []
    for g in cell_grads:
        grads.extend(g)
    grads.extend([g_fc_w, g_fc_b])
    return grads


def lstm_step(params: LstmParams, x, hidden=None):
    """One 20 ms inference step; hidden is a list of (h, c) per layer."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.d_in,):
        raise ShapeError(f"lstm input has shape {x.shape}, needs ({params.d_in},)")
    H = params.hidden
    if hidden is None:
        hidden = [(np.zeros(H), np.zeros(H)) for _ in params.cells]
    new_hidden = []
    inp = x
    for cell, (h, c) in zip(params.cells, hidden):
        z = inp @ cell.wx + h @ cell.wh + cell.b
        ig = 1.0 / (1.0 + np.exp(-z[:H]))
        fg = 1.0 / (1.0 + np.exp(-z[H:2 * H]))
        gg = np.tanh(z[2 * H:3 * H])
        og = 1.0 / (1.0 + np.exp(-z[3 * H:]))
        c2 = fg * c + ig * gg
        h2 = og * np.tanh(c2)
        new_hidden.append((h2, c2))
        inp = h2
    y = inp @ params.fc_w + params.fc_b
    return y, new_hidden


# ---------------------------------------------------------------------------
# loss dispatch


def sequence_loss_and_grads(params, x, y):
    """MSE loss and exact parameter gradients for one batch.

    x: (B, T, d_in), y: (B, T, d_out).  Gradient order matches
    params.arrays().  The MLP ignores time structure; the LSTM is run from
    zero state over the full T with exact backpropagation through time.
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if x.ndim != 3 or y.ndim != 3 or x.shape[:2] != y.shape[:2]:
        raise ShapeError(f"batch shapes {x.shape} / {y.shape} do not align")
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if isinstance(params, MlpParams):
        b, t, d = x.shape
        loss, grads = mlp_loss_and_grads(
            params, x.reshape(b * t, d), y.reshape(b * t, y.shape[2]))
    else:
        x_tbd = np.ascontiguousarray(np.swapaxes(x, 0, 1))
        y_tbd = np.ascontiguousarray(np.swapaxes(y, 0, 1))
        yhat, caches = _lstm_seq_forward(params, x_tbd)
        diff = yhat - y_tbd
        loss = float(np.mean(diff * diff))
        dy = (2.0 / diff.size) * diff
        grads = _lstm_seq_backward(params, caches, dy)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    return loss, grads


def sequence_loss(params, x, y):
    """Forward-only MSE (used for validation)."""
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if isinstance(params, MlpParams):
        b, t, d = x.shape
        yhat, _ = mlp_forward_batch(params, x.reshape(b * t, d))
        diff = yhat - y.reshape(b * t, y.shape[2])
    else:
        x_tbd = np.ascontiguousarray(np.swapaxes(x, 0, 1))
        yhat, _ = _lstm_seq_forward(params, x_tbd)
        diff = yhat - np.swapaxes(y, 0, 1)
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def like(cls, arrays):
        return cls([np.zeros_like(a) for a in arrays],
                   [np.zeros_like(a) for a in arrays])


def adam_step(arrays, grads, state: AdamState, lr, beta1=0.9, beta2=0.999,
              eps=1e-8):
    """One Adam update with bias correction; mutates arrays and state."""
    if len(arrays) != len(grads):
        raise ShapeError("parameter/gradient count mismatch")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} vs parameter {p.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return arrays, state


# ---------------------------------------------------------------------------
# normalization


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_rows(cls, rows):
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise ShapeError(f"stats need a (n, d) sample matrix, got {rows.shape}")
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)  # constant dims pass through
        return cls(mean, std)

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    def normalize(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"normalize: width {x.shape[-1]} vs {self.mean.shape[0]}")
        return (x - self.mean) / self.std

    def denormalize(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.mean.shape[0]:
            raise ShapeError(f"denormalize: width {x.shape[-1]} vs {self.mean.shape[0]}")
        return x * self.std + self.mean


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainHyper:
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


@dataclass
class TrainLog:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)


def fit(x_train, y_train, x_val, y_val, kind: str, hyper: TrainHyper,
        hidden: int = HIDDEN, progress=None):
    """Train one network and return (params, TrainLog).

    Weight init and epoch shuffles come from one generator seeded with
    hyper.seed (init first, then one permutation per epoch), so identical
    inputs give identical parameters.  Gradients are never clipped; a
    non-finite loss aborts with TrainingError.
    """
    x_train = np.ascontiguousarray(x_train, dtype=float)
    y_train = np.ascontiguousarray(y_train, dtype=float)
    if x_train.ndim != 3 or x_train.shape[0] == 0:
        raise TrainingError(f"training tensor has shape {x_train.shape}")
    n, _, d_in = x_train.shape
    d_out = y_train.shape[2]
    rng = np.random.default_rng(hyper.seed)
    if kind == "mlp":
        params = MlpParams.init(d_in, d_out, hidden, rng)
    elif kind == "lstm":
        params = LstmParams.init(d_in, d_out, hidden, rng)
    else:
        raise TrainingError(f"unknown model kind {kind!r}")
    arrays = params.arrays()
    state = AdamState.like(arrays)
    log = TrainLog(notes={"kind": kind, "hidden": hidden,
                          "gradient_clipping": "off"})
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            try:
                loss, grads = sequence_loss_and_grads(
                    params, x_train[idx], y_train[idx])
            except NumericError as exc:
                raise TrainingError(f"diverged at epoch {epoch}: {exc}") from exc
            adam_step(arrays, grads, state, hyper.lr, hyper.beta1,
                      hyper.beta2, hyper.eps)
            total += loss * len(idx)
        train_loss = total / n
        val_loss = sequence_loss(params, x_val, y_val) if len(x_val) else float("nan")
        log.train_loss.append(train_loss)
        log.val_loss.append(val_loss)
        if progress is not None:
            progress(epoch, train_loss, val_loss)
    return params, log


# ---------------------------------------------------------------------------
# policy container and file format

POLICY_FORMAT_VERSION = 1


@dataclass
class Policy:
    kind: str          # "mlp" | "lstm"
    feature_set: str   # label of the slow-reference slice this policy expects
    params: object
    in_stats: NormStats
    out_stats: NormStats
    meta: dict = field(default_factory=dict)


def save_policy(path, policy: Policy, train_log: TrainLog | None = None):
    arrays = {
        "in_mean": policy.in_stats.mean, "in_std": policy.in_stats.std,
        "out_mean": policy.out_stats.mean, "out_std": policy.out_stats.std,
    }
    if isinstance(policy.params, MlpParams):
        shapes = []
        for i, (w, b) in enumerate(zip(policy.params.weights,
                                       policy.params.biases)):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
            shapes.append(list(w.shape))
    elif isinstance(policy.params, LstmParams):
        shapes = []
        for i, c in enumerate(policy.params.cells):
            arrays[f"wx{i}"] = c.wx
            arrays[f"wh{i}"] = c.wh
            arrays[f"cb{i}"] = c.b
            shapes.append(list(c.wx.shape))
        arrays["fc_w"] = policy.params.fc_w
        arrays["fc_b"] = policy.params.fc_b
        shapes.append(list(policy.params.fc_w.shape))
    else:
        raise TrainingError(f"cannot serialize params of type {type(policy.params)}")
    if train_log is not None:
        arrays["train_loss"] = np.asarray(train_log.train_loss)
        arrays["val_loss"] = np.asarray(train_log.val_loss)
    meta = dict(policy.meta)
    meta.update({
        "format_version": POLICY_FORMAT_VERSION,
        "kind": policy.kind,
        "feature_set": policy.feature_set,
        "layer_shapes": shapes,
    })
    if train_log is not None and train_log.notes:
        meta["train_notes"] = train_log.notes
    arrays["meta"] = np.array(json.dumps(meta, sort_keys=True))
    np.savez(path, **arrays)


def load_policy(path) -> Policy:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != POLICY_FORMAT_VERSION:
            raise ValueError(f"unsupported policy format in {path}")
        kind = meta["kind"]
        if kind == "mlp":
            ws = [z[f"w{i}"] for i in range(4)]
            bs = [z[f"b{i}"] for i in range(4)]
            params = MlpParams(ws, bs)
        else:
            cells = [LstmCell(z[f"wx{i}"], z[f"wh{i}"], z[f"cb{i}"])
                     for i in range(3)]
            params = LstmParams(cells, z["fc_w"], z["fc_b"])
        in_stats = NormStats(z["in_mean"], z["in_std"])
        out_stats = NormStats(z["out_mean"], z["out_std"])
    return Policy(kind, meta["feature_set"], params, in_stats, out_stats, meta)
