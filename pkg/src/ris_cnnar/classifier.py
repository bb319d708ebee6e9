"""Aging-pattern classifier and classifier-dispatched AR prediction (CNN-AR)."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .ar import ArModel, model_for_doppler, predict_multi
from .channel import generate_static_channel, generate_user_trace
from .estimation import PilotEstimator, split_estimate
from .scenario import Geometry, SystemConfig

log = logging.getLogger(__name__)


# -- inputs -------------------------------------------------------------------

@dataclass
class CsiWindow:
    matrix: np.ndarray  # (2N, V), standardized
    user: int = 0
    label: int | None = None


def csi_matrix(estimates) -> np.ndarray:
    """Stack ``V`` complex N-vectors column-wise as ``[Re; Im]`` (2N, V)."""
    h = np.asarray(estimates)
    if h.ndim != 2:
        raise ValueError("estimates must be a (V, N) array")
    return np.concatenate([h.real.T, h.imag.T], axis=0)


def preprocess(estimates, user: int = 0, label: int | None = None) -> CsiWindow:
    mat = csi_matrix(estimates)
    std = mat.std()
    mat = (mat - mat.mean()) / (std if std > 0 else 1.0)
    return CsiWindow(mat, user, label)


def reference_channels(f_hat: np.ndarray, n_antennas: int) -> np.ndarray:
    """Effective channels under the all-ones reference phase vector."""
    d, G = split_estimate(f_hat, n_antennas)
    return d + G.sum(axis=-1)


# -- class bank ---------------------------------------------------------------

@dataclass
class DopplerClassBank:
    f_n: np.ndarray
    models: list[ArModel]

    def __post_init__(self):
        self.f_n = np.asarray(self.f_n, dtype=float)
        if np.any(np.diff(self.f_n) <= 0):
            raise ValueError("class Doppler values must be strictly increasing")
        if len(self.models) != len(self.f_n):
            raise ValueError("one AR model per class required")
        for model in self.models:
            if not model.is_stable():
                raise ValueError(f"unstable AR model for f_n={model.f_n}")

    def __len__(self):
        return len(self.models)

    @property
    def max_order(self) -> int:
        return max(m.order for m in self.models)

    @classmethod
    def build(cls, f_n_values, epsilon: float, Q: int) -> "DopplerClassBank":
        return cls(np.asarray(f_n_values, dtype=float),
                   [model_for_doppler(float(f), epsilon, Q) for f in f_n_values])

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "DopplerClassBank":
        return cls.build(cfg.doppler_fn(cfg.doppler_grid), cfg.loading, cfg.ar_order)

    def to_dict(self) -> dict:
        return {"f_n": [float(f) for f in self.f_n], "models": [m.to_dict() for m in self.models]}

    @classmethod
    def from_dict(cls, data: dict) -> "DopplerClassBank":
        return cls(data["f_n"], [ArModel.from_dict(m) for m in data["models"]])


# -- network ------------------------------------------------------------------

@dataclass
class NetConfig:
    conv_filters: tuple[int, ...] = (8, 16)
    kernel: int | tuple[int, int] = (3, 7)
    pool: int = 2
    hidden: tuple[int, ...] = (512, 256)


def build_convnet(input_shape, n_classes: int, seed: int = 0,
                  arch: NetConfig | None = None) -> nn.Sequential:
    """Conv(tanh)+pool blocks, then sigmoid dense layers, then ``n_classes`` sigmoid outputs."""
    arch = arch or NetConfig()
    rng = np.random.default_rng(seed)
    rows, cols = input_shape
    layers = []
    channels = 1
    for filters in arch.conv_filters:
        layers += [nn.Conv2D(channels, filters, arch.kernel, rng), nn.Tanh(), nn.AvgPool2D(arch.pool)]
        channels = filters
    layers.append(nn.Flatten())
    shape = (1, rows, cols)
    for layer in layers:
        shape = layer.output_shape(shape)
    width = shape[0]
    if width < 1:
        raise ValueError(f"input {input_shape} too small for {len(arch.conv_filters)} pooling stages")
    for units in (*arch.hidden, n_classes):
        layers += [nn.Dense(width, units, rng), nn.Sigmoid()]
        width = units
    return nn.Sequential(layers, (1, rows, cols))


def _as_batch(windows) -> np.ndarray:
    if isinstance(windows, CsiWindow):
        windows = [windows]
    if isinstance(windows, np.ndarray):
        arr = windows if windows.ndim == 3 else windows[None]
    else:
        arr = np.stack([w.matrix if isinstance(w, CsiWindow) else w for w in windows])
    return arr[:, None, :, :]


def forward(net: nn.Sequential, windows) -> np.ndarray:
    """Scores in (0, 1) of shape (batch, C); a single window gives shape (C,)."""
    single = isinstance(windows, CsiWindow) or (isinstance(windows, np.ndarray) and windows.ndim == 2)
    scores = net.forward(_as_batch(windows))
    return scores[0] if single else scores


def classify_scores(scores) -> np.ndarray | int:
    """Argmax; ties go to the lowest index."""
    scores = np.asarray(scores)
    out = np.argmax(scores, axis=-1)
    return int(out) if out.ndim == 0 else out


def classify(net: nn.Sequential, windows):
    return classify_scores(forward(net, windows))


# -- training -----------------------------------------------------------------

@dataclass
class TrainingRun:
    epochs: int = 300
    batch_size: int = 50
    learning_rate: float = 1e-3
    patience: int | None = 20
    seed: int = 0
    augment: bool = True
    loss_history: list[float] = field(default_factory=list)
    val_loss_history: list[float] = field(default_factory=list)
    val_accuracy_history: list[float] = field(default_factory=list)
    best_epoch: int = -1


def augment_windows(X: np.ndarray, rng) -> np.ndarray:
    """Random label-preserving transforms of standardized (2N, V) windows.

    A Jakes process is statistically unchanged by a common phase rotation,
    complex conjugation, time reversal and a permutation of i.i.d. antennas,
    so each window gets a random draw of all four and is re-standardized.
    """
    B, rows, _ = X.shape
    N = rows // 2
    z = X[:, :N] + 1j * X[:, N:]
    z = z * np.exp(2j * np.pi * rng.random(B))[:, None, None]
    conj = rng.random(B) < 0.5
    z[conj] = z[conj].conj()
    rev = rng.random(B) < 0.5
    z[rev] = z[rev][:, :, ::-1]
    perm = np.argsort(rng.random((B, N)), axis=1)
    z = np.take_along_axis(z, perm[:, :, None], axis=1)
    out = np.concatenate([z.real, z.imag], axis=1)
    out -= out.mean(axis=(1, 2), keepdims=True)
    std = out.std(axis=(1, 2), keepdims=True)
    return out / np.where(std > 0, std, 1.0)


def one_hot(labels, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def evaluate(net, X, y, batch_size=500) -> tuple[float, float]:
    """(MSE loss, accuracy) on a labeled set."""
    n_classes = net.output_size
    losses, hits = 0.0, 0
    for start in range(0, len(y), batch_size):
        xb = X[start:start + batch_size]
        scores = net.forward(xb[:, None])
        losses += float(np.sum((scores - one_hot(y[start:start + batch_size], n_classes)) ** 2))
        hits += int(np.sum(classify_scores(scores) == y[start:start + batch_size]))
    return losses / (len(y) * n_classes), hits / len(y)


def train(net: nn.Sequential, X_train, y_train, X_val, y_val, run: TrainingRun) -> nn.Sequential:
    """Mini-batch Adam on the MSE between sigmoid scores and one-hot labels.

    Stops once validation loss has not improved for ``run.patience`` epochs and
    restores the best-validation weights. Histories are appended to ``run``.
    """
    X_train, X_val = np.asarray(X_train, dtype=float), np.asarray(X_val, dtype=float)
    y_train, y_val = np.asarray(y_train), np.asarray(y_val)
    if len(y_train) == 0 or len(y_val) == 0:
        raise ValueError("empty training or validation set")
    if len(np.unique(y_train)) < 2:
        raise ValueError("training set must contain at least two classes")
    n_classes = net.output_size
    targets = one_hot(y_train, n_classes)
    rng = np.random.default_rng(run.seed)
    opt = nn.Adam(run.learning_rate)
    best_loss, best_weights, since_best = np.inf, net.get_weights(), 0
    for epoch in range(run.epochs):
        order = rng.permutation(len(y_train))
        total = 0.0
        for start in range(0, len(order), run.batch_size):
            idx = order[start:start + run.batch_size]
            batch = augment_windows(X_train[idx], rng) if run.augment else X_train[idx]
            scores = net.forward(batch[:, None])
            loss, grad = nn.mse_loss(scores, targets[idx])
            net.backward(grad)
            opt.step(net)
            total += loss * len(idx)
        run.loss_history.append(total / len(order))
        val_loss, val_acc = evaluate(net, X_val, y_val)
        run.val_loss_history.append(val_loss)
        run.val_accuracy_history.append(val_acc)
        log.info("epoch %d loss %.5f val_loss %.5f val_acc %.3f",
                 epoch, run.loss_history[-1], val_loss, val_acc)
        if val_loss < best_loss:
            best_loss, best_weights, since_best = val_loss, net.get_weights(), 0
            run.best_epoch = epoch
        else:
            since_best += 1
            if run.patience is not None and since_best >= run.patience:
                break
    net.set_weights(best_weights)
    return net


# -- dataset ------------------------------------------------------------------

@dataclass
class DatasetRanges:
    d_h: tuple[float, float] = (1.0, 50.0)
    d_v: tuple[float, float] = (1.0, 5.0)

    def __post_init__(self):
        for lo, hi in (self.d_h, self.d_v):
            if not 0 < lo <= hi:
                raise ValueError(f"invalid range ({lo}, {hi})")


def sample_window(cfg: SystemConfig, f_n: float, rng, ranges: DatasetRanges,
                  estimator: PilotEstimator | None = None) -> np.ndarray:
    """Standardized (2N, V) window for one random single-user geometry."""
    estimator = estimator or PilotEstimator.from_config(cfg)
    d_bs_ris = Geometry().d_bs_ris
    geom = Geometry(d_bs_ris, (float(rng.uniform(*ranges.d_h)),), (float(rng.uniform(*ranges.d_v)),))
    H = generate_static_channel(cfg, geom, rng)
    V = cfg.train_intervals
    trace = generate_user_trace(cfg, geom, 0, H, f_n, V, rng)
    f_hat = estimator.estimate(trace, 0, np.arange(V), rng)
    return preprocess(reference_channels(f_hat, cfg.n_bs_antennas)).matrix


def gen_dataset(cfg: SystemConfig, f_n_classes, samples_per_class: int, seed: int,
                ranges: DatasetRanges | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Labeled windows ``(X, y)``; sample ``s`` of class ``c`` uses substream ``(seed, c, s)``."""
    if samples_per_class < 1:
        raise ValueError("need at least one sample per class")
    ranges = ranges or DatasetRanges()
    estimator = PilotEstimator.from_config(cfg)
    X, y = [], []
    for c, f_n in enumerate(f_n_classes):
        for s in range(samples_per_class):
            rng = np.random.default_rng([seed, c, s])
            X.append(sample_window(cfg, float(f_n), rng, ranges, estimator))
            y.append(c)
    return np.stack(X), np.asarray(y, dtype=np.int64)


def split_dataset(X, y, n_train: int, n_val: int):
    """Per-class split into the first ``n_train``, next ``n_val`` and remaining samples."""
    parts = ([], [], [])
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        for part, sel in zip(parts, (idx[:n_train], idx[n_train:n_train + n_val], idx[n_train + n_val:])):
            part.append(sel)
    return tuple((X[np.concatenate(p)], y[np.concatenate(p)]) for p in parts)


# -- prediction ---------------------------------------------------------------

def cnn_ar_predict(history, net: nn.Sequential, bank: DopplerClassBank, P: int,
                   n_antennas: int, label: int | None = None) -> tuple[np.ndarray, int]:
    """Predict ``P`` future ``f_hat`` vectors from a (V, N(M+1)) history.

    Returns ``(predictions, class_index)``. Passing ``label`` bypasses the
    network (oracle dispatch).
    """
    if net is not None and net.output_size != len(bank):
        raise ValueError(f"classifier has {net.output_size} outputs, bank has {len(bank)} classes")
    history = np.asarray(history)
    if history.shape[0] < bank.max_order:
        raise ValueError(f"history of {history.shape[0]} intervals shorter than AR order {bank.max_order}")
    if label is None:
        window = preprocess(reference_channels(history, n_antennas))
        label = classify(net, window)
    return predict_multi(history, bank.models[label], P), label


# -- files --------------------------------------------------------------------
# Checkpoint: b"RCNN", uint32 version, uint32 header length, UTF-8 JSON header
# (input shape, layer specs, parameter keys and shapes, class bank), then each
# parameter as little-endian float64 in header order.
# Dataset: b"RCDS", uint32 version, uint32 records, uint32 rows, uint32 cols,
# then per record int32 label followed by rows*cols little-endian float64.

_CKPT = struct.Struct("<4sII")
_DS = struct.Struct("<4sIIII")


def save_checkpoint(path, net: nn.Sequential, bank: DopplerClassBank | None = None) -> None:
    params = net.parameters()
    header = {
        "input_shape": list(net.input_shape),
        "layers": [layer.spec() for layer in net.layers],
        "params": [[key, list(layer.params[name].shape)] for key, layer, name in params],
        "bank": None if bank is None else bank.to_dict(),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT.pack(b"RCNN", 1, len(blob)))
        fh.write(blob)
        for _, layer, name in params:
            fh.write(np.ascontiguousarray(layer.params[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[nn.Sequential, DopplerClassBank | None]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, n = _CKPT.unpack_from(raw)
    if magic != b"RCNN" or version != 1:
        raise ValueError(f"{path}: not a classifier checkpoint")
    header = json.loads(raw[_CKPT.size:_CKPT.size + n].decode("utf-8"))
    net = nn.Sequential([nn.layer_from_spec(s) for s in header["layers"]], header["input_shape"])
    offset = _CKPT.size + n
    weights = {}
    for key, shape in header["params"]:
        count = int(np.prod(shape))
        weights[key] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
    net.set_weights(weights)
    bank = None if header["bank"] is None else DopplerClassBank.from_dict(header["bank"])
    return net, bank


def save_dataset(path, X: np.ndarray, y: np.ndarray) -> None:
    n, rows, cols = X.shape
    with open(path, "wb") as fh:
        fh.write(_DS.pack(b"RCDS", 1, n, rows, cols))
        for label, mat in zip(y, X):
            fh.write(struct.pack("<i", int(label)))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, n, rows, cols = _DS.unpack_from(raw)
    if magic != b"RCDS" or version != 1:
        raise ValueError(f"{path}: not a window dataset")
    rec = np.dtype([("label", "<i4"), ("matrix", "<f8", (rows, cols))])
    data = np.frombuffer(raw, dtype=rec, count=n, offset=_DS.size)
    return data["matrix"].astype(float), data["label"].astype(np.int64)
