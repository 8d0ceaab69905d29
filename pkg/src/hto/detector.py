"""Small 1-D convolutional trace classifier with exact backpropagation.

The network is the attacker's proxy for the defender's detector: strided
``valid`` convolutions with ReLU, one hidden dense layer and a 2-logit
softmax head. Inputs are standardized by a per-position (mean, std)
template fixed at training time; gradients are still taken with respect
to raw mW samples.
"""
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._io import atomic_write_bytes
from .errors import ConfigError, ParseError, ShapeError

PROB_FLOOR = 1e-12
MODEL_MAGIC = b"HTODET\x00\x00"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ConvSpec:
    kernel_width: int
    channels: int
    stride: int = 1


@dataclass(frozen=True)
class ArchitectureSpec:
    conv_layers: tuple = (ConvSpec(9, 4, 2), ConvSpec(9, 8, 2))
    hidden_units: int = 64
    activation: str = "relu"

    def validate(self):
        if not self.conv_layers:
            raise ConfigError("at least one conv layer is required")
        for c in self.conv_layers:
            if c.kernel_width < 3 or c.kernel_width % 2 == 0:
                raise ConfigError("kernel_width must be odd and >= 3")
            if c.channels < 1 or c.stride < 1:
                raise ConfigError("channels and stride must be >= 1")
        if self.hidden_units < 1:
            raise ConfigError("hidden_units must be >= 1")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation {self.activation!r}")

    def conv_lengths(self, d):
        """Output length of every conv layer for input length ``d``."""
        lengths, n = [], d
        for c in self.conv_layers:
            if c.kernel_width > n:
                raise ConfigError(f"kernel width {c.kernel_width} exceeds remaining length {n}")
            n = (n - c.kernel_width) // c.stride + 1
            lengths.append(n)
        return lengths

    def to_dict(self):
        return {
            "conv_layers": [[c.kernel_width, c.channels, c.stride] for c in self.conv_layers],
            "hidden_units": self.hidden_units,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(conv_layers=tuple(ConvSpec(*c) for c in obj["conv_layers"]),
                   hidden_units=int(obj["hidden_units"]),
                   activation=obj.get("activation", "relu"))


@dataclass
class DetectorParams:
    arch: ArchitectureSpec
    d: int
    weights: list  # [(W, b), ...]: conv layers, hidden dense, output dense
    input_mean: np.ndarray = None  # (d,) standardization template
    input_scale: np.ndarray = None

    def flat(self):
        return np.concatenate([a.ravel() for W, b in self.weights for a in (W, b)])

    def with_flat(self, vector):
        vector = np.asarray(vector, dtype=np.float64)
        out, pos = [], 0
        for W, b in self.weights:
            nw, nb = W.size, b.size
            out.append((vector[pos:pos + nw].reshape(W.shape).copy(),
                        vector[pos + nw:pos + nw + nb].reshape(b.shape).copy()))
            pos += nw + nb
        if pos != vector.size:
            raise ShapeError(f"expected {pos} parameters, got {vector.size}")
        return DetectorParams(self.arch, self.d, out, self.input_mean, self.input_scale)

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in self.weights)

    def copy(self):
        return self.with_flat(self.flat())


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0

    def validate(self, n_items):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if not 1 <= self.batch_size <= n_items:
            raise ConfigError("batch_size must be in [1, dataset size]")


def _layer_shapes(arch, d):
    shapes, c_in = [], 1
    lengths = arch.conv_lengths(d)
    for c in arch.conv_layers:
        shapes.append(((c.channels, c_in, c.kernel_width), c_in * c.kernel_width))
        c_in = c.channels
    flat = c_in * lengths[-1]
    shapes.append(((arch.hidden_units, flat), flat))
    shapes.append(((2, arch.hidden_units), arch.hidden_units))
    return shapes


def init(arch=None, d=1000, seed=0, input_mean=0.0, input_scale=1.0):
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases.

    The output layer uses the smaller bound sqrt(1 / fan_in) so that an
    untrained model starts near uniform class probabilities.
    """
    arch = arch or ArchitectureSpec()
    arch.validate()
    input_mean = np.broadcast_to(np.asarray(input_mean, dtype=np.float64), (d,)).copy()
    input_scale = np.broadcast_to(np.asarray(input_scale, dtype=np.float64), (d,)).copy()
    if np.any(input_scale <= 0):
        raise ConfigError("input_scale must be > 0")
    rng = np.random.default_rng(seed)
    shapes = _layer_shapes(arch, d)
    weights = []
    for i, (shape, fan_in) in enumerate(shapes):
        bound = np.sqrt((1.0 if i == len(shapes) - 1 else 6.0) / fan_in)
        weights.append((rng.uniform(-bound, bound, size=shape), np.zeros(shape[0])))
    return DetectorParams(arch, int(d), weights, input_mean, input_scale)


def input_stats(dataset):
    """Per-position (mean, std) template used to standardize detector inputs.

    The std is floored at 1e-3 of its overall RMS so silent positions do not
    blow up.
    """
    mean = dataset.X.mean(axis=0)
    std = dataset.X.std(axis=0)
    floor = 1e-3 * (float(np.sqrt(np.mean(std ** 2))) or 1.0)
    return mean, np.maximum(std, floor)


def count_params(arch, d):
    return sum(int(np.prod(s)) + s[0] for s, _ in _layer_shapes(arch, d))


# -- forward / backward ----------------------------------------------------

def _as_batch(params, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.d:
        raise ShapeError(f"expected traces of length {params.d}, got shape {X.shape}")
    return X, single


def _forward(params, X):
    """Batch forward pass; returns (logits, cache)."""
    a = ((X - params.input_mean) / params.input_scale)[:, None, :]
    convs = []
    for (W, b), spec in zip(params.weights, params.arch.conv_layers):
        win = sliding_window_view(a, spec.kernel_width, axis=2)[:, :, ::spec.stride, :]
        z = np.tensordot(win, W, axes=([1, 3], [1, 2])).transpose(0, 2, 1) + b[None, :, None]
        convs.append((a.shape, win, z))
        a = np.maximum(z, 0.0)
    h0 = a.reshape(a.shape[0], -1)
    (W1, b1), (W2, b2) = params.weights[-2:]
    z1 = h0 @ W1.T + b1
    h1 = np.maximum(z1, 0.0)
    logits = h1 @ W2.T + b2
    return logits, (convs, h0, z1, h1)


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _backward(params, cache, dlogits, want_params=True):
    """Backpropagate ``dlogits``; returns (dX, [(dW, db), ...] or None)."""
    convs, h0, z1, h1 = cache
    (W1, b1), (W2, b2) = params.weights[-2:]
    grads = []
    if want_params:
        grads.append((dlogits.T @ h1, dlogits.sum(axis=0)))
    dz1 = (dlogits @ W2) * (z1 > 0)
    if want_params:
        grads.append((dz1.T @ h0, dz1.sum(axis=0)))
    da = (dz1 @ W1).reshape(convs[-1][2].shape)
    for (W, b), spec, (in_shape, win, z) in reversed(
            list(zip(params.weights, params.arch.conv_layers, convs))):
        dz = da * (z > 0)
        if want_params:
            grads.append((np.tensordot(dz, win, axes=([0, 2], [0, 2])), dz.sum(axis=(0, 2))))
        dwin = np.tensordot(dz, W, axes=([1], [0]))  # (B, L, C, K)
        da = np.zeros(in_shape)
        L = dz.shape[2]
        span = spec.stride * (L - 1) + 1
        for k in range(spec.kernel_width):
            da[:, :, k:k + span:spec.stride] += dwin[:, :, :, k].transpose(0, 2, 1)
    dX = da[:, 0, :] / params.input_scale
    return dX, (grads[::-1] if want_params else None)


def forward(params, trace):
    """Class probabilities for one trace (2-vector) or a batch ((n, 2))."""
    X, single = _as_batch(params, trace)
    p = _softmax(_forward(params, X)[0])
    return p[0] if single else p


def predict(params, trace):
    """Argmax label; an exact probability tie goes to the benign class."""
    p = forward(params, trace)
    labels = (p[..., 1] > p[..., 0]).astype(np.int64)
    return int(labels) if labels.ndim == 0 else labels


def _labels_for(label, n):
    y = np.broadcast_to(np.asarray(label, dtype=np.int64), (n,))
    if not np.all((y == 0) | (y == 1)):
        raise ConfigError("label must be 0 or 1")
    return y


def _nll(logits, y):
    """-log softmax(logits)[y] = softplus(l_other - l_y), capped at -log(PROB_FLOOR)."""
    idx = np.arange(len(y))
    z = logits[idx, 1 - y] - logits[idx, y]
    values = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    return np.minimum(values, -np.log(PROB_FLOOR))


def loss(params, trace, label):
    """Cross-entropy -log p(label), with p floored at 1e-12."""
    X, single = _as_batch(params, trace)
    y = _labels_for(label, X.shape[0])
    values = _nll(_forward(params, X)[0], y)
    return float(values[0]) if single else values


def loss_and_gradients(params, X, y, want_params=True, upstream_scale=1.0):
    """Per-sample losses, per-sample input gradients and mean-loss parameter gradients.

    The input gradient of row i is d loss_i / d X[i]. Gradients ignore the
    probability floor (it only guards the reported loss value).
    """
    _, losses, dX, grads = _loss_grad(params, X, y, want_params, upstream_scale)
    return losses, dX, grads


def _loss_grad(params, X, y, want_params=True, upstream_scale=1.0):
    X, _ = _as_batch(params, X)
    y = _labels_for(y, X.shape[0])
    logits, cache = _forward(params, X)
    p = _softmax(logits)
    dlogits = p.copy()
    dlogits[np.arange(len(y)), y] -= 1.0
    dlogits *= upstream_scale
    dX, grads = _backward(params, cache, dlogits, want_params=want_params)
    if grads is not None:
        grads = [(dW / len(y), db / len(y)) for dW, db in grads]
    return p, _nll(logits, y), dX, grads


def input_gradient(params, trace, label):
    """Analytic d loss / d trace for one trace (or row-wise for a batch)."""
    X, single = _as_batch(params, trace)
    _, dX, _ = loss_and_gradients(params, X, label, want_params=False)
    return dX[0] if single else dX


def param_gradient(params, trace, label):
    """Gradient of the mean loss with respect to the flat parameter vector."""
    _, _, grads = loss_and_gradients(params, trace, label)
    return np.concatenate([a.ravel() for dW, db in grads for a in (dW, db)])


# -- training --------------------------------------------------------------

def train(dataset, arch=None, config=None, perturb=None, initial=None):
    """Mini-batch SGD with momentum on mean cross-entropy.

    ``perturb(params, X, y) -> X`` optionally replaces each mini-batch before
    the step (used by adversarial training). ``initial`` starts from existing
    params (and keeps their input standardization) instead of a fresh init.
    Returns (params, history) where
    history holds per-epoch mean loss and accuracy (in percent).
    """
    arch = arch or ArchitectureSpec()
    config = config or TrainConfig()
    dataset.require_both_classes()
    config.validate(len(dataset))
    if initial is not None:
        if initial.d != dataset.d:
            raise ShapeError(f"initial params expect d={initial.d}, data has d={dataset.d}")
        params = initial.copy()
        arch, mean, scale = params.arch, params.input_mean, params.input_scale
    else:
        mean, scale = input_stats(dataset)
        params = init(arch, dataset.d, config.seed, mean, scale)
    rng = np.random.default_rng([config.seed, 1])
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params.weights]
    history = []
    X_all, y_all = dataset.X, dataset.y
    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            X, y = X_all[idx], y_all[idx]
            if perturb is not None:
                X = perturb(params, X, y)
            p, losses, _, grads = _loss_grad(params, X, y)
            total_loss += float(losses.sum())
            correct += int(np.sum((p[:, 1] > p[:, 0]) == y))
            new_weights, new_velocity = [], []
            for (W, b), (vW, vb), (gW, gb) in zip(params.weights, velocity, grads):
                vW = config.momentum * vW - config.learning_rate * gW
                vb = config.momentum * vb - config.learning_rate * gb
                new_weights.append((W + vW, b + vb))
                new_velocity.append((vW, vb))
            params = DetectorParams(arch, params.d, new_weights, mean, scale)
            velocity = new_velocity
        history.append({"epoch": epoch + 1, "loss": total_loss / n,
                        "accuracy": 100.0 * correct / n})
    return params, history


def accuracy(params, dataset, X=None):
    """Per-class and overall accuracy in percent; an absent class maps to None.

    ``X`` optionally overrides the dataset's traces (e.g. patched traces).
    """
    X = dataset.X if X is None else X
    pred = predict_batch(params, X)
    out = {}
    for label in (0, 1):
        mask = dataset.y == label
        out[f"class{label}"] = (100.0 * float(np.mean(pred[mask] == label))
                                if mask.any() else None)
    out["overall"] = 100.0 * float(np.mean(pred == dataset.y))
    return out


def predict_batch(params, X, chunk=512):
    X, _ = _as_batch(params, X)
    out = np.empty(X.shape[0], dtype=np.int64)
    for start in range(0, X.shape[0], chunk):
        logits, _ = _forward(params, X[start:start + chunk])
        out[start:start + chunk] = (logits[:, 1] > logits[:, 0])
    return out


# -- model file ------------------------------------------------------------

def save_model(params, path):
    """Binary container.

    Layout: magic, ``<II`` version and header length, JSON header, then
    little-endian f64 blocks: flat weights, input mean (d), input scale (d).
    """
    header = json.dumps({
        "arch": params.arch.to_dict(),
        "d": params.d,
        "n_params": params.n_params,
    }, sort_keys=True).encode("utf-8")
    body = np.concatenate([params.flat(), params.input_mean, params.input_scale])
    blob = (MODEL_MAGIC + struct.pack("<II", MODEL_VERSION, len(header)) + header
            + body.astype("<f8").tobytes())
    atomic_write_bytes(path, blob)


def load_model(path):
    blob = Path(path).read_bytes()
    if not blob.startswith(MODEL_MAGIC):
        raise ParseError(f"{path}: not a detector model file")
    pos = len(MODEL_MAGIC)
    version, hlen = struct.unpack_from("<II", blob, pos)
    if version != MODEL_VERSION:
        raise ParseError(f"{path}: unsupported model version {version}")
    pos += 8
    header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    arch = ArchitectureSpec.from_dict(header["arch"])
    d, n = header["d"], header["n_params"]
    body = np.frombuffer(blob, dtype="<f8", offset=pos).astype(np.float64)
    if body.size != n + 2 * d:
        raise ParseError(f"{path}: truncated parameter block")
    template = init(arch, d, 0, body[n:n + d], body[n + d:])
    return template.with_flat(body[:n])
