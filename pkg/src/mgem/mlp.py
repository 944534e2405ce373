"""Small dense MLP with manual backpropagation on flat parameter vectors.

Loss is mean softmax cross-entropy over the dataset, so gradients are
invariant to batch size. Weights for layer ``i`` live in block ``L{i}.w``
(row-major ``(fan_in, fan_out)``), biases in ``L{i}.b``.
"""

from dataclasses import dataclass

import numpy as np

from .layout import BlockLayout, ParamVector
from .seeds import rng_from

_ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input, hidden..., output) and hidden activation."""

    layer_sizes: tuple
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if self.layer_sizes[-1] < 2:
            raise ValueError("output size must be >= 2")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]


@dataclass(eq=False)
class Dataset:
    """Feature matrix ``(n_samples, n_features)`` with integer labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be 2-D, labels 1-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on sample count")
        if self.features.shape[0] < 1:
            raise ValueError("dataset needs at least one sample")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")
        if np.any(self.labels < 0):
            raise ValueError("labels must be non-negative")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])


def build_layout(spec: MlpSpec) -> BlockLayout:
    sizes = []
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.layer_sizes[i], spec.layer_sizes[i + 1]
        sizes.append((f"L{i}.w", fan_in * fan_out))
        sizes.append((f"L{i}.b", fan_out))
    return BlockLayout.from_sizes(sizes)


def init_params(spec: MlpSpec, seed: int) -> ParamVector:
    """Xavier-uniform weights, zero biases; deterministic per seed."""
    rng = rng_from(seed, "init")
    layout = build_layout(spec)
    data = np.zeros(layout.total_len)
    v = ParamVector(data, layout)
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.layer_sizes[i], spec.layer_sizes[i + 1]
        s = np.sqrt(6.0 / (fan_in + fan_out))
        v.block(f"L{i}.w")[:] = rng.uniform(-s, s, size=fan_in * fan_out)
        # biases stay zero
    return v


def _weights(params: ParamVector, spec: MlpSpec):
    """Per-layer ``(W, b)`` views into the flat vector."""
    out = []
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.layer_sizes[i], spec.layer_sizes[i + 1]
        W = params.block(f"L{i}.w").reshape(fan_in, fan_out)
        b = params.block(f"L{i}.b")
        out.append((W, b))
    return out


def _check_features(spec: MlpSpec, features: np.ndarray):
    if features.ndim != 2 or features.shape[1] != spec.n_in:
        raise ValueError(
            f"features shape {features.shape} incompatible with input size {spec.n_in}"
        )


def _forward(params: ParamVector, spec: MlpSpec, X: np.ndarray):
    """Logits plus the per-layer caches needed for backprop."""
    hs = [X]           # layer inputs
    zs = []            # pre-activations
    h = X
    for i, (W, b) in enumerate(_weights(params, spec)):
        z = h @ W + b
        zs.append(z)
        if i < spec.n_layers - 1:
            h = np.maximum(z, 0.0) if spec.activation == "relu" else np.tanh(z)
            hs.append(h)
    return zs[-1], hs, zs


def predict(params: ParamVector, spec: MlpSpec, features) -> np.ndarray:
    """Argmax class per sample; ties break to the lowest class index."""
    X = np.asarray(features, dtype=np.float64)
    _check_features(spec, X)
    logits, _, _ = _forward(params, spec, X)
    return np.argmax(logits, axis=1).astype(np.int64)


def accuracy(params: ParamVector, spec: MlpSpec, data: Dataset) -> float:
    return float(np.mean(predict(params, spec, data.features) == data.labels))


def loss_and_grad(params: ParamVector, spec: MlpSpec, data: Dataset):
    """Mean softmax cross-entropy and its gradient, in one backward pass.

    Returns ``(loss, grad)`` where ``grad`` is a ParamVector sharing the
    input layout. The gradient is the mean over samples, so duplicating
    the dataset leaves it unchanged.
    """
    X, y = data.features, data.labels
    _check_features(spec, X)
    if np.any(y >= spec.n_out):
        raise ValueError(f"label out of range for {spec.n_out} classes")
    n = X.shape[0]

    logits, hs, zs = _forward(params, spec, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = float(-log_p[np.arange(n), y].mean())

    grad = ParamVector(np.zeros(params.layout.total_len), params.layout)
    gws = _weights(grad, spec)
    ws = _weights(params, spec)

    delta = np.exp(log_p)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    for i in range(spec.n_layers - 1, -1, -1):
        gW, gb = gws[i]
        gW += hs[i].T @ delta
        gb += delta.sum(axis=0)
        if i > 0:
            back = delta @ ws[i][0].T
            if spec.activation == "relu":
                delta = back * (zs[i - 1] > 0.0)
            else:
                delta = back * (1.0 - np.tanh(zs[i - 1]) ** 2)
    return loss, grad


def fd_gradient(params: ParamVector, spec: MlpSpec, data: Dataset, h: float = 1e-6) -> np.ndarray:
    """Central-difference loss gradient; the independent oracle for backprop."""
    x = params.data
    g = np.empty_like(x)
    for i in range(x.size):
        old = x[i]
        x[i] = old + h
        lp, _ = loss_and_grad(params, spec, data)
        x[i] = old - h
        lm, _ = loss_and_grad(params, spec, data)
        x[i] = old
        g[i] = (lp - lm) / (2.0 * h)
    return g
