"""Small dense-network engine: forward pass, cross-entropy, analytic gradients, SGD.

All arithmetic is float64 and accumulated in a fixed order so that identical
inputs produce bit-identical outputs.  Models are plain values; every
operation is a pure function of its arguments, with randomness (dropout
masks) supplied through an explicit Generator.

Parameters live in a single flat float64 vector.  Storage order: for each
hidden layer a weight matrix (fan_in x fan_out, row-major) followed by its
bias, then for each output head its weight matrix and bias.  Networks with
``head_count > 1`` share every hidden layer and fork only at the final
linear layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInputError, ShapeError

Array = np.ndarray

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpArchitecture:
    """Shape of a dense classifier: layer sizes (input first, classes last)."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    dropout_rate: float = 0.0
    head_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ConfigError("layer_sizes needs at least an input and an output size")
        if any(s < 1 for s in self.layer_sizes):
            raise ConfigError(f"layer sizes must be >= 1, got {self.layer_sizes}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if not (isinstance(self.dropout_rate, (int, float)) and 0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not (isinstance(self.head_count, int) and self.head_count >= 1):
            raise ConfigError(f"head_count must be an int >= 1, got {self.head_count}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def class_count(self) -> int:
        return self.layer_sizes[-1]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    def param_blocks(self):
        """Yield ``(name, slice, shape)`` for every weight/bias block in storage order."""
        sizes = self.layer_sizes
        offset = 0
        for i in range(len(sizes) - 2):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            yield f"hidden{i}_w", slice(offset, offset + fan_in * fan_out), (fan_in, fan_out)
            offset += fan_in * fan_out
            yield f"hidden{i}_b", slice(offset, offset + fan_out), (fan_out,)
            offset += fan_out
        fan_in, classes = sizes[-2], sizes[-1]
        for h in range(self.head_count):
            yield f"head{h}_w", slice(offset, offset + fan_in * classes), (fan_in, classes)
            offset += fan_in * classes
            yield f"head{h}_b", slice(offset, offset + classes), (classes,)
            offset += classes

    @property
    def param_count(self) -> int:
        total = 0
        for _, sl, _ in self.param_blocks():
            total = sl.stop
        return total

    def head_slice(self, head: int) -> slice:
        """Flat-vector slice holding one head's weight matrix and bias."""
        if not 0 <= head < self.head_count:
            raise ConfigError(f"head index {head} out of range for head_count={self.head_count}")
        start = None
        for name, sl, _ in self.param_blocks():
            if name == f"head{head}_w":
                start = sl.start
            if name == f"head{head}_b":
                return slice(start, sl.stop)
        raise AssertionError("unreachable")


@dataclass(frozen=True)
class Model:
    """An architecture plus one flat parameter vector."""

    arch: MlpArchitecture
    params: Array

    def __post_init__(self):
        params = np.asarray(self.params, dtype=np.float64)
        if params.ndim != 1:
            raise ShapeError(f"params must be a flat vector, got ndim={params.ndim}")
        if params.shape[0] != self.arch.param_count:
            raise ShapeError(
                f"params has {params.shape[0]} entries, architecture needs {self.arch.param_count}"
            )
        object.__setattr__(self, "params", params)


@dataclass(frozen=True)
class LrSchedule:
    """Geometric decay: lr(t) = initial_lr * decay**(t - 1) for t >= 1."""

    initial_lr: float
    decay: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.initial_lr) and self.initial_lr > 0):
            raise ConfigError(f"initial_lr must be positive, got {self.initial_lr}")
        if not (0.0 < self.decay <= 1.0):
            raise ConfigError(f"decay must lie in (0, 1], got {self.decay}")

    def lr(self, t: int) -> float:
        if t < 1:
            raise ConfigError(f"schedule index starts at 1, got {t}")
        return self.initial_lr * self.decay ** (t - 1)


def _as_batch(x, input_dim: int) -> tuple[Array, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
        single = True
    elif arr.ndim == 2:
        single = False
    else:
        raise ShapeError(f"features must be 1-D or 2-D, got ndim={arr.ndim}")
    if arr.shape[1] != input_dim:
        raise ShapeError(f"feature dimension {arr.shape[1]} does not match input_dim={input_dim}")
    return arr, single


def _split_params(arch: MlpArchitecture, params: Array):
    """Views of the flat vector as per-layer (W, b) pairs: hidden list + head list."""
    sizes = arch.layer_sizes
    hidden, heads = [], []
    offset = 0
    for i in range(len(sizes) - 2):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        w = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset:offset + fan_out]
        offset += fan_out
        hidden.append((w, b))
    fan_in, classes = sizes[-2], sizes[-1]
    for _ in range(arch.head_count):
        w = params[offset:offset + fan_in * classes].reshape(fan_in, classes)
        offset += fan_in * classes
        b = params[offset:offset + classes]
        offset += classes
        heads.append((w, b))
    return hidden, heads


def _activate(name: str, z: Array) -> Array:
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _forward_cache(model: Model, x: Array, rng):
    """Run the network, keeping every intermediate needed for backprop.

    Returns (inputs_per_layer, pre_dropout_activations, dropout_masks,
    head_logits, head_probs).  ``inputs_per_layer[j]`` is what layer j
    consumed (post-dropout activation of the previous layer).
    """
    arch = model.arch
    hidden, heads = _split_params(arch, model.params)
    p = arch.dropout_rate
    inputs = [x]
    pre_dropout = []
    masks = []
    a = x
    for w, b in hidden:
        z = a @ w + b
        act = _activate(arch.activation, z)
        pre_dropout.append(act)
        if p > 0.0 and rng is not None:
            # Inverted dropout: zero a unit with probability p, scale the
            # survivors by 1/(1-p) so the expected activation is unchanged.
            mask = rng.random(act.shape) >= p
            act = act * (mask / (1.0 - p))
        else:
            mask = None
        masks.append(mask)
        inputs.append(act)
        a = act
    head_logits = []
    head_probs = []
    for w, b in heads:
        z = a @ w + b
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
        head_logits.append(z)
        head_probs.append(probs)
    return inputs, pre_dropout, masks, head_logits, head_probs


def forward(model: Model, x, rng=None) -> list[Array]:
    """Class probabilities per output head.

    ``x`` may be a single feature vector or a batch; the output arrays are
    shaped accordingly.  Pass ``rng`` only to sample dropout masks (training
    mode); with ``dropout_rate == 0`` the rng is ignored entirely.
    """
    batch, single = _as_batch(x, model.arch.input_dim)
    *_, head_probs = _forward_cache(model, batch, rng)
    if single:
        return [p[0] for p in head_probs]
    return head_probs


def hidden_features(model: Model, x) -> Array:
    """Deterministic activations of the last hidden layer (the head input).

    For an architecture without hidden layers this is the raw input, which is
    what the final linear layer consumes.
    """
    batch, single = _as_batch(x, model.arch.input_dim)
    inputs, *_ = _forward_cache(model, batch, None)
    out = inputs[-1]
    return out[0] if single else out


def forward_parts(model: Model, x, rng=None) -> tuple[Array, list[Array]]:
    """(last hidden activation, per-head probabilities) for a batch.

    Hook for callers that build custom objectives on top of the heads
    (e.g. head-disagreement training) without re-deriving the trunk.
    """
    batch, _ = _as_batch(x, model.arch.input_dim)
    inputs, _, _, _, head_probs = _forward_cache(model, batch, rng)
    return inputs[-1], head_probs


def _check_labels(labels, class_count: int) -> Array:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got ndim={y.ndim}")
    if y.size == 0:
        raise EmptyInputError("empty batch")
    if not np.issubdtype(y.dtype, np.integer):
        if np.any(y != np.floor(y)):
            raise ShapeError("labels must be integers")
        y = y.astype(np.int64)
    if y.min() < 0 or y.max() >= class_count:
        raise ShapeError(f"labels must lie in [0, {class_count}), got range [{y.min()}, {y.max()}]")
    return y.astype(np.int64)


def loss(model: Model, features, labels, rng=None) -> float:
    """Mean cross-entropy over the batch, averaged over heads."""
    batch, _ = _as_batch(features, model.arch.input_dim)
    if batch.shape[0] == 0:
        raise EmptyInputError("empty batch")
    y = _check_labels(labels, model.arch.class_count)
    if y.shape[0] != batch.shape[0]:
        raise ShapeError(f"{batch.shape[0]} feature rows but {y.shape[0]} labels")
    *_, head_logits, _ = _forward_cache(model, batch, rng)
    rows = np.arange(batch.shape[0])
    total = 0.0
    for z in head_logits:
        zmax = z.max(axis=1)
        logsumexp = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
        total += float(np.mean(logsumexp - z[rows, y]))
    return total / model.arch.head_count


def grad(model: Model, features, labels, rng=None) -> Array:
    """Analytic gradient of :func:`loss` with respect to the flat parameters.

    When dropout is active the same masks are used for the forward and the
    backward pass, exactly as a single stochastic training step requires.
    """
    arch = model.arch
    batch, _ = _as_batch(features, arch.input_dim)
    if batch.shape[0] == 0:
        raise EmptyInputError("empty batch")
    y = _check_labels(labels, arch.class_count)
    if y.shape[0] != batch.shape[0]:
        raise ShapeError(f"{batch.shape[0]} feature rows but {y.shape[0]} labels")

    hidden, heads = _split_params(arch, model.params)
    inputs, pre_dropout, masks, _, head_probs = _forward_cache(model, batch, rng)
    n = batch.shape[0]
    rows = np.arange(n)
    p = arch.dropout_rate

    out = np.zeros(arch.param_count, dtype=np.float64)
    blocks = {name: (sl, shape) for name, sl, shape in arch.param_blocks()}
    last_hidden = inputs[-1]

    # dL/dz for each head; CE averaged over batch and heads.
    d_last = np.zeros_like(last_hidden)
    for h, ((w, _), probs) in enumerate(zip(heads, head_probs)):
        dz = probs.copy()
        dz[rows, y] -= 1.0
        dz /= n * arch.head_count
        sl, _ = blocks[f"head{h}_w"]
        out[sl] = (last_hidden.T @ dz).ravel()
        sl, _ = blocks[f"head{h}_b"]
        out[sl] = dz.sum(axis=0)
        d_last = d_last + dz @ w.T

    # Walk the hidden stack backwards.
    d_act = d_last
    for j in range(len(hidden) - 1, -1, -1):
        w, _ = hidden[j]
        if masks[j] is not None:
            d_act = d_act * (masks[j] / (1.0 - p))
        if arch.activation == "relu":
            d_z = d_act * (pre_dropout[j] > 0.0)
        else:
            d_z = d_act * (1.0 - pre_dropout[j] ** 2)
        sl, _ = blocks[f"hidden{j}_w"]
        out[sl] = (inputs[j].T @ d_z).ravel()
        sl, _ = blocks[f"hidden{j}_b"]
        out[sl] = d_z.sum(axis=0)
        d_act = d_z @ w.T
    return out


def sgd_step(params: Array, gradient: Array, lr: float) -> Array:
    """One descent step: ``params - lr * gradient`` as a new vector."""
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(gradient, dtype=np.float64)
    if p.ndim != 1 or g.ndim != 1 or p.shape != g.shape:
        raise ShapeError(f"params and gradient must be equal-length vectors, got {p.shape} vs {g.shape}")
    if not np.isfinite(lr):
        raise ConfigError(f"lr must be finite, got {lr}")
    return p - lr * g


def init_params(arch: MlpArchitecture, seed) -> Array:
    """Deterministic init: weights uniform in +-1/sqrt(fan_in), biases exactly zero."""
    rng = np.random.default_rng(seed)
    out = np.zeros(arch.param_count, dtype=np.float64)
    for name, sl, shape in arch.param_blocks():
        if name.endswith("_w"):
            bound = 1.0 / np.sqrt(shape[0])
            out[sl] = rng.uniform(-bound, bound, size=shape).ravel()
        # biases stay zero
    return out
