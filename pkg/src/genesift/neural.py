"""Deep feedforward softmax classifier trained with mini-batch SGD.

Weights are stored as ``(fan_out, fan_in)`` matrices, so a layer computes
``a @ W.T + b`` on a row-major batch.  Four updaters are available: Nesterov
momentum, ADADELTA, RMSProp and Adam.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import NumericError, ShapeError

UPDATERS = ("nesterov", "adadelta", "rmsprop", "adam")
ACTIVATIONS = ("relu", "tanh")
LOG_FLOOR = 1e-12
UPDATER_EPS = 1e-8


@dataclass(frozen=True)
class NetworkConfig:
    """Training hyper-parameters.

    ``hidden_sizes=None`` picks ``[min(256, d), 64, 16]`` for input width ``d``.
    """

    hidden_sizes: tuple | None = None
    hidden_activation: str = "relu"
    learning_rate: float = 0.1
    bias_learning_rate: float = 0.01
    momentum: float = 0.9
    updater: str = "nesterov"
    grad_norm_threshold: float = 1.0
    adadelta_rho: float = 0.0
    adadelta_epsilon: float = 1e-6
    rmsprop_decay: float = 0.95
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epochs: int = 10
    batch_size: int = 100
    bias_init: float = 1.0
    seed: int = 1

    def __post_init__(self):
        if self.updater not in UPDATERS:
            raise ValueError(f"unknown updater {self.updater!r}; choose from {UPDATERS}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        for name in ("learning_rate", "bias_learning_rate", "grad_norm_threshold",
                     "adadelta_epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("momentum", "adadelta_rho", "rmsprop_decay", "adam_beta1", "adam_beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.hidden_sizes is not None:
            sizes = tuple(int(h) for h in self.hidden_sizes)
            if not sizes or min(sizes) < 1:
                raise ValueError("hidden_sizes must be positive integers")
            object.__setattr__(self, "hidden_sizes", sizes)

    def layer_sizes(self, d_in: int, n_classes: int) -> list[int]:
        hidden = self.hidden_sizes or (min(256, d_in), 64, 16)
        return [d_in, *hidden, n_classes]


@dataclass
class UpdaterState:
    """Per-parameter accumulators, one slot array per weight/bias tensor."""

    slots: dict = field(default_factory=dict)
    t: int = 0

    def slot(self, name, shapes):
        if name not in self.slots:
            self.slots[name] = [np.zeros(s) for s in shapes]
        return self.slots[name]


@dataclass
class Gradients:
    weights: list
    biases: list

    def tensors(self):
        return [*self.weights, *self.biases]


@dataclass
class Network:
    weights: list
    biases: list
    config: NetworkConfig
    state: UpdaterState = field(default_factory=UpdaterState)

    def __post_init__(self):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: bias {b.shape} does not match weights {w.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i}: fan_in {w.shape[1]} != previous fan_out")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def params(self):
        return [*self.weights, *self.biases]

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                       self.config)


def xavier_init(fan_in: int, fan_out: int, rng) -> np.ndarray:
    """Gaussian weights with variance ``2 / (fan_in + fan_out)``."""
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_out, fan_in))


def build_network(d_in: int, n_classes: int, cfg: NetworkConfig | None = None,
                  layer_sizes=None) -> Network:
    cfg = cfg or NetworkConfig()
    sizes = list(layer_sizes) if layer_sizes is not None else cfg.layer_sizes(d_in, n_classes)
    if len(sizes) < 3:
        raise ShapeError("a network needs at least one hidden layer")
    rng = np.random.default_rng(cfg.seed)
    weights = [xavier_init(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.full(b, cfg.bias_init, dtype=float) for b in sizes[1:]]
    return Network(weights, biases, cfg)


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mcxent_loss(probs, labels) -> float:
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ShapeError(f"probs {probs.shape} and labels {labels.shape} disagree")
    picked = probs[np.arange(labels.size), labels]
    return float(-np.log(np.maximum(picked, LOG_FLOOR)).mean())


def _activate(z, kind):
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _activate_grad(a, kind):
    # expressed via the activation output, which is what forward keeps
    return (a > 0).astype(float) if kind == "relu" else 1.0 - a * a


def forward(net: Network, batch):
    """Return ``(activations, probs)``; ``activations[0]`` is the input batch."""
    a = np.asarray(batch, dtype=float)
    if a.ndim != 2 or a.shape[1] != net.weights[0].shape[1]:
        raise ShapeError(f"batch shape {a.shape} does not match input width {net.weights[0].shape[1]}")
    acts = [a]
    kind = net.config.hidden_activation
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        if i == last:
            return acts, softmax(z)
        a = _activate(z, kind)
        acts.append(a)


def backward(net: Network, activations, probs, labels) -> Gradients:
    """Gradients of the mean cross-entropy w.r.t. every weight and bias."""
    n = probs.shape[0]
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    kind = net.config.hidden_activation
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        gw[i] = delta.T @ activations[i]
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ net.weights[i]) * _activate_grad(activations[i], kind)
    return Gradients(gw, gb)


def global_norm(grads: Gradients) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.tensors())))


def clip_by_norm(grads: Gradients, threshold: float) -> Gradients:
    """Rescale all tensors together so their joint L2 norm is at most ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    norm = global_norm(grads)
    if norm <= threshold:
        return grads
    scale = threshold / norm
    clipped = Gradients([g * scale for g in grads.weights], [g * scale for g in grads.biases])
    # guard against the rounded product landing a hair above the threshold
    while global_norm(clipped) > threshold:
        scale = np.nextafter(scale, 0.0)
        clipped = Gradients([g * scale for g in grads.weights], [g * scale for g in grads.biases])
    return clipped


def _check_finite(grads: Gradients):
    for kind, group in (("weights", grads.weights), ("biases", grads.biases)):
        for i, g in enumerate(group):
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient in layer {i} {kind}")


def updater_step(state: UpdaterState, grads: Gradients, cfg: NetworkConfig) -> Gradients:
    """Turn gradients into parameter deltas, advancing ``state`` in place.

    For ``nesterov`` the caller is expected to have taken the gradient at the
    look-ahead point ``theta + momentum * v`` (see :func:`lookahead`).
    """
    _check_finite(grads)
    tensors = grads.tensors()
    shapes = [g.shape for g in tensors]
    nw = len(grads.weights)
    rates = [cfg.learning_rate] * nw + [cfg.bias_learning_rate] * (len(tensors) - nw)
    state.t += 1
    deltas = []
    if cfg.updater == "nesterov":
        vel = state.slot("velocity", shapes)
        for i, (g, lr) in enumerate(zip(tensors, rates)):
            vel[i] = cfg.momentum * vel[i] - lr * g
            deltas.append(vel[i].copy())
    elif cfg.updater == "adadelta":
        rho, eps = cfg.adadelta_rho, cfg.adadelta_epsilon
        eg2 = state.slot("sq_grad", shapes)
        edx2 = state.slot("sq_update", shapes)
        for i, g in enumerate(tensors):
            eg2[i] = rho * eg2[i] + (1 - rho) * g * g
            dx = -np.sqrt(edx2[i] + eps) / np.sqrt(eg2[i] + eps) * g
            edx2[i] = rho * edx2[i] + (1 - rho) * dx * dx
            deltas.append(dx)
    elif cfg.updater == "rmsprop":
        decay = cfg.rmsprop_decay
        eg2 = state.slot("sq_grad", shapes)
        for i, (g, lr) in enumerate(zip(tensors, rates)):
            eg2[i] = decay * eg2[i] + (1 - decay) * g * g
            deltas.append(-lr * g / np.sqrt(eg2[i] + UPDATER_EPS))
    else:
        b1, b2, t = cfg.adam_beta1, cfg.adam_beta2, state.t
        m = state.slot("m", shapes)
        v = state.slot("v", shapes)
        for i, (g, lr) in enumerate(zip(tensors, rates)):
            m[i] = b1 * m[i] + (1 - b1) * g
            v[i] = b2 * v[i] + (1 - b2) * g * g
            m_hat = m[i] / (1 - b1 ** t)
            v_hat = v[i] / (1 - b2 ** t)
            deltas.append(-lr * m_hat / (np.sqrt(v_hat) + UPDATER_EPS))
    return Gradients(deltas[:nw], deltas[nw:])


def lookahead(net: Network) -> list | None:
    """Offsets ``momentum * v`` at which Nesterov evaluates the gradient."""
    cfg = net.config
    if cfg.updater != "nesterov" or "velocity" not in net.state.slots:
        return None
    return [cfg.momentum * v for v in net.state.slots["velocity"]]


def _apply(params, deltas):
    for p, d in zip(params, deltas):
        p += d


def train(net: Network, ds, cfg: NetworkConfig | None = None):
    """Mini-batch training; returns ``(net, per-epoch mean loss)``.

    Batches are reshuffled every epoch.  When the dataset is smaller than
    ``batch_size`` every step uses the full set.
    """
    cfg = cfg or net.config
    net.config = cfg
    x, y = ds.x, ds.y
    if x.shape[1] != net.layer_sizes[0]:
        raise ShapeError(f"dataset has {x.shape[1]} features, network expects {net.layer_sizes[0]}")
    if y.size and y.max() >= net.layer_sizes[-1]:
        raise ShapeError("labels exceed the output layer width")
    n = x.shape[0]
    bs = min(cfg.batch_size, n)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    history = []
    params = net.params()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses, sizes = [], []
        for bi, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            offsets = lookahead(net)
            if offsets is not None:
                saved = [p.copy() for p in params]
                _apply(params, offsets)
            acts, probs = forward(net, x[idx])
            grads = backward(net, acts, probs, y[idx])
            if offsets is not None:
                for p, s in zip(params, saved):
                    p[...] = s
            loss = mcxent_loss(probs, y[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = clip_by_norm(grads, cfg.grad_norm_threshold)
            deltas = updater_step(net.state, grads, cfg)
            _apply(params, deltas.tensors())
            losses.append(loss)
            sizes.append(idx.size)
        history.append(float(np.average(losses, weights=sizes)))
    return net, history


def predict(net: Network, x) -> np.ndarray:
    _, probs = forward(net, x)
    return probs.argmax(axis=1)


def evaluate(net: Network, ds) -> dict:
    c = net.layer_sizes[-1]
    if ds.n_classes > c:
        raise ShapeError(f"dataset has {ds.n_classes} classes, network outputs {c}")
    pred = predict(net, ds.x)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (ds.y, pred), 1)
    n = max(ds.n_samples, 1)
    return {"accuracy": float(np.trace(confusion) / n), "confusion": confusion}


def save_network(net: Network, path) -> None:
    """Plain text: one JSON header line, then one line per weight row and bias vector."""
    header = {"layer_sizes": net.layer_sizes, "config": asdict(net.config)}
    lines = [json.dumps(header)]
    for w, b in zip(net.weights, net.biases):
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append(" ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_network(path) -> Network:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    known = {f.name for f in fields(NetworkConfig)}
    cfg = NetworkConfig(**{k: v for k, v in header["config"].items() if k in known})
    sizes = header["layer_sizes"]
    rows = iter(lines[1:])
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.array([[float(v) for v in next(rows).split()] for _ in range(fan_out)])
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(np.array([float(v) for v in next(rows).split()]))
    return Network(weights, biases, cfg)
