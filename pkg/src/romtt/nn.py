"""Minimal dense feedforward networks with hand-rolled reverse-mode
gradients and an Adam trainer.

Hidden layers use tanh, the output layer is linear.  Inputs are mapped
coordinate-wise to [-1, 1] by an affine scaling fitted on the training
set and stored with the network, so callers can feed raw physical
quantities.  Everything is seeded and runs in float64, which makes
training bit-reproducible.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import arrayio
from .errors import DataError

__all__ = ["MLP", "TrainConfig", "forward", "grad", "loss_and_grad_wrt_output",
           "train", "save_mlp", "load_mlp"]


@dataclass
class TrainConfig:
    epochs: int = 5000
    learning_rate: float = 1e-3
    batch_size: int = 0        # 0: full batch below 1024 samples, else 1024
    seed: int = 0
    clip: float = 10.0         # global gradient-norm ceiling, 0 disables
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )


class MLP:
    """Fully connected network defined by its layer sizes."""

    def __init__(self, layer_sizes, seed=0):
        if len(layer_sizes) < 2 or any(s < 1 for s in layer_sizes):
            raise ValueError(f"bad layer sizes {layer_sizes}")
        self.layer_sizes = list(layer_sizes)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            self.weights.append(rng.normal(0.0, scale, (fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        # identity input scaling until fit_input_scaling is called
        self.in_lo = -np.ones(layer_sizes[0])
        self.in_hi = np.ones(layer_sizes[0])

    @property
    def n_layers(self):
        return len(self.weights)

    def copy(self):
        dup = MLP.__new__(MLP)
        dup.layer_sizes = list(self.layer_sizes)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        dup.in_lo = self.in_lo.copy()
        dup.in_hi = self.in_hi.copy()
        return dup

    def zero_last_layer(self):
        """Zero the output layer so the network starts as the zero map."""
        self.weights[-1][:] = 0.0
        self.biases[-1][:] = 0.0

    def fit_input_scaling(self, x):
        """Record per-coordinate training ranges for the [-1, 1] mapping."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self.in_lo = x.min(axis=0)
        self.in_hi = x.max(axis=0)

    def scale_inputs(self, x):
        span = self.in_hi - self.in_lo
        span = np.where(span > 0, span, 1.0)
        return 2.0 * (x - self.in_lo) / span - 1.0


def _forward_cached(net, x):
    """Forward pass keeping post-activation values for backprop."""
    acts = [net.scale_inputs(x)]
    a = acts[0]
    last = net.n_layers - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        a = z if i == last else np.tanh(z)
        acts.append(a)
    return acts


def forward(net, x):
    """Network output for a single input (d,) or a batch (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.layer_sizes[0]:
        raise ValueError(
            f"input width {x.shape[1]} does not match first layer "
            f"{net.layer_sizes[0]}"
        )
    out = _forward_cached(net, x)[-1]
    return out[0] if single else out


def _backprop(net, acts, d_out):
    """Parameter gradients given the loss gradient at the output."""
    grads_w = [None] * net.n_layers
    grads_b = [None] * net.n_layers
    delta = d_out
    for i in range(net.n_layers - 1, -1, -1):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (1.0 - acts[i] ** 2)
    return grads_w, grads_b


def loss_and_grad_wrt_output(pred, target, loss):
    """Batch-mean loss value and its gradient at the network output.

    ``loss`` is "mse" (mean squared error), "relative" (per-sample squared
    error divided by the squared target norm), or a callable
    (pred, target) -> (value, d_pred) for composed objectives.
    """
    if callable(loss):
        return loss(pred, target)
    n = pred.shape[0]
    resid = pred - target
    if loss == "mse":
        value = float(np.mean(resid**2))
        d_pred = (2.0 / resid.size) * resid
        return value, d_pred
    if loss == "relative":
        denom = np.sum(target**2, axis=1)
        floor = 1e-12 * max(float(denom.mean()), 1.0)
        denom = np.maximum(denom, floor)
        value = float(np.mean(np.sum(resid**2, axis=1) / denom))
        d_pred = (2.0 / n) * resid / denom[:, None]
        return value, d_pred
    raise ValueError(f"unknown loss {loss!r}")


def grad(net, x, target, loss="mse"):
    """Reverse-mode gradient of the batch loss for every parameter.

    Returns (value, grads_w, grads_b) with gradients aligned to
    ``net.weights`` / ``net.biases``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if x.shape[0] == 0:
        raise DataError("empty batch")
    acts = _forward_cached(net, x)
    value, d_out = loss_and_grad_wrt_output(acts[-1], target, loss)
    grads_w, grads_b = _backprop(net, acts, d_out)
    return value, grads_w, grads_b


def _clip_global(grads_w, grads_b, limit):
    total = np.sqrt(
        sum(float(np.sum(g**2)) for g in grads_w)
        + sum(float(np.sum(g**2)) for g in grads_b)
    )
    if limit > 0 and total > limit:
        factor = limit / total
        grads_w = [g * factor for g in grads_w]
        grads_b = [g * factor for g in grads_b]
    return grads_w, grads_b


def train(net, x, target, cfg, loss="mse"):
    """Adam training with a seeded shuffling stream.

    The network is updated in place epoch by epoch; the returned network
    is a copy of the best iterate seen (lowest full-data loss, the
    initial state included), alongside the per-epoch loss history.
    Aborts with DataError naming the epoch if the loss goes non-finite.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    n = x.shape[0]
    if n == 0:
        raise DataError("empty training set")
    batch = cfg.batch_size if cfg.batch_size > 0 else (n if n < 1024 else 1024)
    batch = min(batch, n)

    rng = np.random.default_rng(cfg.seed)
    m_w = [np.zeros_like(w) for w in net.weights]
    v_w = [np.zeros_like(w) for w in net.weights]
    m_b = [np.zeros_like(b) for b in net.biases]
    v_b = [np.zeros_like(b) for b in net.biases]
    step = 0

    def full_loss():
        value, _ = loss_and_grad_wrt_output(forward(net, x), target, loss)
        return value

    best_value = full_loss()
    best_net = net.copy()
    history = []

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            rows = order[start : start + batch]
            _, gw, gb = grad(net, x[rows], target[rows], loss)
            gw, gb = _clip_global(gw, gb, cfg.clip)
            step += 1
            corr1 = 1.0 - cfg.beta1**step
            corr2 = 1.0 - cfg.beta2**step
            for i in range(net.n_layers):
                m_w[i] = cfg.beta1 * m_w[i] + (1 - cfg.beta1) * gw[i]
                v_w[i] = cfg.beta2 * v_w[i] + (1 - cfg.beta2) * gw[i] ** 2
                m_b[i] = cfg.beta1 * m_b[i] + (1 - cfg.beta1) * gb[i]
                v_b[i] = cfg.beta2 * v_b[i] + (1 - cfg.beta2) * gb[i] ** 2
                net.weights[i] -= (
                    cfg.learning_rate
                    * (m_w[i] / corr1)
                    / (np.sqrt(v_w[i] / corr2) + cfg.eps)
                )
                net.biases[i] -= (
                    cfg.learning_rate
                    * (m_b[i] / corr1)
                    / (np.sqrt(v_b[i] / corr2) + cfg.eps)
                )
        value = full_loss()
        if not np.isfinite(value):
            raise DataError(f"training loss became non-finite at epoch {epoch}")
        history.append(value)
        if value < best_value:
            best_value = value
            best_net = net.copy()

    return best_net, history


def save_mlp(net, path):
    """Write the network: mlp.json + W{i}.f64 / b{i}.f64 blocks."""
    os.makedirs(path, exist_ok=True)
    arrayio.write_json(
        os.path.join(path, "mlp.json"),
        {
            "layer_sizes": net.layer_sizes,
            "in_lo": net.in_lo.tolist(),
            "in_hi": net.in_hi.tolist(),
            "activation": "tanh",
        },
    )
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrayio.write_array(os.path.join(path, f"W{i}.f64"), w)
        arrayio.write_array(os.path.join(path, f"b{i}.f64"), b)


def load_mlp(path):
    meta = arrayio.read_json(os.path.join(path, "mlp.json"))
    sizes = meta["layer_sizes"]
    net = MLP(sizes, seed=0)
    net.in_lo = np.asarray(meta["in_lo"], dtype=np.float64)
    net.in_hi = np.asarray(meta["in_hi"], dtype=np.float64)
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        net.weights[i] = arrayio.read_array(
            os.path.join(path, f"W{i}.f64"), (fan_in, fan_out)
        )
        net.biases[i] = arrayio.read_array(
            os.path.join(path, f"b{i}.f64"), (fan_out,)
        )
    return net
