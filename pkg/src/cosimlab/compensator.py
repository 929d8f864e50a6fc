"""Signal-based delay compensation: AR extrapolation and a small feedforward net.

Windows are always ordered newest first, ``[u_{n-k}, u_{n-k-1}, ..., u_{n-k-p+1}]``.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

LINEAR = "linear"
LEAKY_RELU = "leaky_relu"
DEFAULT_SLOPE = 0.01


@dataclass
class ExtrapolatorParams:
    a: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        self.a = np.atleast_1d(np.asarray(self.a, dtype=float))
        self.b = float(self.b)
        if self.a.ndim != 1 or self.a.size < 1:
            raise ValueError("coefficient vector must be 1-D with at least one entry")

    @property
    def p(self) -> int:
        return self.a.size

    @property
    def dc_gain(self) -> float:
        return float(self.a.sum() + self.b)

    @classmethod
    def zoh(cls, p: int = 1) -> "ExtrapolatorParams":
        a = np.zeros(p)
        a[0] = 1.0
        return cls(a, 0.0)

    @classmethod
    def foh(cls, k: int, p: int = 2) -> "ExtrapolatorParams":
        """Linear extrapolation across ``k`` steps from the two newest samples."""
        if p < 2:
            raise ValueError("linear extrapolation needs p >= 2")
        a = np.zeros(p)
        a[0] = 1.0 + k
        a[1] = -float(k)
        return cls(a, 0.0)


def extrapolate_ar(params: ExtrapolatorParams, window) -> float:
    window = np.asarray(window, dtype=float)
    if window.shape[-1] != params.p:
        raise ValueError(f"window length {window.shape[-1]} != p={params.p}")
    return window @ params.a + params.b


def leaky_relu(z, slope: float = DEFAULT_SLOPE):
    return np.where(z >= 0, z, slope * z)


@dataclass
class CompensatorNet:
    """p inputs -> h hidden units -> 1 output."""

    W1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    slope: float = DEFAULT_SLOPE
    activation: str = LEAKY_RELU

    def __post_init__(self):
        self.W1 = np.atleast_2d(np.asarray(self.W1, dtype=float))
        self.b1 = np.asarray(self.b1, dtype=float).reshape(-1)
        self.w2 = np.asarray(self.w2, dtype=float).reshape(-1)
        self.b2 = float(self.b2)
        h = self.W1.shape[0]
        if self.b1.size != h or self.w2.size != h:
            raise ValueError("hidden layer shapes are inconsistent")
        if self.activation not in (LINEAR, LEAKY_RELU):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 < self.slope < 1.0:
            raise ValueError("leaky slope must lie in (0, 1)")

    @property
    def p(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def copy(self) -> "CompensatorNet":
        return copy.deepcopy(self)

    def flat(self) -> np.ndarray:
        """All weights in row-major layer order: W1, b1, w2, b2."""
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def with_flat(self, theta: np.ndarray) -> "CompensatorNet":
        h, p = self.W1.shape
        theta = np.asarray(theta, dtype=float)
        i = h * p
        return CompensatorNet(theta[:i].reshape(h, p), theta[i:i + h], theta[i + h:i + 2 * h],
                              theta[i + 2 * h], self.slope, self.activation)

    @classmethod
    def random(cls, p: int, hidden: int = 2, rng=None, scale: float = 0.5,
               slope: float = DEFAULT_SLOPE, activation: str = LEAKY_RELU) -> "CompensatorNet":
        rng = np.random.default_rng(rng)
        return cls(rng.normal(0, scale, (hidden, p)), rng.normal(0, scale, hidden),
                   rng.normal(0, scale, hidden), float(rng.normal(0, scale)), slope, activation)


def _act(net: CompensatorNet, z):
    if net.activation == LINEAR:
        return z
    return leaky_relu(z, net.slope)


def mlp_forward(net: CompensatorNet, window):
    """Network output for one window (scalar) or a batch of windows (1-D array)."""
    window = np.asarray(window, dtype=float)
    if window.shape[-1] != net.p:
        raise ValueError(f"window length {window.shape[-1]} != p={net.p}")
    z = window @ net.W1.T + net.b1
    return _act(net, z) @ net.w2 + net.b2


def init_from_linear(params: ExtrapolatorParams, slope: float = DEFAULT_SLOPE,
                     activation: str = LEAKY_RELU) -> CompensatorNet:
    """Two hidden units ``+a`` and ``-a`` whose leaky outputs recombine exactly.

    ``lrelu(z) - lrelu(-z) = (1 + slope) z``, so the net equals ``a^T u + b``
    at initialisation while both units carry signal.
    """
    if not 0.0 < slope < 1.0:
        raise ValueError("leaky slope must lie in (0, 1)")
    a = params.a
    g = 1.0 / (1.0 + slope) if activation == LEAKY_RELU else 0.5
    return CompensatorNet(np.vstack([a, -a]), np.zeros(2), np.array([g, -g]), params.b,
                          slope, activation)


def linear_equivalent(net: CompensatorNet) -> ExtrapolatorParams:
    if net.activation != LINEAR:
        raise ValueError("only a linear-activation network reduces to a single AR law")
    return ExtrapolatorParams(net.W1.T @ net.w2, float(net.w2 @ net.b1 + net.b2))


def activation_pattern(net: CompensatorNet, window) -> tuple:
    z = np.asarray(window, dtype=float) @ net.W1.T + net.b1
    return tuple(bool(v) for v in (z >= 0))


def region_params(net: CompensatorNet, pattern: Sequence[bool]) -> ExtrapolatorParams:
    """The affine law the net realises on windows with the given unit signs."""
    g = np.array([1.0 if on else net.slope for on in pattern])
    if net.activation == LINEAR:
        g = np.ones_like(g)
    eff = net.w2 * g
    return ExtrapolatorParams(net.W1.T @ eff, float(eff @ net.b1 + net.b2))


def all_region_params(net: CompensatorNet) -> dict:
    return {pat: region_params(net, pat) for pat in product((False, True), repeat=net.hidden)}


# --- training -------------------------------------------------------------

@dataclass
class TrainingSample:
    x: np.ndarray
    y: float


@dataclass
class TrainerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 2000
    batch_size: Optional[int] = None
    trigger_every: int = 5000
    max_samples: int = 20000
    apply_delay_steps: int = 2000
    seed: int = 0

    def validate(self, p: int = 1, k: int = 0):
        if min(self.lr, self.beta1, self.beta2, self.eps) <= 0:
            raise ValueError("optimizer constants must be positive")
        if not (self.beta1 < 1 and self.beta2 < 1):
            raise ValueError("moment decays must be < 1")
        if self.epochs < 1 or self.trigger_every < 1:
            raise ValueError("epochs and trigger_every must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_samples < p + k + 1:
            raise ValueError("max_samples must be at least p + k + 1")


def build_training_set(signal, p: int, k: int, max_samples: Optional[int] = None) -> list:
    """Sliding windows of ``p`` samples, each paired with the value ``k`` steps later."""
    s = np.asarray(signal, dtype=float)
    n = s.size - (p - 1) - k
    if n <= 0:
        return []
    start = 0 if max_samples is None else max(0, n - max_samples)
    out = []
    for i in range(start, n):
        newest = i + p - 1
        out.append(TrainingSample(s[i:newest + 1][::-1].copy(), float(s[newest + k])))
    return out


def training_arrays(signal, p: int, k: int, max_samples: Optional[int] = None):
    """Array form of :func:`build_training_set`: ``(X, y)``."""
    s = np.asarray(signal, dtype=float)
    n = s.size - (p - 1) - k
    if n <= 0:
        return np.empty((0, p)), np.empty(0)
    start = 0 if max_samples is None else max(0, n - max_samples)
    idx = np.arange(start, n)[:, None] + (p - 1) - np.arange(p)[None, :]
    return s[idx], s[np.arange(start, n) + p - 1 + k]


def mse(net: CompensatorNet, X: np.ndarray, y: np.ndarray) -> float:
    r = mlp_forward(net, X) - y
    return float(np.mean(r * r))


def loss_and_grad(net: CompensatorNet, X: np.ndarray, y: np.ndarray):
    """MSE over the batch and its gradient w.r.t. ``net.flat()``."""
    X = np.atleast_2d(X)
    z = X @ net.W1.T + net.b1
    if net.activation == LINEAR:
        a, da = z, np.ones_like(z)
    else:
        a = leaky_relu(z, net.slope)
        da = np.where(z >= 0, 1.0, net.slope)
    out = a @ net.w2 + net.b2
    r = out - y
    n = X.shape[0]
    loss = float(np.mean(r * r))
    g_out = 2.0 * r / n
    g_w2 = a.T @ g_out
    g_b2 = g_out.sum()
    g_z = (g_out[:, None] * net.w2[None, :]) * da
    g_W1 = g_z.T @ X
    g_b1 = g_z.sum(axis=0)
    return loss, np.concatenate([g_W1.ravel(), g_b1, g_w2, [g_b2]])


class Adam:
    def __init__(self, size: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    net: CompensatorNet
    loss_before: float
    loss_after: float
    accepted: bool
    history: list = field(default_factory=list)


def train(net: CompensatorNet, samples, cfg: TrainerConfig, rng=None) -> TrainResult:
    """Minimise the training-set MSE with Adam; never return a worse network.

    ``samples`` is either a list of :class:`TrainingSample` or an ``(X, y)`` pair.
    """
    if isinstance(samples, tuple):
        X, y = samples
    else:
        X = np.array([s.x for s in samples], dtype=float)
        y = np.array([s.y for s in samples], dtype=float)
    if len(y) == 0:
        raise ValueError("no training samples")
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    loss0 = mse(net, X, y)
    theta = net.flat()
    opt = Adam(theta.size, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    n = len(y)
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)
    history = []
    best_theta, best_loss = theta.copy(), loss0
    cur = net
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if bs < n else None
        for start in range(0, n, bs):
            idx = slice(None) if order is None else order[start:start + bs]
            _, g = loss_and_grad(cur, X[idx], y[idx])
            theta = opt.step(theta, g)
            cur = net.with_flat(theta)
        loss = mse(cur, X, y)
        history.append(loss)
        if not np.isfinite(loss):
            log.warning("training diverged (non-finite loss); keeping previous weights")
            return TrainResult(net.copy(), loss0, loss0, False, history)
        if loss < best_loss:
            best_theta, best_loss = theta.copy(), loss
    if best_loss < loss0:
        return TrainResult(net.with_flat(best_theta), loss0, best_loss, True, history)
    return TrainResult(net.copy(), loss0, loss0, False, history)


# --- compensators used by the co-simulation loop --------------------------

class ARCompensator:
    def __init__(self, params: ExtrapolatorParams):
        self.params = params
        self.p = params.p
        self._a = [float(v) for v in params.a]
        self._b = params.b

    def __call__(self, window) -> float:
        return sum(ai * wi for ai, wi in zip(self._a, window)) + self._b


class NetworkCompensator:
    """Evaluates a :class:`CompensatorNet`; weights are swapped whole."""

    def __init__(self, net: CompensatorNet):
        self.set_net(net)

    def set_net(self, net: CompensatorNet):
        self.net = net
        self.p = net.p
        self._W1 = [[float(v) for v in row] for row in net.W1]
        self._b1 = [float(v) for v in net.b1]
        self._w2 = [float(v) for v in net.w2]
        self._b2 = net.b2
        self._slope = net.slope if net.activation == LEAKY_RELU else 1.0

    def __call__(self, window) -> float:
        out = self._b2
        s = self._slope
        for row, bias, w in zip(self._W1, self._b1, self._w2):
            z = bias
            for wi, ui in zip(row, window):
                z += wi * ui
            out += w * (z if z >= 0 else s * z)
        return out


def save_weights(net: CompensatorNet, path):
    header = f"p={net.p} hidden={net.hidden} slope={net.slope!r} activation={net.activation} order=W1,b1,w2,b2"
    np.savetxt(path, net.flat(), header=header, fmt="%.17g")


def load_weights(path) -> CompensatorNet:
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
    meta = dict(item.split("=", 1) for item in header)
    p, h = int(meta["p"]), int(meta["hidden"])
    template = CompensatorNet(np.zeros((h, p)), np.zeros(h), np.zeros(h), 0.0,
                              float(meta["slope"]), meta["activation"])
    return template.with_flat(np.loadtxt(path, ndmin=1))
