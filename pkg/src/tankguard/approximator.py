"""Fully-connected networks with hand-written reverse mode, Adam, and a
portable binary weight format.

Parameters of a network live in one flat float64 vector ``net.theta``; the
per-layer weight and bias arrays are views into it, so optimizers and
serialization work on the flat vector directly.
"""
from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

ACTIVATIONS = ("relu", "tanh")
HEADS = ("linear", "sigmoid", "tanh", "squashed_gaussian")

MAGIC = b"TGMLP\x00"
FORMAT_VERSION = 1


class Mlp:
    """Multi-layer perceptron ``sizes[0] -> ... -> sizes[-1]``.

    ``activations`` has one tag per hidden layer. For the
    ``squashed_gaussian`` head the last layer holds ``2 * act_dim`` units and
    :meth:`forward` returns ``concat(mean, log_std)`` with ``log_std``
    clamped to [-20, 2].
    """

    def __init__(self, sizes, activations="relu", head="linear", rng=None, theta=None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        n_hidden = len(self.sizes) - 2
        if isinstance(activations, str):
            activations = (activations,) * n_hidden
        self.activations = tuple(activations)
        if len(self.activations) != n_hidden or any(a not in ACTIVATIONS for a in self.activations):
            raise ValueError(f"need {n_hidden} activations from {ACTIVATIONS}, got {activations}")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        if head == "squashed_gaussian" and self.sizes[-1] % 2:
            raise ValueError("squashed_gaussian head needs an even output size")
        self.head = head
        self.theta = np.zeros(self.n_params)
        self._bind()
        if theta is not None:
            theta = np.asarray(theta, dtype=np.float64)
            if theta.shape != self.theta.shape:
                raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
            self.theta[:] = theta
        elif rng is not None:
            self.init(rng)

    @property
    def n_params(self):
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    @property
    def in_dim(self):
        return self.sizes[0]

    def _bind(self):
        self.W, self.b = [], []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            self.W.append(self.theta[off:off + a * b].reshape(a, b))
            off += a * b
            self.b.append(self.theta[off:off + b])
            off += b

    def init(self, rng):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
        for W, b in zip(self.W, self.b):
            bound = 1.0 / math.sqrt(W.shape[0])
            W[...] = rng.uniform(-bound, bound, size=W.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return self

    def copy(self):
        return Mlp(self.sizes, self.activations, self.head, theta=self.theta.copy())

    def forward(self, x):
        """Returns ``(y, cache)``; ``cache`` feeds :meth:`backward`."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input dim {x.shape[-1]} != {self.sizes[0]}")
        single = x.ndim == 1
        h = x[None, :] if single else x
        hs = [h]
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            z = h @ W + b
            if i < len(self.W) - 1:
                h = np.maximum(z, 0.0) if self.activations[i] == "relu" else np.tanh(z)
            else:
                h = z
            hs.append(h)
        z = hs[-1]
        if self.head == "linear":
            y = z
        elif self.head == "sigmoid":
            y = 0.5 * (1.0 + np.tanh(0.5 * z))
        elif self.head == "tanh":
            y = np.tanh(z)
        else:
            half = z.shape[1] // 2
            y = np.concatenate([z[:, :half], np.clip(z[:, half:], LOG_STD_MIN, LOG_STD_MAX)], axis=1)
        cache = (hs, y, single)
        return (y[0] if single else y), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out, wrt_logits=False):
        """Reverse pass.

        ``grad_out`` is dL/dy for the head output (or dL/dz for the final
        pre-activation when ``wrt_logits``). Returns ``(grad_theta, grad_x)``.
        """
        hs, y, single = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if single:
            g = g[None, :]
        if not wrt_logits:
            if self.head == "sigmoid":
                g = g * y * (1.0 - y)
            elif self.head == "tanh":
                g = g * (1.0 - y * y)
            elif self.head == "squashed_gaussian":
                z = hs[-1]
                half = z.shape[1] // 2
                inside = (z[:, half:] >= LOG_STD_MIN) & (z[:, half:] <= LOG_STD_MAX)
                g = np.concatenate([g[:, :half], g[:, half:] * inside], axis=1)
        grad = np.zeros_like(self.theta)
        gW, gb = [], []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            gW.append(grad[off:off + a * b].reshape(a, b))
            off += a * b
            gb.append(grad[off:off + b])
            off += b
        for i in range(len(self.W) - 1, -1, -1):
            h_in = hs[i]
            gW[i][...] = h_in.T @ g
            gb[i][...] = g.sum(axis=0)
            g = g @ self.W[i].T
            if i > 0:
                if self.activations[i - 1] == "relu":
                    g = g * (h_in > 0.0)
                else:
                    g = g * (1.0 - h_in * h_in)
        return grad, (g[0] if single else g)


def squashed_sample(mean, log_std, eps):
    """Reparameterized tanh-Gaussian sample.

    Returns ``(action, log_prob, pre_tanh)`` with ``log_prob`` including the
    tanh change-of-variables correction, summed over action dimensions.
    """
    std = np.exp(log_std)
    u = mean + std * eps
    a = np.tanh(u)
    log_normal = -0.5 * eps * eps - 0.5 * math.log(2.0 * math.pi) - log_std
    # log(1 - tanh(u)^2) in a form that is stable for large |u|
    log_det = 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    return a, (log_normal - log_det).sum(axis=-1), u


def squashed_sample_grads(a, std, eps, g_a, g_logp):
    """Gradients w.r.t. (mean, log_std) of ``g_a . a + g_logp * log_prob``.

    ``g_a`` has the action's shape and ``g_logp`` one entry per sample.
    """
    g_logp = np.asarray(g_logp, dtype=np.float64)[..., None]
    du = g_a * (1.0 - a * a) + g_logp * 2.0 * a
    return du, du * std * eps - g_logp


class Adam:
    """Bias-corrected Adam on a flat parameter vector."""

    def __init__(self, n, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place and return it."""
        if params.shape != grads.shape or params.shape != self.m.shape:
            raise ValueError("shape mismatch between params, grads and optimizer state")
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grads
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grads * grads
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return params

    def state_dict(self):
        return {"t": self.t, "m": self.m.copy(), "v": self.v.copy(), "lr": self.lr}


def save_weights(net: Mlp, path):
    """Write ``net`` as: magic, version, layer table, little-endian float64 parameters."""
    Path(path).write_bytes(weights_to_bytes(net))


def weights_to_bytes(net: Mlp):
    n_layers = len(net.sizes) - 1
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, n_layers)]
    parts.append(struct.pack(f"<{n_layers + 1}I", *net.sizes))
    parts.append(bytes(ACTIVATIONS.index(a) for a in net.activations))
    parts.append(struct.pack("<BQ", HEADS.index(net.head), net.n_params))
    parts.append(net.theta.astype("<f8").tobytes())
    return b"".join(parts)


def load_weights(path, expect_sizes=None):
    """Read a network written by :func:`save_weights`."""
    data = Path(path).read_bytes()
    return weights_from_bytes(data, expect_sizes, source=str(path))


def weights_from_bytes(data, expect_sizes=None, source="<bytes>"):
    def need(n, what):
        if len(data) < off + n:
            raise ValueError(f"{source}: truncated weight file while reading {what}")

    off = 0
    need(len(MAGIC), "magic")
    if data[:len(MAGIC)] != MAGIC:
        raise ValueError(f"{source}: not a weight file (bad magic)")
    off = len(MAGIC)
    need(8, "header")
    version, n_layers = struct.unpack_from("<II", data, off)
    off += 8
    if version != FORMAT_VERSION:
        raise ValueError(f"{source}: unsupported weight format version {version}")
    need(4 * (n_layers + 1), "layer table")
    sizes = struct.unpack_from(f"<{n_layers + 1}I", data, off)
    off += 4 * (n_layers + 1)
    need(n_layers - 1, "activation tags")
    acts = tuple(ACTIVATIONS[c] for c in data[off:off + n_layers - 1])
    off += n_layers - 1
    need(9, "head tag")
    head_code, n_params = struct.unpack_from("<BQ", data, off)
    off += 9
    net = Mlp(sizes, acts, HEADS[head_code])
    if n_params != net.n_params:
        raise ValueError(f"{source}: parameter count {n_params} does not match layer table ({net.n_params})")
    need(8 * n_params, "parameters")
    if len(data) != off + 8 * n_params:
        raise ValueError(f"{source}: trailing bytes after parameters")
    net.theta[:] = np.frombuffer(data, dtype="<f8", count=n_params, offset=off)
    if expect_sizes is not None and tuple(expect_sizes) != net.sizes:
        raise ValueError(f"{source}: layer sizes {net.sizes} do not match expected {tuple(expect_sizes)}")
    return net
