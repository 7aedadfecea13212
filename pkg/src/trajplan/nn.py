"""Minimal dense/GRU substrate with exact manual gradients (float64 only).

Layers hold their parameters and matching gradient accumulators; a backward
pass accumulates into the gradient buffers, which the caller zeroes between
optimizer steps. Everything is batched: inputs are (batch, features).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, TrainingDivergenceError


def sigmoid(x):
    # stable piecewise form
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mse(a, b) -> float:
    """Mean squared componentwise difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class DenseLayer:
    """y = act(W x + b) with act in {tanh, linear}."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = "tanh", rng=None):
        if activation not in ("tanh", "linear"):
            raise InvalidInputError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.W = glorot_uniform(rng, out_dim, in_dim)
        self.b = np.zeros(out_dim)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)

    def forward(self, X: np.ndarray):
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise InvalidInputError(
                f"dense expects (B, {self.in_dim}), got {X.shape}"
            )
        pre = X @ self.W.T + self.b
        Y = np.tanh(pre) if self.activation == "tanh" else pre
        return Y, (X, Y)

    def backward(self, dY: np.ndarray, cache) -> np.ndarray:
        X, Y = cache
        dpre = dY * (1.0 - Y * Y) if self.activation == "tanh" else dY
        self.gW += dpre.T @ X
        self.gb += dpre.sum(axis=0)
        return dpre @ self.W

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def grads(self):
        return [("W", self.gW), ("b", self.gb)]

    def zero_grads(self):
        self.gW[:] = 0.0
        self.gb[:] = 0.0


class GRULayer:
    """Single GRU cell with sigmoid gates and a tanh candidate.

    z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
    c = tanh(Wh x + Uh (r*h) + bh), h' = (1 - z) * h + z * c.
    """

    def __init__(self, in_dim: int, hidden: int, rng=None):
        self.in_dim = in_dim
        self.hidden = hidden
        rng = rng if rng is not None else np.random.default_rng(0)
        self.Wz = glorot_uniform(rng, hidden, in_dim)
        self.Uz = glorot_uniform(rng, hidden, hidden)
        self.bz = np.zeros(hidden)
        self.Wr = glorot_uniform(rng, hidden, in_dim)
        self.Ur = glorot_uniform(rng, hidden, hidden)
        self.br = np.zeros(hidden)
        self.Wh = glorot_uniform(rng, hidden, in_dim)
        self.Uh = glorot_uniform(rng, hidden, hidden)
        self.bh = np.zeros(hidden)
        self._names = ["Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"]
        for name in self._names:
            setattr(self, "g" + name, np.zeros_like(getattr(self, name)))

    def step(self, X: np.ndarray, H: np.ndarray):
        if X.shape[1] != self.in_dim or H.shape[1] != self.hidden:
            raise InvalidInputError("gru step dimension mismatch")
        z = sigmoid(X @ self.Wz.T + H @ self.Uz.T + self.bz)
        r = sigmoid(X @ self.Wr.T + H @ self.Ur.T + self.br)
        rh = r * H
        c = np.tanh(X @ self.Wh.T + rh @ self.Uh.T + self.bh)
        Hn = (1.0 - z) * H + z * c
        return Hn, (X, H, z, r, rh, c)

    def step_backward(self, dHn: np.ndarray, cache):
        X, H, z, r, rh, c = cache
        dz = dHn * (c - H)
        dc = dHn * z
        dH = dHn * (1.0 - z)

        dcpre = dc * (1.0 - c * c)
        self.gWh += dcpre.T @ X
        self.gUh += dcpre.T @ rh
        self.gbh += dcpre.sum(axis=0)
        drh = dcpre @ self.Uh
        dH += drh * r
        dr = drh * H

        drpre = dr * r * (1.0 - r)
        self.gWr += drpre.T @ X
        self.gUr += drpre.T @ H
        self.gbr += drpre.sum(axis=0)
        dH += drpre @ self.Ur

        dzpre = dz * z * (1.0 - z)
        self.gWz += dzpre.T @ X
        self.gUz += dzpre.T @ H
        self.gbz += dzpre.sum(axis=0)
        dH += dzpre @ self.Uz

        dX = dcpre @ self.Wh + drpre @ self.Wr + dzpre @ self.Wz
        return dX, dH

    def params(self):
        return [(n, getattr(self, n)) for n in self._names]

    def grads(self):
        return [(n, getattr(self, "g" + n)) for n in self._names]

    def zero_grads(self):
        for n in self._names:
            getattr(self, "g" + n)[:] = 0.0


# ---------------------------------------------------------------------------
# Optimizers


@dataclass
class OptimizerConfig:
    kind: str  # sgd | adam | adamw | rmsprop
    eta: float
    gamma: float = 0.99  # rmsprop smoothing
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0  # adamw decoupled decay

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("sgd", "adam", "adamw", "rmsprop"):
            raise InvalidInputError(f"unknown optimizer kind {self.kind!r}")
        if self.eta <= 0:
            raise InvalidInputError("eta must be > 0")
        if not 0 < self.gamma < 1:
            raise InvalidInputError("gamma must be in (0, 1)")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvalidInputError("betas must be in (0, 1)")
        if self.eps <= 0:
            raise InvalidInputError("eps must be > 0")
        if self.weight_decay < 0:
            raise InvalidInputError("weight_decay must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eta": self.eta,
            "gamma": self.gamma,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
        }


class Optimizer:
    """One update rule over a fixed list of (name, param, grad) triples."""

    def __init__(self, cfg: OptimizerConfig, param_grads):
        self.cfg = cfg
        self.triples = list(param_grads)  # [(name, param_array, grad_array)]
        self.t = 0
        self.m = [np.zeros_like(p) for _, p, _ in self.triples]
        self.v = [np.zeros_like(p) for _, p, _ in self.triples]

    def step(self):
        cfg = self.cfg
        self.t += 1
        for i, (name, p, g) in enumerate(self.triples):
            if not np.all(np.isfinite(g)):
                raise TrainingDivergenceError(
                    f"non-finite gradient for parameter {name!r}"
                )
            if cfg.kind == "sgd":
                p -= cfg.eta * g
            elif cfg.kind == "rmsprop":
                self.v[i] = cfg.gamma * self.v[i] + (1.0 - cfg.gamma) * g * g
                p -= cfg.eta * g / (np.sqrt(self.v[i]) + cfg.eps)
            else:  # adam / adamw
                if cfg.kind == "adamw":
                    p -= cfg.eta * cfg.weight_decay * p
                self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g
                self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g
                mhat = self.m[i] / (1.0 - cfg.beta1**self.t)
                vhat = self.v[i] / (1.0 - cfg.beta2**self.t)
                p -= cfg.eta * mhat / (np.sqrt(vhat) + cfg.eps)
            if not np.all(np.isfinite(p)):
                raise TrainingDivergenceError(
                    f"non-finite values in parameter {name!r} after update"
                )


def collect_param_grads(layers):
    """Flatten (name, param, grad) triples from a list of layers."""
    triples = []
    for li, layer in enumerate(layers):
        for (name, p), (_, g) in zip(layer.params(), layer.grads()):
            triples.append((f"layer{li}.{name}", p, g))
    return triples


def zero_grads(layers):
    for layer in layers:
        layer.zero_grads()


# ---------------------------------------------------------------------------
# Gradient verification


def gradient_check(func, params, h: float = 1e-5, loss_only=None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    func(params) must return (scalar_loss, [grad arrays matching params]);
    params is a list of float64 arrays that are perturbed in place.
    loss_only(params) -> scalar, when given, is used for the perturbed
    evaluations (it can skip the backward pass).
    """
    if h <= 0:
        raise InvalidInputError("h must be > 0")
    loss, grads = func(params)
    if not np.isfinite(loss):
        raise InvalidInputError("non-finite loss at evaluation point")
    # later evaluations may reuse the same gradient buffers
    grads = [np.array(g, copy=True) for g in grads]
    if loss_only is None:
        loss_only = lambda ps: func(ps)[0]
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_only(params)
            flat[i] = orig - h
            fm = loss_only(params)
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            rel = abs(gflat[i] - num) / (abs(gflat[i]) + abs(num) + 1e-5)
            worst = max(worst, rel)
    return worst
