"""A small numpy MLP: ReLU hidden layers, linear output, MSE loss, Adam."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import ContractViolation


class Network:
    """Dense feed-forward network.

    ``weights[i]`` has shape ``(fan_in, fan_out)`` so a batch ``X`` of shape
    ``(B, fan_in)`` maps to ``X @ W + b``. With two layer sizes there are no
    hidden layers and the network is a plain affine map.
    """

    def __init__(self, layer_sizes: Sequence[int], weights=None, biases=None):
        sizes = [int(n) for n in layer_sizes]
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ContractViolation(f"bad layer sizes {layer_sizes!r}")
        self.layer_sizes = sizes
        shapes = list(zip(sizes[:-1], sizes[1:]))
        self.weights = ([np.zeros(s) for s in shapes] if weights is None
                        else [np.array(w, dtype=np.float64) for w in weights])
        self.biases = ([np.zeros(s[1]) for s in shapes] if biases is None
                       else [np.array(b, dtype=np.float64) for b in biases])
        for w, b, (i, o) in zip(self.weights, self.biases, shapes):
            if w.shape != (i, o) or b.shape != (o,):
                raise ContractViolation("weight/bias shapes do not chain with layer sizes")

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def load_from(self, other: "Network") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ContractViolation("cannot copy between networks of different shape")
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def __call__(self, x):
        return forward(self, x)


def init_network(layer_sizes: Sequence[int], rng: np.random.Generator) -> Network:
    """He-uniform weights, ``limit = sqrt(6 / fan_in)``, zero biases."""
    net = Network(layer_sizes)
    for w in net.weights:
        limit = np.sqrt(6.0 / w.shape[0])
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return net


def _as_batch(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.layer_sizes[0]:
        raise ContractViolation(f"input width {x.shape[-1]} != {net.layer_sizes[0]}")
    return x


def _forward_cache(net: Network, x: np.ndarray):
    pre, acts = [], [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return pre, acts


def forward(net: Network, batch) -> np.ndarray:
    x = _as_batch(net, batch)
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            np.maximum(h, 0.0, out=h)
    return h


def mse_loss(pred, target, mask=None) -> float:
    """Mean squared error over all B*A entries; masked entries contribute zero
    but still count in the denominator."""
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractViolation(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    if mask is not None:
        diff = diff * mask
    return float(np.mean(diff ** 2))


def backward(net: Network, batch, target, mask=None):
    """Gradients of ``mse_loss(forward(net, batch), target, mask)``.

    Returns ``(loss, grads)`` with ``grads`` aligned to ``net.params``.
    The rectifier's subgradient at exactly zero is taken as zero.
    """
    x = _as_batch(net, batch)
    target = np.asarray(target, dtype=np.float64)
    pre, acts = _forward_cache(net, x)
    pred = acts[-1]
    if pred.shape != target.shape:
        raise ContractViolation(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    if mask is not None:
        diff = diff * mask
    loss = float(np.mean(diff ** 2))
    delta = 2.0 * diff / diff.size
    grads_w, grads_b = [], []
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w.append(acts[i].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ net.weights[i].T) * (pre[i - 1] > 0)
    grads = []
    for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
        grads += [gw, gb]
    return loss, grads


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(net: Network, grads, state: AdamState) -> Network:
    """One bias-corrected Adam update, in place; returns ``net``."""
    params = net.params
    if len(grads) != len(params):
        raise ContractViolation("gradient list does not match parameters")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ContractViolation("gradient shape mismatch")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net


class GradCheckFailure(AssertionError):
    def __init__(self, error: float, coord: tuple, tol: float):
        super().__init__(f"relative gradient error {error:.3e} > {tol:g} at parameter {coord}")
        self.error = error
        self.coord = coord


def grad_check(net: Network, batch, targets, tol: Optional[float] = None, probes: int = 100,
               h: float = 1e-5, rng: Optional[np.random.Generator] = None, mask=None,
               kink: float = 1e-6) -> float:
    """Max relative error between ``backward`` and central differences.

    Probes a random subset of parameter coordinates (all of them when there
    are fewer than ``probes``). Probes whose perturbation moves any hidden
    pre-activation across (or within ``kink`` of) zero are skipped. If ``tol``
    is given and exceeded, raises ``GradCheckFailure`` naming the coordinate
    as ``(param_index, flat_index)``.
    """
    rng = rng or np.random.default_rng(0)
    x = _as_batch(net, batch)
    _, grads = backward(net, x, targets, mask)
    params = net.params
    coords = [(pi, fi) for pi, p in enumerate(params) for fi in range(p.size)]
    if len(coords) > probes:
        pick = rng.choice(len(coords), size=probes, replace=False)
        coords = [coords[i] for i in pick]

    def hidden_pre():
        pre, _ = _forward_cache(net, x)
        return pre[:-1]

    worst, worst_coord = 0.0, None
    for pi, fi in coords:
        p = params[pi].reshape(-1)
        orig = p[fi]
        p[fi] = orig + h
        pre_plus = hidden_pre()
        lp = mse_loss(forward(net, x), targets, mask)
        p[fi] = orig - h
        pre_minus = hidden_pre()
        lm = mse_loss(forward(net, x), targets, mask)
        p[fi] = orig
        near_kink = any(np.any((np.abs(a) < kink) | (np.sign(a) != np.sign(b)))
                        for a, b in zip(pre_plus, pre_minus))
        if near_kink:
            continue
        numeric = (lp - lm) / (2 * h)
        analytic = grads[pi].reshape(-1)[fi]
        denom = max(abs(numeric), abs(analytic), 1e-12)
        err = abs(numeric - analytic) / denom
        if abs(numeric - analytic) < 1e-12:
            err = 0.0
        if err > worst:
            worst, worst_coord = err, (pi, fi)
    if tol is not None and worst > tol:
        raise GradCheckFailure(worst, worst_coord, tol)
    return worst
