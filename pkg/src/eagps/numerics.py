"""Dense float64 kernels, parameter storage, Adam and a finite-difference checker.

Tensors are plain 2-D ``numpy.float64`` arrays; vectors are stored as ``1 x k``
rows so every parameter has a (rows, cols) shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GradCheckInvalid, NonFiniteError


def rng_for(*keys: int) -> np.random.Generator:
    """Independent generator keyed by a tuple of non-negative ints."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def xavier_init(rows: int, cols: int, seed) -> np.ndarray:
    """Glorot-uniform matrix on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]."""
    if rows < 1 or cols < 1:
        raise ValueError("xavier_init needs positive dimensions")
    bound = math.sqrt(6.0 / (rows + cols))
    gen = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return gen.uniform(-bound, bound, size=(rows, cols))


def l2_normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
    safe = np.where(norms > 0.0, norms, 1.0)
    return np.where(norms > 0.0, x / safe, 0.0)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=1, keepdims=True)


def layer_norm(x: np.ndarray, gain, bias, eps: float = 1e-6) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * np.reshape(gain, (1, -1)) + np.reshape(bias, (1, -1))


def dropout_mask(shape, rate: float = 0.1, seed=0, training: bool = True) -> np.ndarray:
    """Inverted-dropout multiplier: kept entries scaled by 1/(1-rate), all ones at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return np.ones(shape)
    gen = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = gen.random(shape) >= rate
    return keep / (1.0 - rate)


class ParamStore:
    """Named parameters with gradient and Adam moment buffers of identical shape."""

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64, ndmin=2)
        if value.ndim != 2:
            raise ValueError(f"parameter {name!r} must be 2-D")
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def __contains__(self, name):
        return name in self.values

    def __getitem__(self, name):
        return self.values[name]

    def names(self):
        return list(self.values)

    def var(self, name: str):
        """Differentiable leaf for ``name``; gradients flow back into ``self.grads``."""
        from .autodiff import Var

        grads = self.grads[name]

        def sink(g):
            np.add(grads, g, out=grads)

        return Var(self.values[name], requires_grad=True, sink=sink, name=name)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def count(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def shapes(self) -> dict[str, tuple[int, int]]:
        return {k: v.shape for k, v in self.values.items()}


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, t: int | None = None) -> ParamStore:
    """Bias-corrected Adam update of every parameter, then zero the gradients."""
    if t is None:
        t = store.step + 1
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in parameter {name!r}")
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, value in store.values.items():
        g = store.grads[name]
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        g.fill(0.0)
    store.step = t
    return store


@dataclass
class GradCheckReport:
    max_rel_err: dict[str, float]
    tolerance: float
    n_checked: dict[str, int] = field(default_factory=dict)

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.max_rel_err, key=self.max_rel_err.get)
        return name, self.max_rel_err[name]

    @property
    def passed(self) -> bool:
        return all(err <= self.tolerance for err in self.max_rel_err.values())

    def lines(self):
        for name, err in self.max_rel_err.items():
            flag = "ok" if err <= self.tolerance else "FAIL"
            yield f"{name:<24s} coords={self.n_checked.get(name, 0):<4d} max_rel_err={err:.3e} {flag}"


def _loss_value(out) -> float:
    return float(np.asarray(getattr(out, "value", out)).reshape(()))


def finite_diff_grad_check(loss_fn, store: ParamStore, h: float = 1e-5, tolerance: float = 1e-4,
                           n_coords: int = 32, seed: int = 0, grad_hook=None) -> GradCheckReport:
    """Compare analytic gradients with central differences on sampled coordinates.

    ``loss_fn(store)`` must return a differentiable scalar built from
    ``store.var(...)`` leaves. ``grad_hook(name, grad)`` may rewrite the analytic
    gradient before comparison (used to test that the checker catches bugs).
    """
    store.zero_grad()
    out = loss_fn(store)
    out.backward()
    analytic = {k: g.copy() for k, g in store.grads.items()}
    store.zero_grad()
    if grad_hook is not None:
        for name in analytic:
            analytic[name] = np.asarray(grad_hook(name, analytic[name]), dtype=np.float64)

    base = _loss_value(out)
    again = _loss_value(loss_fn(store))
    if base != again:
        raise GradCheckInvalid(f"loss changed between identical evaluations ({base!r} vs {again!r})")

    gen = np.random.default_rng(seed)
    report = GradCheckReport({}, tolerance)
    for name, value in store.values.items():
        flat = value.reshape(-1)
        if flat.size <= n_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(gen.choice(flat.size, size=n_coords, replace=False))
        worst = 0.0
        a_flat = analytic[name].reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = _loss_value(loss_fn(store))
            flat[c] = orig - h
            down = _loss_value(loss_fn(store))
            flat[c] = orig
            num = (up - down) / (2.0 * h)
            a = a_flat[c]
            worst = max(worst, abs(a - num) / max(1.0, abs(a), abs(num)))
        report.max_rel_err[name] = worst
        report.n_checked[name] = int(coords.size)
    store.zero_grad()
    return report
