"""Numerical core: activations, losses, seeded samplers, Adam and a gradient checker.

Dense matrices are plain float64 ``numpy`` arrays throughout the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import InvalidParameterError

BCE_EPS = 1e-7


def sigmoid(x):
    """Logistic function, evaluated without overflow for large |x|."""
    out = expit(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.logaddexp(0.0, x)


def softmax_with_temperature(z, tau: float, axis: int = -1) -> np.ndarray:
    """exp(z_i / tau) / sum_j exp(z_j / tau) along ``axis``."""
    if not tau > 0:
        raise InvalidParameterError(f"temperature must be positive, got {tau}")
    z = np.asarray(z, dtype=np.float64) / tau
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def bce_loss(y_hat, y):
    """Binary cross-entropy on probabilities clamped to [eps, 1 - eps].

    ``y`` may be fractional (a mixed target). Works element-wise on arrays.
    """
    y = np.asarray(y, dtype=np.float64)
    if np.any((y < 0) | (y > 1)):
        raise InvalidParameterError("targets must lie in [0, 1]")
    p = np.clip(np.asarray(y_hat, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return out if out.ndim else float(out)


def margin_bce(u, y):
    """BCE of sigmoid(u) against target y, computed from the margin u.

    Returns (loss, dloss/du), both element-wise. Exact for any finite u, so no
    clamping is needed; this is the form used inside training loops.
    """
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    loss = y * softplus(-u) + (1.0 - y) * softplus(u)
    return loss, sigmoid(u) - y


class Rng:
    """Seeded random source. Same seed gives the same draw sequence."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, *keys: int) -> "Rng":
        """Child generator keyed by ``keys``; independent of this generator's state."""
        ss = np.random.SeedSequence([self.seed, *[int(k) for k in keys]])
        return Rng(int(ss.generate_state(1, np.uint64)[0]))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.gen.choice(n, size=size, replace=replace)

    def __repr__(self):
        return f"Rng(seed={self.seed})"


def _gamma_ge1(a: float, n: int, rng: Rng) -> np.ndarray:
    # Marsaglia & Tsang (2000) squeeze/rejection.
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(n)
    pending = np.arange(n)
    while pending.size:
        k = pending.size
        x = rng.normal(size=k)
        u = rng.uniform(size=k)
        v = (1.0 + c * x) ** 3
        ok = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.where(ok, np.log(np.where(ok, v, 1.0)), 0.0)
            accept = ok & (
                (u < 1.0 - 0.0331 * x**4)
                | (np.log(u) < 0.5 * x**2 + d * (1.0 - v + logv))
            )
        out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    return out


def sample_gamma(shape: float, rng: Rng, size=None):
    """Gamma(shape, 1) draws; shapes below 1 use the U**(1/shape) boost."""
    if not shape > 0:
        raise InvalidParameterError(f"gamma shape must be positive, got {shape}")
    n = 1 if size is None else int(np.prod(size))
    if shape >= 1.0:
        g = _gamma_ge1(shape, n, rng)
    else:
        g = _gamma_ge1(shape + 1.0, n, rng)
        u = 1.0 - rng.uniform(size=n)  # (0, 1]
        g = g * u ** (1.0 / shape)
    return float(g[0]) if size is None else g.reshape(size)


def sample_beta(alpha: float, rng: Rng, size=None):
    """Symmetric Beta(alpha, alpha) via a ratio of two Gamma draws."""
    if not alpha > 0:
        raise InvalidParameterError(f"beta parameter must be positive, got {alpha}")
    n = 1 if size is None else int(np.prod(size))
    g1 = sample_gamma(alpha, rng, n)
    g2 = sample_gamma(alpha, rng, n)
    b = g1 / (g1 + g2)
    return float(b[0]) if size is None else b.reshape(size)


def sample_dirichlet(gamma: float, H: int, rng: Rng, size=None) -> np.ndarray:
    """Symmetric Dirichlet draw(s) of dimension ``H``; rows sum to one."""
    if H < 1:
        raise InvalidParameterError("Dirichlet dimension must be at least 1")
    if not gamma > 0:
        raise InvalidParameterError(f"concentration must be positive, got {gamma}")
    n = 1 if size is None else int(size)
    g = sample_gamma(gamma, rng, (n, H))
    w = g / g.sum(axis=1, keepdims=True)
    return w[0] if size is None else w


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param_errors: list[float]
    tolerance: float
    passed: bool
    diagnostic: str = ""
    worst: list[tuple[int, int, float, float]] = field(default_factory=list)

    def __str__(self):
        state = "ok" if self.passed else "FAILED"
        msg = f"gradcheck {state}: max rel err {self.max_rel_error:.3e} (tol {self.tolerance:.0e})"
        return msg + (f"; {self.diagnostic}" if self.diagnostic else "")


def finite_difference_check(
    f: Callable[[], float],
    params: Sequence[np.ndarray],
    analytic_grads: Sequence[np.ndarray],
    h: float = 1e-6,
    tol: float = 1e-4,
    max_coords: int = 200,
    rng: Rng | None = None,
    stencil: int = 2,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``f`` is re-evaluated after each in-place perturbation of an entry of
    ``params``, so it must read the arrays it is given (closures are fine).
    Tensors with more than ``max_coords`` entries are checked on a random
    subset of coordinates.

    ``stencil=4`` uses the five-point rule, whose O(h^4) truncation error
    allows a larger ``h`` (less round-off) on strongly curved objectives.
    """
    if stencil not in (2, 4):
        raise InvalidParameterError(f"stencil must be 2 or 4, got {stencil}")
    offsets = (1.0, -1.0) if stencil == 2 else (1.0, -1.0, 2.0, -2.0)
    rng = rng or Rng(0)
    per_param = []
    worst = []
    for pi, (p, g) in enumerate(zip(params, analytic_grads)):
        if p.shape != g.shape:
            raise InvalidParameterError(f"param {pi}: shape {p.shape} vs grad {g.shape}")
        if p.size > max_coords:
            coords = np.sort(rng.choice(p.size, max_coords))
        else:
            coords = np.arange(p.size)
        err_max = 0.0
        for idx in coords:
            old = p.flat[idx]
            vals = []
            for o in offsets:
                p.flat[idx] = old + o * h
                vals.append(f())
            p.flat[idx] = old
            if not all(np.isfinite(v) for v in vals):
                return GradCheckReport(
                    math.inf, per_param + [math.inf], tol, False,
                    diagnostic=f"non-finite objective probing param {pi} coord {idx}",
                )
            if stencil == 2:
                num = (vals[0] - vals[1]) / (2.0 * h)
            else:
                num = (8.0 * (vals[0] - vals[1]) - (vals[2] - vals[3])) / (12.0 * h)
            ana = float(g.flat[idx])
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            if rel > err_max:
                err_max = rel
            worst.append((pi, int(idx), ana, num))
        per_param.append(err_max)
    worst.sort(key=lambda r: -abs(r[2] - r[3]) / max(abs(r[2]), abs(r[3]), 1e-8))
    max_err = max(per_param) if per_param else 0.0
    return GradCheckReport(max_err, per_param, tol, max_err <= tol, worst=worst[:5])


class Adam:
    """Adam over a dict of named parameter arrays, updated in place."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(
        self,
        params: Mapping[str, np.ndarray],
        grads: Mapping[str, np.ndarray],
        lr: float,
        lr_scale: Mapping[str, float] | None = None,
    ) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            step = lr * (lr_scale or {}).get(name, 1.0)
            p -= step * (m / c1) / (np.sqrt(v / c2) + self.eps)
