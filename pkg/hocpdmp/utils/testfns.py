"""
Test functions: values, gradients and (for scalar bumps) derivatives.

A TestFunction is vectorized over leading axes: value takes (..., N) and
returns (...), grad returns (..., N).
"""

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

CLIP_LEVEL = 5.0


@dataclass(frozen=True, eq=False)
class TestFunction:
    name: str
    value: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    sup_norm: Optional[float] = None

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def gradient(self, x, fd_step: float = 1e-6) -> np.ndarray:
        """Analytic gradient if supplied, otherwise central differences"""
        x = np.asarray(x, dtype=float)
        if self.grad is not None:
            return self.grad(x)
        N = x.shape[-1]
        out = np.empty(x.shape, dtype=float)
        for k in range(N):
            e = np.zeros(N)
            h = fd_step * np.maximum(1.0, np.abs(x[..., k]))
            e[k] = 1.0
            out[..., k] = (self.value(x + h[..., None] * e) - self.value(x - h[..., None] * e)) / (2 * h)
        return out


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction(
        name=f"const({c:g})",
        value=lambda x: np.full(x.shape[:-1], float(c)),
        grad=lambda x: np.zeros_like(x),
        sup_norm=abs(c),
    )


def coordinate(j: int = 1) -> TestFunction:
    """x^j (1-based)"""
    def grad(x):
        g = np.zeros_like(x)
        g[..., j - 1] = 1.0
        return g
    return TestFunction(name=f"x{j}", value=lambda x: x[..., j - 1].copy(), grad=grad)


def sine(j: int = 1) -> TestFunction:
    def grad(x):
        g = np.zeros_like(x)
        g[..., j - 1] = np.cos(x[..., j - 1])
        return g
    return TestFunction(name=f"sin(x{j})", value=lambda x: np.sin(x[..., j - 1]), grad=grad, sup_norm=1.0)


def gaussian() -> TestFunction:
    def value(x):
        return np.exp(-np.sum(x * x, axis=-1))

    def grad(x):
        return -2.0 * x * value(x)[..., None]
    return TestFunction(name="exp(-|x|^2)", value=value, grad=grad, sup_norm=1.0)


def clipped_product(level: float = CLIP_LEVEL) -> TestFunction:
    """clip(x1) * clip(x2); x2 falls back to x1 in dimension one"""
    def parts(x):
        j2 = 1 if x.shape[-1] > 1 else 0
        u = np.clip(x[..., 0], -level, level)
        w = np.clip(x[..., j2], -level, level)
        return u, w, j2

    def value(x):
        u, w, _ = parts(x)
        return u * w

    def grad(x):
        u, w, j2 = parts(x)
        du = (np.abs(x[..., 0]) < level).astype(float)
        dw = (np.abs(x[..., j2]) < level).astype(float)
        g = np.zeros_like(x)
        g[..., 0] += du * w
        g[..., j2] += u * dw
        return g
    return TestFunction(name="clip(x1)*clip(x2)", value=value, grad=grad, sup_norm=level * level)


def default_suite() -> List[TestFunction]:
    """The fixed suite: 1, x1, sin(x1), exp(-|x|^2), clipped x1*x2"""
    return [constant(1.0), coordinate(1), sine(1), gaussian(), clipped_product()]


# ---------------------------------------------------------------------------
# Scalar bump functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bump:
    """
    Smooth compactly supported bump on (lo, hi):
    g(v) = scale * exp(-1 / (1 - u^2)), u = (2v - lo - hi) / (hi - lo).
    Derivatives of order 0, 1, 2 are exact.
    """
    lo: float
    hi: float
    scale: float = 1.0

    @property
    def sup_norm(self) -> float:
        return abs(self.scale) * float(np.exp(-1.0))

    def _u(self, v):
        v = np.asarray(v, dtype=float)
        return (2.0 * v - self.lo - self.hi) / (self.hi - self.lo)

    def derivative(self, v, order: int = 0):
        u = self._u(v)
        inside = np.abs(u) < 1.0
        us = np.where(inside, u, 0.0)
        den = 1.0 - us * us
        phi = np.where(inside, np.exp(-1.0 / den), 0.0)
        du = 2.0 / (self.hi - self.lo)
        if order == 0:
            out = phi
        elif order == 1:
            out = phi * (-2.0 * us / den ** 2) * du
        elif order == 2:
            out = phi * (6.0 * us ** 4 - 2.0) / den ** 4 * du * du
        else:
            raise ValueError("Bump supports derivatives up to order 2")
        return self.scale * np.where(inside, out, 0.0)

    def __call__(self, v):
        return self.derivative(v, 0)
