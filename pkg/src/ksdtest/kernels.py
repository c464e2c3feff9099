"""Differentiable kernels and bandwidth selection."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import pdist

from ksdtest.errors import ConfigError, DegenerateSampleError, InputError

__all__ = [
    "KernelDerivatives",
    "DifferentiableKernel",
    "RBFKernel",
    "kernel_derivatives",
    "median_heuristic",
]

MAX_MEDIAN_PAIRS = 1_000_000


class KernelDerivatives(NamedTuple):
    value: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray
    mixed_trace: np.ndarray


class DifferentiableKernel(ABC):
    """A kernel k(x, y) on R^d with first derivatives in each argument and the
    trace of the mixed Hessian, sum_i d^2 k / dx_i dy_i.

    ``x`` and ``y`` are arrays of shape ``(..., d)`` that broadcast against
    each other; scalar quantities come back with shape ``(...)`` and gradients
    with shape ``(..., d)``.
    """

    @abstractmethod
    def derivatives(self, x: np.ndarray, y: np.ndarray) -> KernelDerivatives:
        ...

    def eval(self, x, y):
        return self.derivatives(x, y).value

    def grad_x(self, x, y):
        return self.derivatives(x, y).grad_x

    def grad_y(self, x, y):
        return self.derivatives(x, y).grad_y

    def mixed_trace(self, x, y):
        return self.derivatives(x, y).mixed_trace

    def gram(self, X, Y=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
        return self.eval(X[:, None, :], Y[None, :, :])


class RBFKernel(DifferentiableKernel):
    """Gaussian kernel ``scale * exp(-||x - y||^2 / (2 bandwidth^2))``.

    The Gaussian kernel is C0-universal, which is what makes the Stein
    discrepancy built on it separate distinct densities.
    """

    def __init__(self, bandwidth: float, scale: float = 1.0):
        bandwidth = float(bandwidth)
        scale = float(scale)
        if not (np.isfinite(bandwidth) and bandwidth > 0):
            raise ConfigError(f"bandwidth must be positive and finite, got {bandwidth}")
        if not (np.isfinite(scale) and scale > 0):
            raise ConfigError(f"scale must be positive and finite, got {scale}")
        self.bandwidth = bandwidth
        self.scale = scale

    def __repr__(self):
        return f"RBFKernel(bandwidth={self.bandwidth!r}, scale={self.scale!r})"

    def eval(self, x, y):
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return self.scale * np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * self.bandwidth**2))

    def derivatives(self, x, y) -> KernelDerivatives:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        diff = x - y
        d = diff.shape[-1]
        s2 = self.bandwidth**2
        sq = np.sum(diff * diff, axis=-1)
        k = self.scale * np.exp(-sq / (2.0 * s2))
        gx = -(diff / s2) * k[..., None]
        return KernelDerivatives(
            value=k,
            grad_x=gx,
            grad_y=-gx,
            mixed_trace=k * (d / s2 - sq / s2**2),
        )

    def describe(self):
        return {"kernel": "rbf", "bandwidth": self.bandwidth, "scale": self.scale}


def kernel_derivatives(kernel: DifferentiableKernel, x, y) -> KernelDerivatives:
    """Value, both gradients and the mixed trace of ``kernel`` at one pair ``(x, y)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.ndim != 1 or x.shape != y.shape:
        raise InputError(f"x and y must be vectors of equal length, got {x.shape} and {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("x and y must be finite")
    kd = kernel.derivatives(x, y)
    return KernelDerivatives(float(kd.value), kd.grad_x, kd.grad_y, float(kd.mixed_trace))


def median_heuristic(samples, max_pairs: int = MAX_MEDIAN_PAIRS, seed=0) -> float:
    """Median pairwise Euclidean distance of the rows of ``samples``.

    When the sample has more than ``max_pairs`` distinct pairs, the median is
    taken over ``max_pairs`` pairs drawn uniformly (with replacement) using
    ``seed``, so the result stays deterministic.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < 2:
        raise InputError("median heuristic needs at least two samples")
    n_pairs = n * (n - 1) // 2
    if n_pairs <= max_pairs:
        dist = pdist(X)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=max_pairs)
        j = rng.integers(0, n - 1, size=max_pairs)
        j = j + (j >= i)  # uniform over j != i
        dist = np.sqrt(np.sum((X[i] - X[j]) ** 2, axis=1))
    if not np.any(dist > 0):
        raise DegenerateSampleError("degenerate sample: all points are identical")
    sigma = float(np.median(dist))
    if sigma <= 0:
        # more than half the pairs coincide; fall back to the positive distances
        sigma = float(np.median(dist[dist > 0]))
    return sigma
