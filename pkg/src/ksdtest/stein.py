"""
Stein kernel, Stein matrix and the V-statistic estimate of the squared
kernel Stein discrepancy.

For a target with score s(x) = grad log p(x) and a differentiable kernel k,

    h(x, y) = s(x).s(y) k(x, y) + s(y).grad_x k(x, y)
              + s(x).grad_y k(x, y) + sum_i d^2 k(x, y) / dx_i dy_i

and the statistic is the mean of h over all ordered sample pairs,
diagonal included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ksdtest.errors import DomainError, InputError
from ksdtest.kernels import DifferentiableKernel
from ksdtest.targets import TargetDensity

__all__ = ["SteinMatrix", "stein_kernel", "stein_kernel_matrix", "stein_matrix", "v_statistic"]

# Upper bound on the number of floats in one (block, n, d) intermediate.
_BLOCK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class SteinMatrix:
    """Symmetric ``n x n`` matrix with entries h(Z_i, Z_j)."""

    h: np.ndarray

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] == 0:
            raise InputError(f"Stein matrix must be square and nonempty, got shape {h.shape}")
        object.__setattr__(self, "h", h)


def _as_samples(samples, dim: int) -> np.ndarray:
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if dim == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise InputError(f"samples must have shape (n, {dim}), got {np.shape(samples)}")
    if X.shape[0] == 0:
        raise InputError("samples must contain at least one row")
    return X


def stein_kernel(target: TargetDensity, kernel: DifferentiableKernel, x, y) -> float:
    """h(x, y) for a single pair of points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (target.dim,) or y.shape != (target.dim,):
        raise InputError(f"x and y must have shape ({target.dim},)")
    sx = target.grad_log_density(x)
    sy = target.grad_log_density(y)
    kd = kernel.derivatives(x, y)
    return float(sx @ sy * kd.value + sy @ kd.grad_x + sx @ kd.grad_y + kd.mixed_trace)


def _stein_block(kernel, Xb, Sb, X, S) -> np.ndarray:
    # every entry is reduced over d on its own so that results do not depend
    # on how rows are grouped into blocks
    kd = kernel.derivatives(Xb[:, None, :], X[None, :, :])
    Sb = Sb[:, None, :]
    S = S[None, :, :]
    return (
        np.sum(Sb * S, axis=-1) * kd.value
        + np.sum(S * kd.grad_x, axis=-1)
        + np.sum(Sb * kd.grad_y, axis=-1)
        + kd.mixed_trace
    )


def _scores(target, X, label):
    S = np.asarray(target._grad_log_density(X), dtype=float)
    bad = ~np.all(np.isfinite(S), axis=1)
    if bad.any():
        raise DomainError(f"score is not finite at {label} index {int(np.argmax(bad))}")
    return S


def _blocked(kernel, X, SX, Y, SY) -> np.ndarray:
    n, d = X.shape
    m = Y.shape[0]
    out = np.empty((n, m))
    block = max(1, _BLOCK_ELEMENTS // max(1, m * d))
    for start in range(0, n, block):
        stop = min(n, start + block)
        out[start:stop] = _stein_block(kernel, X[start:stop], SX[start:stop], Y, SY)
    return out


def stein_kernel_matrix(target: TargetDensity, kernel: DifferentiableKernel, X, Y) -> np.ndarray:
    """Cross matrix with entries h(X_i, Y_j)."""
    X = _as_samples(X, target.dim)
    Y = _as_samples(Y, target.dim)
    return _blocked(kernel, X, _scores(target, X, "X"), Y, _scores(target, Y, "Y"))


def stein_matrix(target: TargetDensity, kernel: DifferentiableKernel, samples) -> SteinMatrix:
    """Evaluate h on all sample pairs.

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric. Rows are processed in blocks to bound memory at O(n d) per row.
    """
    X = _as_samples(samples, target.dim)
    n = X.shape[0]
    S = _scores(target, X, "sample")
    H = _blocked(kernel, X, S, X, S)

    iu = np.triu_indices(n, 1)
    H[(iu[1], iu[0])] = H[iu]
    finite = np.isfinite(H)
    if not finite.all():
        i = int(np.argmax(~np.all(finite, axis=1)))
        raise DomainError(f"Stein matrix has a non-finite entry in the row of sample index {i}")
    return SteinMatrix(H)


def v_statistic(H: SteinMatrix | np.ndarray) -> float:
    """(1/n^2) sum_{i,j} H_ij."""
    h = H.h if isinstance(H, SteinMatrix) else SteinMatrix(H).h
    n = h.shape[0]
    return float(np.sum(h) / (n * n))
