"""
Wild bootstrap for the Stein V-statistic.

The null distribution of the statistic is approximated by reweighting the
Stein matrix with a {-1, +1} Markov sign process whose flip probability
``a_n`` controls how much serial correlation the bootstrap mimics
(``a_n = 0.5`` gives i.i.d. Rademacher signs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ksdtest.errors import ConfigError, InputError
from ksdtest.kernels import DifferentiableKernel, RBFKernel, median_heuristic
from ksdtest.stein import SteinMatrix, stein_matrix, v_statistic
from ksdtest.targets import TargetDensity

__all__ = [
    "WildBootstrapConfig",
    "TestResult",
    "wild_signs",
    "replicate_signs",
    "bootstrap_statistic",
    "bootstrap_statistics",
    "empirical_quantile",
    "add_one_p_value",
    "gof_test",
]

# Largest D * n sign matrix materialised at once.
_MAX_SIGN_BLOCK = 1 << 24


@dataclass(frozen=True)
class WildBootstrapConfig:
    a_n: float = 0.5
    n_replicates: int = 1000
    seed: int | None = None

    def __post_init__(self):
        if not (0.0 < self.a_n <= 1.0):
            raise ConfigError(f"a_n must lie in (0, 1], got {self.a_n}")
        if int(self.n_replicates) != self.n_replicates or self.n_replicates < 1:
            raise ConfigError(f"n_replicates must be a positive integer, got {self.n_replicates}")


@dataclass
class TestResult:
    """Outcome of a goodness-of-fit test.

    ``reject`` is ``statistic > threshold`` and ``p_value`` uses the add-one
    convention ``(1 + #{B >= V}) / (D + 1)``.
    """

    __test__ = False  # not a pytest class

    statistic: float
    bootstrap_samples: np.ndarray
    p_value: float
    threshold: float
    alpha: float
    reject: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "statistic": float(self.statistic),
            "p_value": float(self.p_value),
            "threshold": float(self.threshold),
            "alpha": float(self.alpha),
            "reject": bool(self.reject),
            "n_replicates": int(len(self.bootstrap_samples)),
        }
        out.update(self.extra)
        if include_samples:
            out["bootstrap_samples"] = [float(b) for b in self.bootstrap_samples]
        return out


def _check_flip_probability(a_n: float):
    if not (0.0 < a_n <= 1.0):
        raise ConfigError(f"a_n must lie in (0, 1], got {a_n}")


def _signs_from_uniforms(u: np.ndarray, a_n: float) -> np.ndarray:
    # u has shape (..., n - 1); W_1 = +1 and W_t flips sign when U_t < a_n
    steps = np.where(u < a_n, -1.0, 1.0)
    ones = np.ones(u.shape[:-1] + (1,))
    return np.cumprod(np.concatenate([ones, steps], axis=-1), axis=-1)


def wild_signs(n: int, a_n: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw a sign process of length ``n`` (or ``size`` independent ones).

    Returns an array of shape ``(n,)`` or ``(size, n)`` with entries in {-1, +1}.
    """
    _check_flip_probability(a_n)
    if n < 1:
        raise InputError("n must be at least 1")
    shape = (n - 1,) if size is None else (size, n - 1)
    return _signs_from_uniforms(rng.random(shape), a_n)


def replicate_signs(n: int, a_n: float, n_replicates: int, seed, start: int = 0) -> np.ndarray:
    """Sign sequences for replicates ``start .. start + n_replicates - 1``.

    Replicate ``r`` always uses its own stream keyed by ``(seed, r)``, so a
    replicate's signs do not depend on how many others are drawn or in which
    order.
    """
    _check_flip_probability(a_n)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = np.empty((n_replicates, n))
    for k in range(n_replicates):
        child = np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (start + k,))
        out[k] = wild_signs(n, a_n, np.random.default_rng(child))
    return out


def bootstrap_statistic(H: SteinMatrix | np.ndarray, signs) -> float:
    """(1/n^2) sum_ij W_i W_j H_ij for one sign vector.

    Evaluated elementwise so that constant signs reproduce
    :func:`v_statistic` bit for bit.
    """
    h = H.h if isinstance(H, SteinMatrix) else np.asarray(H, dtype=float)
    w = np.asarray(signs, dtype=float)
    n = h.shape[0]
    if w.shape != (n,):
        raise InputError(f"signs must have length {n}, got shape {w.shape}")
    return float(np.sum(h * np.outer(w, w)) / (n * n))


def bootstrap_statistics(H: SteinMatrix | np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Vectorised B_n for a ``(D, n)`` batch of sign vectors (BLAS path)."""
    h = H.h if isinstance(H, SteinMatrix) else np.asarray(H, dtype=float)
    W = np.atleast_2d(np.asarray(signs, dtype=float))
    n = h.shape[0]
    if W.shape[1] != n:
        raise InputError(f"signs must have length {n}, got {W.shape[1]}")
    return np.einsum("dj,dj->d", W @ h, W) / (n * n)


def empirical_quantile(values, q: float) -> float:
    """Type-7 (linear interpolation) empirical quantile."""
    return float(np.quantile(np.asarray(values, dtype=float), q, method="linear"))


def add_one_p_value(statistic: float, null_samples: np.ndarray) -> float:
    null_samples = np.asarray(null_samples)
    return float((1 + np.count_nonzero(null_samples >= statistic)) / (null_samples.size + 1))


def _check_alpha(alpha):
    if not (0.0 < alpha <= 0.5):
        raise ConfigError(f"alpha must lie in (0, 0.5], got {alpha}")


def result_from_null(statistic: float, null_samples: np.ndarray, alpha: float, **extra) -> TestResult:
    threshold = empirical_quantile(null_samples, 1.0 - alpha)
    return TestResult(
        statistic=float(statistic),
        bootstrap_samples=np.asarray(null_samples, dtype=float),
        p_value=add_one_p_value(statistic, null_samples),
        threshold=threshold,
        alpha=float(alpha),
        reject=bool(statistic > threshold),
        extra=extra,
    )


def wild_bootstrap(H: SteinMatrix, config: WildBootstrapConfig) -> np.ndarray:
    """D bootstrap replicates of B_n for a precomputed Stein matrix."""
    n = H.n
    D = int(config.n_replicates)
    per_block = max(1, _MAX_SIGN_BLOCK // n)
    out = np.empty(D)
    for start in range(0, D, per_block):
        stop = min(D, start + per_block)
        W = replicate_signs(n, config.a_n, stop - start, config.seed, start=start)
        out[start:stop] = bootstrap_statistics(H, W)
    return out


def gof_test(
    samples,
    target: TargetDensity,
    kernel: DifferentiableKernel | None = None,
    config: WildBootstrapConfig | None = None,
    alpha: float = 0.05,
) -> TestResult:
    """Kernel Stein goodness-of-fit test with a wild bootstrap threshold.

    Parameters
    ----------
    samples : array of shape (n, d)
        Observations, in order (order matters for correlated samples).
    target : TargetDensity
        Null density, known up to normalisation.
    kernel : DifferentiableKernel, optional
        Defaults to an RBF kernel with the median-heuristic bandwidth of the
        (prepared) sample.
    config : WildBootstrapConfig, optional
        Flip probability, number of replicates and seed.
    alpha : float
        Test level in (0, 0.5].

    Returns
    -------
    TestResult
    """
    config = config or WildBootstrapConfig()
    _check_alpha(alpha)
    X = target.prepare_samples(samples)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise InputError("gof_test needs at least two samples")
    if kernel is None:
        kernel = RBFKernel(median_heuristic(X))
    H = stein_matrix(target, kernel, X)
    stat = v_statistic(H)
    null = wild_bootstrap(H, config)
    extra = {"n": int(X.shape[0]), "a_n": float(config.a_n)}
    if isinstance(kernel, RBFKernel):
        extra["bandwidth"] = kernel.bandwidth
    return result_from_null(stat, null, alpha, **extra)
