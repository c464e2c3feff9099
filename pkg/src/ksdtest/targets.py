"""
Unnormalized target densities.

A target is represented by its log-density up to an additive constant and
the gradient of that log-density (the score). Only the score enters the
Stein statistic; the log-density itself is needed by the samplers.

All evaluation methods accept a single point of shape ``(d,)`` or a batch of
points of shape ``(..., d)`` and broadcast over the leading axes.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from ksdtest.errors import ConfigError, DomainError, InputError

__all__ = [
    "TargetDensity",
    "CallableTarget",
    "StandardNormalTarget",
    "StudentTTarget",
    "MixturePosteriorTarget",
    "StandardizedResidualTarget",
    "grad_log_density",
    "log_density_unnorm",
    "make_target",
]


class TargetDensity(ABC):
    """A density on R^dim known up to its normalization constant.

    Subclasses implement :meth:`_log_density` and :meth:`_grad_log_density`
    on arrays of shape ``(..., dim)``. The public methods validate the input
    and check the result for finiteness.
    """

    #: Number of per-datum likelihood terms touched by one density evaluation.
    #: Samplers use this to account for likelihood evaluations.
    n_likelihood_terms: int = 1

    def __init__(self, dim: int):
        if int(dim) != dim or dim < 1:
            raise ConfigError(f"dim must be a positive integer, got {dim!r}")
        self._dim = int(dim)

    @property
    def dim(self) -> int:
        return self._dim

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self._dim:
            raise InputError(
                f"expected points with trailing dimension {self._dim}, got shape {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise InputError("points must be finite")
        return x

    def log_density(self, x) -> np.ndarray | float:
        """Log-density plus an unknown constant; ``-inf`` outside the support."""
        out = self._log_density(self._check(x))
        return out[()] if isinstance(out, np.ndarray) and out.ndim == 0 else out

    def grad_log_density(self, x) -> np.ndarray:
        """Score function; raises :class:`DomainError` where it is not finite."""
        g = self._grad_log_density(self._check(x))
        if not np.all(np.isfinite(g)):
            raise DomainError("gradient of the log-density is not finite at the given point(s)")
        return g

    def prepare_samples(self, samples: np.ndarray) -> np.ndarray:
        """Map raw observations to the space the density lives in (identity by default)."""
        return np.asarray(samples, dtype=float)

    @abstractmethod
    def _log_density(self, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def _grad_log_density(self, x: np.ndarray) -> np.ndarray:
        ...

    def describe(self) -> dict:
        """JSON-serialisable description, used in experiment reports."""
        return {"family": type(self).__name__, "dim": self.dim}


def grad_log_density(target: TargetDensity, x) -> np.ndarray:
    return target.grad_log_density(x)


def log_density_unnorm(target: TargetDensity, x):
    return target.log_density(x)


class CallableTarget(TargetDensity):
    """Wraps user-supplied log-density and score callables.

    Both callables receive an array of shape ``(..., dim)``.
    """

    def __init__(
        self,
        dim: int,
        log_density: Callable[[np.ndarray], np.ndarray],
        grad_log_density: Callable[[np.ndarray], np.ndarray],
    ):
        super().__init__(dim)
        self._logp = log_density
        self._score = grad_log_density

    def _log_density(self, x):
        return np.asarray(self._logp(x), dtype=float)

    def _grad_log_density(self, x):
        return np.asarray(self._score(x), dtype=float)


class StandardNormalTarget(TargetDensity):
    """N(0, I_d)."""

    def __init__(self, dim: int = 1):
        super().__init__(dim)

    def _log_density(self, x):
        return -0.5 * np.sum(x * x, axis=-1)

    def _grad_log_density(self, x):
        return -x

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim))

    def describe(self):
        return {"family": "normal", "dim": self.dim}


class StudentTTarget(TargetDensity):
    """Product of ``dim`` independent standard Student-t marginals.

    ``dof=inf`` gives the standard normal.
    """

    def __init__(self, dof: float, dim: int = 1):
        super().__init__(dim)
        dof = float(dof)
        if not dof > 0:
            raise ConfigError(f"dof must be positive, got {dof}")
        self.dof = dof

    def _log_density(self, x):
        if np.isinf(self.dof):
            return -0.5 * np.sum(x * x, axis=-1)
        nu = self.dof
        return -0.5 * (nu + 1.0) * np.sum(np.log1p(x * x / nu), axis=-1)

    def _grad_log_density(self, x):
        if np.isinf(self.dof):
            return -x
        nu = self.dof
        return -(nu + 1.0) * x / (nu + x * x)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if np.isinf(self.dof):
            return rng.standard_normal((n, self.dim))
        return rng.standard_t(self.dof, size=(n, self.dim))

    def describe(self):
        return {"family": "student-t", "dim": self.dim, "dof": self.dof}


class MixturePosteriorTarget(TargetDensity):
    """Posterior of (theta1, theta2) in a two-component Gaussian mixture.

    Prior: theta1 ~ N(0, prior_var[0]), theta2 ~ N(0, prior_var[1]).
    Likelihood: X_i ~ w N(theta1, v) + (1 - w) N(theta1 + theta2, v).
    """

    def __init__(
        self,
        data: Sequence[float],
        prior_var: tuple[float, float] = (10.0, 1.0),
        component_var: float = 4.0,
        weight: float = 0.5,
    ):
        super().__init__(2)
        data = np.asarray(data, dtype=float).ravel()
        if data.size == 0:
            raise ConfigError("dataset must be nonempty")
        if not np.all(np.isfinite(data)):
            raise ConfigError("dataset must be finite")
        if min(prior_var) <= 0 or component_var <= 0:
            raise ConfigError("variances must be positive")
        if not 0 < weight < 1:
            raise ConfigError("mixture weight must lie in (0, 1)")
        self.data = data
        self.prior_var = (float(prior_var[0]), float(prior_var[1]))
        self.component_var = float(component_var)
        self.weight = float(weight)
        self.n_likelihood_terms = data.size
        self._log_w = np.log([weight, 1.0 - weight])
        self._log_norm = -0.5 * np.log(2.0 * np.pi * component_var)

    @classmethod
    def simulate(
        cls,
        n_data: int = 400,
        theta: tuple[float, float] = (0.0, 1.0),
        rng: np.random.Generator | None = None,
        **kwargs,
    ) -> "MixturePosteriorTarget":
        """Draw a dataset from the model at ``theta`` and return its posterior."""
        rng = np.random.default_rng(rng)
        component_var = kwargs.get("component_var", 4.0)
        weight = kwargs.get("weight", 0.5)
        second = rng.random(n_data) >= weight
        loc = theta[0] + np.where(second, theta[1], 0.0)
        data = loc + np.sqrt(component_var) * rng.standard_normal(n_data)
        return cls(data, **kwargs)

    def log_prior(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return -0.5 * (theta[..., 0] ** 2 / self.prior_var[0] + theta[..., 1] ** 2 / self.prior_var[1])

    def _component_logpdf(self, theta, data):
        # (..., m, 2) per-datum, per-component log densities including weights
        t1 = theta[..., 0, None]
        t2 = theta[..., 1, None]
        c = -0.5 / self.component_var
        a = self._log_w[0] + self._log_norm + c * (data - t1) ** 2
        b = self._log_w[1] + self._log_norm + c * (data - t1 - t2) ** 2
        return a, b

    def log_likelihood_terms(self, theta, indices=None) -> np.ndarray:
        """Per-datum log-likelihoods, shape ``(..., m)`` for the selected data."""
        theta = np.asarray(theta, dtype=float)
        data = self.data if indices is None else self.data[indices]
        a, b = self._component_logpdf(theta, data)
        return np.logaddexp(a, b)

    def _log_density(self, x):
        return self.log_prior(x) + np.sum(self.log_likelihood_terms(x), axis=-1)

    def _grad_log_density(self, x):
        a, b = self._component_logpdf(x, self.data)
        # responsibility of the first component, computed stably
        log_r = a - np.logaddexp(a, b)
        r = np.exp(log_r)
        t1 = x[..., 0, None]
        t2 = x[..., 1, None]
        v = self.component_var
        res1 = (self.data - t1) / v
        res2 = (self.data - t1 - t2) / v
        g1 = np.sum(r * res1 + (1.0 - r) * res2, axis=-1) - x[..., 0] / self.prior_var[0]
        g2 = np.sum((1.0 - r) * res2, axis=-1) - x[..., 1] / self.prior_var[1]
        return np.stack([g1, g2], axis=-1)

    def describe(self):
        return {
            "family": "mixture-posterior",
            "dim": 2,
            "n_data": int(self.data.size),
            "prior_var": list(self.prior_var),
            "component_var": self.component_var,
            "weight": self.weight,
        }


class StandardizedResidualTarget(StandardNormalTarget):
    """Per-observation Gaussian predictive distributions, collapsed to N(0, 1).

    Observation ``y_i`` is assumed to follow ``N(mean_i, std_i**2)``; testing
    the raw observations against this target is the same as testing the
    residuals ``(y_i - mean_i) / std_i`` against the standard normal.
    """

    def __init__(self, means: Sequence[float], stds: Sequence[float]):
        super().__init__(1)
        means = np.asarray(means, dtype=float).ravel()
        stds = np.asarray(stds, dtype=float).ravel()
        if means.shape != stds.shape:
            raise ConfigError("means and stds must have the same length")
        if not np.all(stds > 0):
            raise ConfigError("standard deviations must be positive")
        self.means = means
        self.stds = stds

    def standardize(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        if flat.size != self.means.size:
            raise InputError(f"expected {self.means.size} observations, got {flat.size}")
        return ((flat - self.means) / self.stds).reshape(-1, 1)

    def prepare_samples(self, samples):
        return self.standardize(samples)

    def describe(self):
        return {"family": "standardized-residual", "dim": 1, "n": int(self.means.size)}


_FAMILIES = {
    "normal": lambda p: StandardNormalTarget(dim=p.pop("dim", 1)),
    "student-t": lambda p: StudentTTarget(dof=p.pop("dof"), dim=p.pop("dim", 1)),
    "mixture-posterior": lambda p: (
        MixturePosteriorTarget(
            p.pop("data"),
            prior_var=tuple(p.pop("prior_var", (10.0, 1.0))),
            component_var=p.pop("component_var", 4.0),
            weight=p.pop("weight", 0.5),
        )
        if "data" in p
        else MixturePosteriorTarget.simulate(
            n_data=p.pop("n_data", 400),
            theta=tuple(p.pop("theta", (0.0, 1.0))),
            rng=p.pop("seed", None),
        )
    ),
    "standardized-residual": lambda p: StandardizedResidualTarget(p.pop("means"), p.pop("stds")),
}


def make_target(family: str, **params) -> TargetDensity:
    """Build a built-in target from a family name and keyword parameters.

    Unknown families or leftover (unrecognised) parameters raise ConfigError.
    """
    key = family.lower().replace("_", "-")
    if key in ("student", "t", "studentt"):
        key = "student-t"
    if key not in _FAMILIES:
        raise ConfigError(f"unknown target family {family!r}; choose from {sorted(_FAMILIES)}")
    params = dict(params)
    try:
        target = _FAMILIES[key](params)
    except KeyError as exc:
        raise ConfigError(f"target family {key!r} requires parameter {exc.args[0]!r}") from None
    if params:
        raise ConfigError(f"unknown parameters for target {key!r}: {sorted(params)}")
    return target
