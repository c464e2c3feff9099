"""
Markov chain samplers and chain diagnostics.

``mh_random_walk`` is exact random-walk Metropolis-Hastings. ``austerity_mh``
is the approximate variant that decides each accept/reject step from a
growing random subset of the data via a sequential t-test, trading bias for
fewer likelihood evaluations. ``recommend_thinning`` turns a chain's lag-1
autocorrelation into a thinning factor and a wild-bootstrap flip
probability.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import stdtr

from ksdtest.errors import ConfigError, DomainError, InputError
from ksdtest.targets import MixturePosteriorTarget, TargetDensity

__all__ = [
    "Chain",
    "AusterityConfig",
    "ThinningRecommendation",
    "mh_random_walk",
    "mh_random_walk_many",
    "austerity_mh",
    "lag_autocorrelation",
    "thin",
    "recommend_thinning",
    "discard_burn_in",
    "write_chain_csv",
]

MAX_THINNING = 10
DEFAULT_BURN_IN = 0.1


@dataclass
class Chain:
    """States of one Markov chain (one row per step, initial point excluded)."""

    states: np.ndarray
    n_accepted: int
    likelihood_evals: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_steps


@dataclass(frozen=True)
class AusterityConfig:
    epsilon: float = 0.05
    initial_batch: int = 30
    batch_growth: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if int(self.initial_batch) != self.initial_batch or self.initial_batch < 2:
            raise ConfigError(f"initial_batch must be an integer >= 2, got {self.initial_batch}")
        if not self.batch_growth > 1.0:
            raise ConfigError(f"batch_growth must exceed 1, got {self.batch_growth}")


def _check_start(target: TargetDensity, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != target.dim:
        raise InputError(f"starting point must have dimension {target.dim}, got shape {x0.shape}")
    return x0


def mh_random_walk_many(
    target: TargetDensity,
    x0,
    n_steps: int,
    proposal_sd: float,
    rngs: Sequence[np.random.Generator],
) -> list[Chain]:
    """Run independent random-walk MH chains in lockstep.

    Chain ``c`` starts at ``x0[c]`` and consumes randomness only from
    ``rngs[c]``: its trajectory is identical to running
    ``mh_random_walk(target, x0[c], n_steps, proposal_sd, rngs[c])`` alone.
    """
    if not proposal_sd > 0:
        raise ConfigError(f"proposal_sd must be positive, got {proposal_sd}")
    if n_steps < 1:
        raise ConfigError("n_steps must be at least 1")
    x = np.atleast_2d(_check_start(target, x0)).copy()
    m, d = x.shape
    if len(rngs) != m:
        raise InputError(f"need one generator per chain: {m} chains, {len(rngs)} generators")

    # all proposal noise and uniforms are drawn up front, per chain
    noise = np.empty((n_steps, m, d))
    log_u = np.empty((n_steps, m))
    for c, rng in enumerate(rngs):
        noise[:, c] = rng.standard_normal((n_steps, d))
        log_u[:, c] = np.log(rng.random(n_steps))
    noise *= proposal_sd

    logp = np.asarray(target.log_density(x), dtype=float)
    if not np.all(np.isfinite(logp)):
        raise DomainError("target log-density is not finite at the starting point")
    states = np.empty((n_steps, m, d))
    accepted = np.zeros(m, dtype=np.int64)
    for t in range(n_steps):
        prop = x + noise[t]
        logp_prop = target._log_density(prop)
        acc = log_u[t] < logp_prop - logp
        x = np.where(acc[:, None], prop, x)
        logp = np.where(acc, logp_prop, logp)
        accepted += acc
        states[t] = x

    evals = (n_steps + 1) * target.n_likelihood_terms
    return [
        Chain(states[:, c].copy(), int(accepted[c]), evals, {"sampler": "mh", "proposal_sd": proposal_sd})
        for c in range(m)
    ]


def mh_random_walk(
    target: TargetDensity, x0, n_steps: int, proposal_sd: float, rng: np.random.Generator
) -> Chain:
    """Random-walk Metropolis-Hastings with isotropic Gaussian proposals."""
    x0 = _check_start(target, x0)
    if x0.ndim != 1:
        raise InputError("x0 must be a single point; use mh_random_walk_many for several chains")
    return mh_random_walk_many(target, x0[None, :], n_steps, proposal_sd, [rng])[0]


def _sequential_decision(terms_fn, n_data, mu0, config, sub_rng):
    """Sequential t-test of mean(l_i) > mu0 over a growing random subset.

    ``terms_fn(idx)`` returns per-datum log-likelihoods at the proposal and at
    the current state. Returns ``(decision, used, full_terms)`` where
    ``decision`` is None when the whole dataset was consumed without a
    significant result; ``full_terms`` then holds both term vectors in the
    original data order.
    """
    order = sub_rng.permutation(n_data)
    used = 0
    batch = int(config.initial_batch)
    total = 0.0
    total_sq = 0.0
    prop_terms = np.empty(n_data)
    cur_terms = np.empty(n_data)
    while True:
        take = min(batch, n_data - used)
        idx = order[used : used + take]
        lp, lc = terms_fn(idx)
        prop_terms[idx] = lp
        cur_terms[idx] = lc
        diff = lp - lc
        total += float(np.sum(diff))
        total_sq += float(np.sum(diff * diff))
        used += take
        if used >= n_data:
            return None, used, (prop_terms, cur_terms)
        mean = total / used
        var = max(total_sq / used - mean * mean, 0.0) * used / (used - 1)
        # standard error with finite population correction
        se = np.sqrt(var / used * (1.0 - (used - 1) / (n_data - 1)))
        if se > 0:
            t_stat = (mean - mu0) / se
            delta = 1.0 - stdtr(used - 1, abs(t_stat))
            if delta < config.epsilon:
                return bool(mean > mu0), used, None
        batch = int(np.ceil(batch * config.batch_growth))


def austerity_mh(
    target: MixturePosteriorTarget,
    x0,
    n_steps: int,
    proposal_sd: float,
    config: AusterityConfig,
    rng: np.random.Generator,
) -> Chain:
    """Approximate random-walk MH on a posterior with a subsampled accept test.

    Proposal noise and the acceptance uniforms are drawn exactly as in
    :func:`mh_random_walk`; subsampling draws come from a child stream
    spawned off ``rng``. When the sequential test exhausts the data the step
    falls back to the exact MH comparison, computed from the same terms and
    in the same order as the exact sampler, so a configuration that always
    consumes the full dataset reproduces exact MH bit for bit.

    ``likelihood_evals`` counts every per-datum log-likelihood evaluation:
    two per datum inspected in a step (proposal and current state), plus the
    full dataset once at the starting point.
    """
    if not proposal_sd > 0:
        raise ConfigError(f"proposal_sd must be positive, got {proposal_sd}")
    if n_steps < 1:
        raise ConfigError("n_steps must be at least 1")
    x = _check_start(target, x0).copy()
    if x.ndim != 1:
        raise InputError("x0 must be a single point")
    d = target.dim
    N = target.n_likelihood_terms
    sub_rng = rng.spawn(1)[0]
    noise = rng.standard_normal((n_steps, d)) * proposal_sd
    log_u = np.log(rng.random(n_steps))

    logp = float(target.log_density(x))
    if not np.isfinite(logp):
        raise DomainError("target log-density is not finite at the starting point")
    evals = N
    states = np.empty((n_steps, d))
    accepted = 0
    for t in range(n_steps):
        prop = x + noise[t]
        prior_prop = target.log_prior(prop)
        # symmetric proposal: threshold on the mean log-likelihood ratio
        mu0 = (log_u[t] + target.log_prior(x) - prior_prop) / N

        def terms(idx, prop=prop, x=x):
            return target.log_likelihood_terms(prop, idx), target.log_likelihood_terms(x, idx)

        decision, used, full = _sequential_decision(terms, N, mu0, config, sub_rng)
        evals += 2 * used
        if decision is None:
            prop_terms, cur_terms = full
            if logp is None:
                logp = target.log_prior(x) + np.sum(cur_terms, axis=-1)
            logp_prop = prior_prop + np.sum(prop_terms, axis=-1)
            decision = bool(log_u[t] < logp_prop - logp)
            if decision:
                x, logp = prop, logp_prop
        elif decision:
            # exact log-density of the new state is unknown until needed
            x, logp = prop, None
        accepted += decision
        states[t] = x
    meta = {"sampler": "austerity", "proposal_sd": proposal_sd, "epsilon": config.epsilon}
    return Chain(states, int(accepted), int(evals), meta)


def lag_autocorrelation(series, lag: int = 1) -> float:
    """Biased lag-``lag`` sample autocorrelation of a 1-D series."""
    x = np.asarray(series, dtype=float).ravel()
    T = x.size
    if not (1 <= lag < T):
        raise InputError(f"lag must satisfy 1 <= lag < {T}, got {lag}")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom <= 0:
        raise InputError("zero variance: autocorrelation undefined for a constant series")
    return float(np.dot(xc[:-lag], xc[lag:]) / denom)


def _max_lag1(states: np.ndarray) -> float:
    vals = []
    for j in range(states.shape[1]):
        col = states[:, j]
        if np.ptp(col) == 0:
            continue
        vals.append(lag_autocorrelation(col, 1))
    if not vals:
        raise InputError("zero variance: chain never moved")
    return max(vals)


def thin(states, k: int) -> np.ndarray:
    if k < 1:
        raise ConfigError("thinning factor must be at least 1")
    return np.asarray(states)[::k]


def discard_burn_in(states, fraction: float = DEFAULT_BURN_IN) -> np.ndarray:
    if not (0.0 <= fraction < 1.0):
        raise ConfigError(f"burn-in fraction must lie in [0, 1), got {fraction}")
    states = np.asarray(states)
    return states[int(np.floor(fraction * states.shape[0])) :]


class ThinningRecommendation(NamedTuple):
    thin_factor: int
    a_n: float
    min_n: int
    lag1_autocorrelation: float
    capped: bool


def recommend_thinning(chain: Chain | np.ndarray, max_factor: int = MAX_THINNING) -> ThinningRecommendation:
    """Smallest thinning factor bringing lag-1 autocorrelation below 0.5.

    The flip probability is ``0.1 / k`` and the suggested minimum sample size
    ``max(500 k, 100 d)``. For multivariate chains the largest coordinate-wise
    autocorrelation is used. If no factor up to ``max_factor`` suffices, the
    cap is returned with ``capped=True`` and a warning is issued.
    """
    states = chain.states if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    T, d = states.shape
    if T < 100:
        raise InputError(f"need at least 100 chain states to estimate autocorrelation, got {T}")
    for k in range(1, max_factor + 1):
        rho = _max_lag1(states[::k])
        if rho < 0.5:
            return ThinningRecommendation(k, 0.1 / k, max(500 * k, 100 * d), rho, False)
    warnings.warn(
        f"lag-1 autocorrelation still {rho:.3f} after thinning by {max_factor}",
        RuntimeWarning,
        stacklevel=2,
    )
    k = max_factor
    return ThinningRecommendation(k, 0.1 / k, max(500 * k, 100 * d), rho, True)


def write_chain_csv(chain: Chain, path_or_buf) -> None:
    """CSV with one row per state, preceded by ``#``-prefixed metadata lines."""
    meta = dict(chain.metadata)
    meta.update(
        n_steps=chain.n_steps,
        acceptance_rate=chain.acceptance_rate,
        likelihood_evals=chain.likelihood_evals,
    )
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {json.dumps(value)}\n")
    buf.write(",".join(f"x{j + 1}" for j in range(chain.dim)) + "\n")
    np.savetxt(buf, chain.states, delimiter=",", fmt="%.17g")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8") as fh:
            fh.write(text)
