"""
Experiment configuration and runners producing JSON-serialisable reports.

Every random quantity is derived from one root seed. Trial ``t`` of group
``g`` (a dimension, a degree of freedom, an epsilon, ...) draws from
``SeedSequence(seed, spawn_key=(g, t, s))`` where ``s`` separates the data
stream (0) from the bootstrap stream (1). Re-running a report's ``config``
therefore reproduces its p-values exactly.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from ksdtest.baselines import bh_null_statistics, bh_test
from ksdtest.bootstrap import WildBootstrapConfig, _check_alpha, gof_test
from ksdtest.data import ingest_samples
from ksdtest.errors import ConfigError
from ksdtest.kernels import RBFKernel
from ksdtest.samplers import (
    AusterityConfig,
    austerity_mh,
    discard_burn_in,
    mh_random_walk_many,
    recommend_thinning,
)
from ksdtest.stein import stein_matrix
from ksdtest.targets import MixturePosteriorTarget, StandardNormalTarget, StudentTTarget, make_target

__all__ = ["EXPERIMENTS", "ExperimentConfig", "run_experiment"]

EXPERIMENTS = ("test", "calibrate", "power-table", "mcmc-student", "austerity-sweep", "bh-compare")

_DEFAULTS = {
    "test": {"a_n": 0.5},
    "calibrate": {"n": 500, "trials": 200, "a_n": 0.5},
    "power-table": {"n": 500, "trials": 100, "a_n": 0.5, "d": (2, 5, 10, 15, 20, 25), "bandwidth": 1.0},
    "bh-compare": {"n": 500, "trials": 100, "a_n": 0.5, "d": (2, 5, 10, 15, 20, 25), "bandwidth": 1.0},
    "mcmc-student": {
        "n": 1400,
        "trials": 100,
        "a_n": 0.1,
        "thin": 20,
        "dof": (1.0, 5.0, 10.0, math.inf),
        "proposal_sd": math.sqrt(0.5),
        "max_thin": 50,
        "pilot_steps": 5000,
    },
    "austerity-sweep": {
        "n": 500,
        "trials": 20,
        "thin": "auto",
        "proposal_sd": 0.5,
        "max_thin": 50,
        "pilot_steps": 3000,
    },
}

_ALIASES = {"D": "replicates", "an": "a_n", "n_replicates": "replicates", "epsilon": "epsilons"}


def _tuple(value, cast):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    if isinstance(value, str) and "," in value:
        return tuple(cast(v) for v in value.split(","))
    return (cast(value),)


def _dof(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", "∞"):
        return math.inf
    return float(value)


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, np.generic):
        return x.item()
    return x


@dataclass
class ExperimentConfig:
    experiment: str
    target: str = "normal"
    target_params: dict = field(default_factory=dict)
    kernel: str = "rbf"
    bandwidth: float | str | None = None
    n: int | None = None
    d: tuple | None = None
    dof: tuple | None = None
    replicates: int = 500
    a_n: tuple | None = None
    alpha: float = 0.05
    trials: int | None = None
    seed: int | None = None
    thin: int | str | None = None
    burn_in: float = 0.1
    proposal_sd: float | None = None
    max_thin: int | None = None
    pilot_steps: int | None = None
    epsilons: tuple = (0.001, 0.01, 0.05, 0.1, 0.2)
    n_data: int = 400
    input: str | None = None
    format: str | None = None
    header: bool = False
    output: str | None = None
    dump_stein_matrix: str | None = None
    jobs: int = 1

    @classmethod
    def from_dict(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            name = _ALIASES.get(key, key).replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            kwargs[name] = value
        if "experiment" not in kwargs:
            raise ConfigError("configuration must name an experiment")
        return cls(**kwargs)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {list(EXPERIMENTS)}")
        defaults = _DEFAULTS[self.experiment]
        for name, value in defaults.items():
            if getattr(self, name) is None:
                setattr(self, name, value)
        try:
            self.d = _tuple(self.d, int)
            self.dof = _tuple(self.dof, _dof)
            self.a_n = _tuple(self.a_n, float)
            self.epsilons = _tuple(self.epsilons, float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed numeric list: {exc}") from None
        if isinstance(self.bandwidth, str) and self.bandwidth != "median":
            try:
                self.bandwidth = float(self.bandwidth)
            except ValueError:
                raise ConfigError(f"bandwidth must be a float or 'median', got {self.bandwidth!r}") from None
        if self.bandwidth is None:
            self.bandwidth = "median"
        if isinstance(self.thin, str) and self.thin != "auto":
            try:
                self.thin = int(self.thin)
            except ValueError:
                raise ConfigError(f"thin must be an integer or 'auto', got {self.thin!r}") from None
        if self.seed is None:
            self.seed = int(np.random.SeedSequence().entropy)
        self.validate()

    def validate(self):
        if self.kernel != "rbf":
            raise ConfigError(f"unsupported kernel {self.kernel!r}; only 'rbf' is available")
        if not isinstance(self.bandwidth, str) and not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.n is not None and int(self.n) < 2:
            raise ConfigError("n must be at least 2")
        if self.d is not None and min(self.d) < 1:
            raise ConfigError("dimensions must be positive")
        if self.dof is not None and not all(v > 0 for v in self.dof):
            raise ConfigError("degrees of freedom must be positive")
        if self.a_n is not None:
            if not all(0.0 < a <= 1.0 for a in self.a_n):
                raise ConfigError(f"a_n must lie in (0, 1], got {self.a_n}")
            if len(self.a_n) > 1 and self.experiment != "mcmc-student":
                raise ConfigError("several a_n values are only supported by mcmc-student")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be positive")
        _check_alpha(self.alpha)
        if self.trials is not None and int(self.trials) < 1:
            raise ConfigError("trials must be positive")
        if self.thin is not None and self.thin != "auto" and int(self.thin) < 1:
            raise ConfigError("thin must be a positive integer or 'auto'")
        if not (0.0 <= self.burn_in < 1.0):
            raise ConfigError("burn_in must lie in [0, 1)")
        if self.proposal_sd is not None and not self.proposal_sd > 0:
            raise ConfigError("proposal_sd must be positive")
        if not all(0.0 < e < 1.0 for e in self.epsilons):
            raise ConfigError("epsilons must lie in (0, 1)")
        if int(self.jobs) < 1:
            raise ConfigError("jobs must be positive")
        if self.format not in (None, "csv", "json"):
            raise ConfigError(f"format must be 'csv' or 'json', got {self.format!r}")
        if self.experiment == "test" and self.input is None:
            raise ConfigError("the test experiment needs an input file")
        if self.dump_stein_matrix is not None and self.experiment != "test":
            raise ConfigError("dump_stein_matrix is only available for the test experiment")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _seq(seed, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _kernel(cfg):
    return None if cfg.bandwidth == "median" else RBFKernel(cfg.bandwidth)


def _target(cfg, dim=None):
    params = dict(cfg.target_params)
    family = cfg.target.lower()
    if family in ("normal", "student-t", "student", "t", "studentt") and "dim" not in params:
        params["dim"] = dim if dim is not None else (cfg.d[0] if cfg.d else 1)
    if family in ("student-t", "student", "t", "studentt") and "dof" not in params and cfg.dof:
        params["dof"] = cfg.dof[0]
    return make_target(cfg.target, **params)


def _histogram(p_values, bins=10):
    counts, edges = np.histogram(p_values, bins=bins, range=(0.0, 1.0))
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def _summary(trials, alpha):
    p = np.array([t["p_value"] for t in trials])
    return {
        "p_values": p.tolist(),
        "statistics": [t["statistic"] for t in trials],
        "rejections": [t["reject"] for t in trials],
        "rejection_rate": float(np.mean([t["reject"] for t in trials])),
        "fraction_p_below_alpha": float(np.mean(p < alpha)),
        "median_p_value": float(np.median(p)),
        "p_value_histogram": _histogram(p),
    }


def _record(result, key, seconds, **extra):
    out = {
        "seed_key": list(key),
        "p_value": result.p_value,
        "statistic": result.statistic,
        "threshold": result.threshold,
        "reject": result.reject,
        "seconds": seconds,
    }
    out.update(extra)
    return out


def _stein(samples, target, cfg, a_n, key):
    return gof_test(
        samples,
        target,
        kernel=_kernel(cfg),
        config=WildBootstrapConfig(a_n, int(cfg.replicates), _seq(cfg.seed, *key, 1)),
        alpha=cfg.alpha,
    )


def _shift_alternative(n, d, rng):
    Z = rng.standard_normal((n, d))
    Z[:, 0] += rng.random(n)
    return Z


# ---------------------------------------------------------------- experiments


def _run_test(cfg):
    target = _target(cfg)
    raw = ingest_samples(cfg.input, cfg.format, header=cfg.header)
    X = raw
    a_n = cfg.a_n[0]
    thinning = None
    if cfg.thin == "auto":
        rec = recommend_thinning(X, max_factor=cfg.max_thin or 10)
        thinning = rec._asdict()
        X, a_n = X[:: rec.thin_factor], rec.a_n
    elif cfg.thin is not None and int(cfg.thin) > 1:
        X = X[:: int(cfg.thin)]
    t0 = time.perf_counter()
    result = _stein(X, target, cfg, a_n, (0, 0))
    out = {"target": target.describe(), "n_input_rows": int(raw.shape[0])}
    out.update(result.to_dict())
    out["seconds"] = time.perf_counter() - t0
    out["thinning"] = thinning
    if cfg.dump_stein_matrix:
        kernel = RBFKernel(result.extra["bandwidth"])
        H = stein_matrix(target, kernel, target.prepare_samples(X))
        np.savetxt(cfg.dump_stein_matrix, H.h, delimiter=",", fmt="%.17g")
        out["stein_matrix_path"] = cfg.dump_stein_matrix
    return out


def _calibrate_trial(args):
    cfg, t = args
    target = _target(cfg)
    if not hasattr(target, "sample"):
        raise ConfigError(f"target {cfg.target!r} cannot generate i.i.d. draws for calibration")
    key = (0, t)
    t0 = time.perf_counter()
    X = target.sample(int(cfg.n), np.random.default_rng(_seq(cfg.seed, *key, 0)))
    result = _stein(X, target, cfg, cfg.a_n[0], key)
    return _record(result, key, time.perf_counter() - t0)


def _run_calibrate(cfg):
    trials = _map(_calibrate_trial, [(cfg, t) for t in range(int(cfg.trials))], int(cfg.jobs))
    out = {"target": _target(cfg).describe(), "trials": trials}
    out.update(_summary(trials, cfg.alpha))
    out["ks_uniform_p_value"] = float(stats.kstest(out["p_values"], "uniform").pvalue)
    return out


def _paired_trial(args):
    cfg, g, d, t, alternative, null = args
    key = (g, t)
    rng = np.random.default_rng(_seq(cfg.seed, *key, 0))
    n = int(cfg.n)
    Z = _shift_alternative(n, d, rng) if alternative else rng.standard_normal((n, d))
    t0 = time.perf_counter()
    stein = _stein(Z, StandardNormalTarget(d), cfg, cfg.a_n[0], key)
    t1 = time.perf_counter()
    bh = bh_test(Z, bandwidth=cfg.bandwidth, alpha=cfg.alpha, null_statistics=null)
    t2 = time.perf_counter()
    return {"stein": _record(stein, key, t1 - t0), "bh": _record(bh, key, t2 - t1)}


def _bh_null(cfg, g, d):
    return bh_null_statistics(int(cfg.n), d, cfg.bandwidth, int(cfg.replicates), _seq(cfg.seed, g, 0, 2))


def _paired(cfg, g, d, alternative, null):
    items = [(cfg, g, d, t, alternative, null) for t in range(int(cfg.trials))]
    rows = _map(_paired_trial, items, int(cfg.jobs))
    return {m: [r[m] for r in rows] for m in ("stein", "bh")}


def _run_power_table(cfg):
    per_d = []
    for g, d in enumerate(cfg.d):
        t0 = time.perf_counter()
        res = _paired(cfg, g, d, True, _bh_null(cfg, g, d))
        per_d.append(
            {
                "d": d,
                "seconds": time.perf_counter() - t0,
                **{m: {"trials": res[m], **_summary(res[m], cfg.alpha)} for m in res},
            }
        )
    return {
        "alternative": "first coordinate shifted by U[0, 1]",
        "methods": ["stein", "bh"],
        "d": list(cfg.d),
        "power": {m: {str(r["d"]): r[m]["rejection_rate"] for r in per_d} for m in ("stein", "bh")},
        "grid": [[r[m]["rejection_rate"] for m in ("stein", "bh")] for r in per_d],
        "per_d": per_d,
    }


def _run_bh_compare(cfg):
    rows = []
    for g, d in enumerate(cfg.d):
        null = _bh_null(cfg, g, d)
        t0 = time.perf_counter()
        under_null = _paired(cfg, 2 * g + len(cfg.d), d, False, null)
        under_alt = _paired(cfg, g, d, True, null)
        rows.append(
            {
                "d": d,
                "seconds": time.perf_counter() - t0,
                "size": {m: _summary(under_null[m], cfg.alpha) for m in under_null},
                "power": {m: _summary(under_alt[m], cfg.alpha) for m in under_alt},
            }
        )
    return {"methods": ["stein", "bh"], "d": list(cfg.d), "per_d": rows}


def _thinned_samples(states, k, n, burn_in):
    kept = discard_burn_in(states, burn_in)[::k]
    return kept[-n:]


def _run_mcmc_student(cfg):
    n, trials, sd = int(cfg.n), int(cfg.trials), float(cfg.proposal_sd)
    null = StandardNormalTarget(1)
    out = []
    for g, dof in enumerate(cfg.dof):
        target = StudentTTarget(dof)
        keys = [(g, t) for t in range(trials)]
        rngs = [np.random.default_rng(_seq(cfg.seed, *key, 0)) for key in keys]
        t0 = time.perf_counter()
        x0 = np.zeros((trials, 1))
        if cfg.thin == "auto":
            pilot = mh_random_walk_many(target, x0, int(cfg.pilot_steps), sd, rngs)
            recs = [recommend_thinning(discard_burn_in(c.states, cfg.burn_in), cfg.max_thin) for c in pilot]
            ks = [r.thin_factor for r in recs]
            x0 = np.array([c.states[-1] for c in pilot])
        else:
            recs = None
            ks = [int(cfg.thin)] * trials
        T = math.ceil(n * max(ks) / (1.0 - cfg.burn_in)) + 1
        chains = mh_random_walk_many(target, x0, T, sd, rngs)
        sampling_seconds = time.perf_counter() - t0
        samples = [_thinned_samples(c.states, k, n, cfg.burn_in) for c, k in zip(chains, ks)]
        for a_n in cfg.a_n:
            trial_rows = []
            for i, (key, X) in enumerate(zip(keys, samples)):
                a = recs[i].a_n if recs is not None else a_n
                t1 = time.perf_counter()
                result = _stein(X, null, cfg, a, key)
                trial_rows.append(
                    _record(result, key, time.perf_counter() - t1, thin=ks[i], a_n=a, acceptance_rate=chains[i].acceptance_rate)
                )
            out.append(
                {
                    "dof": dof,
                    "a_n": a_n if recs is None else "auto",
                    "chain_steps": T,
                    "sampling_seconds": sampling_seconds,
                    "trials": trial_rows,
                    **_summary(trial_rows, cfg.alpha),
                }
            )
    return {"null_target": null.describe(), "results": out}


def _mixture_target(cfg):
    params = dict(cfg.target_params)
    if "data" in params:
        return make_target("mixture-posterior", **params)
    theta = tuple(params.pop("theta", (0.0, 1.0)))
    if params:
        raise ConfigError(f"unknown parameters for the austerity target: {sorted(params)}")
    rng = np.random.default_rng(_seq(cfg.seed, len(cfg.epsilons)))
    return MixturePosteriorTarget.simulate(int(cfg.n_data), theta, rng)


def _austerity_trial(args):
    cfg, target, g, eps, t = args
    key = (g, t)
    rng = np.random.default_rng(_seq(cfg.seed, *key, 0))
    aus = AusterityConfig(eps)
    n, sd = int(cfg.n), float(cfg.proposal_sd)
    x0 = np.array([0.0, 1.0])
    t0 = time.perf_counter()
    if cfg.thin == "auto":
        pilot = austerity_mh(target, x0, int(cfg.pilot_steps), sd, aus, rng)
        rec = recommend_thinning(discard_burn_in(pilot.states, cfg.burn_in), cfg.max_thin)
        k, a_n = rec.thin_factor, rec.a_n
        x0 = pilot.states[-1]
    else:
        k = int(cfg.thin)
        a_n = 0.1 / k
    if cfg.a_n is not None:
        a_n = cfg.a_n[0]
    T = math.ceil(n * k / (1.0 - cfg.burn_in))
    chain = austerity_mh(target, x0, T, sd, aus, rng)
    X = _thinned_samples(chain.states, k, n, cfg.burn_in)
    result = _stein(X, target, cfg, a_n, key)
    return _record(
        result,
        key,
        time.perf_counter() - t0,
        thin=k,
        a_n=a_n,
        chain_steps=T,
        likelihood_evals=chain.likelihood_evals,
        acceptance_rate=chain.acceptance_rate,
    )


def _run_austerity_sweep(cfg):
    target = _mixture_target(cfg)
    out = []
    for g, eps in enumerate(cfg.epsilons):
        rows = _map(_austerity_trial, [(cfg, target, g, eps, t) for t in range(int(cfg.trials))], int(cfg.jobs))
        evals = np.array([r["likelihood_evals"] for r in rows], dtype=float)
        steps = np.array([r["chain_steps"] for r in rows], dtype=float)
        out.append(
            {
                "epsilon": eps,
                "mean_likelihood_evals": float(evals.mean()),
                "mean_likelihood_evals_per_step": float(np.mean(evals / steps)),
                "mean_thin_factor": float(np.mean([r["thin"] for r in rows])),
                "trials": rows,
                **_summary(rows, cfg.alpha),
            }
        )
    return {"target": target.describe(), "results": out}


_RUNNERS = {
    "test": _run_test,
    "calibrate": _run_calibrate,
    "power-table": _run_power_table,
    "mcmc-student": _run_mcmc_student,
    "austerity-sweep": _run_austerity_sweep,
    "bh-compare": _run_bh_compare,
}


def run_experiment(config: ExperimentConfig | dict) -> dict:
    """Run one experiment and return its report as JSON-compatible data."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    t0 = time.perf_counter()
    results = _RUNNERS[cfg.experiment](cfg)
    return _jsonable(
        {
            "experiment": cfg.experiment,
            "seed": cfg.seed,
            "seed_derivation": "SeedSequence(seed, spawn_key=(group, trial, stream)); stream 0 data, 1 bootstrap",
            "config": cfg.to_dict(),
            "elapsed_seconds": time.perf_counter() - t0,
            "results": results,
        }
    )
