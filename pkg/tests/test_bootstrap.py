import numpy as np
import pytest
from scipy import stats

from ksdtest.bootstrap import (
    TestResult,
    WildBootstrapConfig,
    add_one_p_value,
    bootstrap_statistic,
    bootstrap_statistics,
    empirical_quantile,
    gof_test,
    replicate_signs,
    wild_signs,
)
from ksdtest.errors import ConfigError, InputError
from ksdtest.kernels import RBFKernel
from ksdtest.stein import SteinMatrix, stein_matrix, v_statistic
from ksdtest.targets import StandardNormalTarget


def test_no_flip_limit():
    w = wild_signs(5, 1e-12, np.random.default_rng(0))
    np.testing.assert_array_equal(w, np.ones(5))


def test_always_flip():
    w = wild_signs(5, 1.0, np.random.default_rng(0))
    np.testing.assert_array_equal(w, [1, -1, 1, -1, 1])


def test_sign_process_definition():
    # flip exactly where the uniform falls below a_n
    rng = np.random.default_rng(3)
    u = np.random.default_rng(3).random(9)
    w = wild_signs(10, 0.3, rng)
    expected = [1.0]
    for ut in u:
        expected.append(-expected[-1] if ut < 0.3 else expected[-1])
    np.testing.assert_array_equal(w, expected)


def test_single_long_chain_autocovariance():
    w = wild_signs(100_000, 0.1, np.random.default_rng(1))
    for lag in (1, 2, 5):
        assert np.mean(w[:-lag] * w[lag:]) == pytest.approx(0.8**lag, abs=0.01)


@pytest.mark.parametrize("a_n", [0.0, -0.1, 1.5])
def test_invalid_flip_probability(a_n):
    with pytest.raises(ConfigError):
        wild_signs(5, a_n, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        WildBootstrapConfig(a_n=a_n)


def test_replicate_streams_are_order_independent():
    all_at_once = replicate_signs(20, 0.2, 10, seed=42)
    tail = replicate_signs(20, 0.2, 4, seed=42, start=6)
    np.testing.assert_array_equal(all_at_once[6:], tail)
    assert not np.array_equal(all_at_once[0], all_at_once[1])


def test_bootstrap_statistic_examples(rng):
    H = stein_matrix(StandardNormalTarget(1), RBFKernel(1.0), rng.normal(size=(30, 1)))
    assert bootstrap_statistic(H, np.ones(30)) == v_statistic(H)
    assert bootstrap_statistic(H, -np.ones(30)) == v_statistic(H)
    assert bootstrap_statistic(np.eye(3), [1, -1, 1]) == pytest.approx(1 / 3)


def test_bootstrap_statistic_length_mismatch():
    with pytest.raises(InputError):
        bootstrap_statistic(np.eye(3), [1, 1])


def test_batched_statistics_agree(rng):
    H = stein_matrix(StandardNormalTarget(2), RBFKernel(1.0), rng.normal(size=(40, 2)))
    W = replicate_signs(40, 0.5, 25, seed=1)
    batch = bootstrap_statistics(H, W)
    single = [bootstrap_statistic(H, w) for w in W]
    np.testing.assert_allclose(batch, single, rtol=1e-12, atol=1e-15)


def test_quantile_and_p_value_conventions():
    vals = np.arange(1.0, 11.0)
    assert empirical_quantile(vals, 0.95) == pytest.approx(9.55)  # type 7
    assert add_one_p_value(5.0, vals) == pytest.approx(7 / 11)  # 5..10 are >= 5
    assert add_one_p_value(100.0, vals) == pytest.approx(1 / 11)


def _check_invariants(res: TestResult, D):
    assert res.reject == (res.statistic > res.threshold)
    count = np.count_nonzero(res.bootstrap_samples >= res.statistic)
    assert res.p_value == (1 + count) / (D + 1)
    assert 0 < res.p_value <= 1
    assert res.bootstrap_samples.shape == (D,)


def test_gof_test_invariants_and_reproducibility(rng):
    X = rng.normal(size=(200, 1))
    cfg = WildBootstrapConfig(a_n=0.5, n_replicates=300, seed=17)
    r1 = gof_test(X, StandardNormalTarget(1), config=cfg)
    r2 = gof_test(X, StandardNormalTarget(1), config=cfg)
    _check_invariants(r1, 300)
    np.testing.assert_array_equal(r1.bootstrap_samples, r2.bootstrap_samples)
    assert r1.p_value == r2.p_value


def test_gof_test_replicate_blocking_is_transparent(rng, monkeypatch):
    import ksdtest.bootstrap as bs

    X = rng.normal(size=(64, 1))
    cfg = WildBootstrapConfig(a_n=0.3, n_replicates=50, seed=3)
    plain = gof_test(X, StandardNormalTarget(1), RBFKernel(1.0), cfg)
    monkeypatch.setattr(bs, "_MAX_SIGN_BLOCK", 64 * 7)
    blocked = gof_test(X, StandardNormalTarget(1), RBFKernel(1.0), cfg)
    np.testing.assert_allclose(plain.bootstrap_samples, blocked.bootstrap_samples, rtol=1e-12)
    assert plain.p_value == blocked.p_value


def test_gof_test_validates_inputs(rng):
    with pytest.raises(ConfigError):
        gof_test(rng.normal(size=(10, 1)), StandardNormalTarget(1), alpha=0.7)
    with pytest.raises(InputError):
        gof_test(np.zeros((1, 1)), StandardNormalTarget(1))


def test_to_dict_round_trip(rng):
    res = gof_test(
        rng.normal(size=(50, 1)), StandardNormalTarget(1), config=WildBootstrapConfig(0.5, 20, 0)
    )
    d = res.to_dict(include_samples=True)
    assert d["reject"] == res.reject
    assert len(d["bootstrap_samples"]) == 20


def _null_p_values(trials, n=500, D=500):
    ps = []
    for t in range(trials):
        rng = np.random.default_rng([7, t])
        res = gof_test(
            rng.normal(size=(n, 1)), StandardNormalTarget(1), config=WildBootstrapConfig(0.5, D, [7, t])
        )
        ps.append(res.p_value)
    return np.array(ps)


def test_null_p_values_roughly_uniform():
    ps = _null_p_values(100, n=200, D=300)
    assert stats.kstest(ps, "uniform").pvalue > 0.01
    assert 0.0 <= np.mean(ps <= 0.05) <= 0.12


def test_p_value_shrinks_with_n_under_alternative():
    def med(n):
        ps = []
        for t in range(15):
            rng = np.random.default_rng([11, n, t])
            x = rng.standard_t(3, size=(n, 1))
            ps.append(gof_test(x, StandardNormalTarget(1), config=WildBootstrapConfig(0.5, 300, t)).p_value)
        return np.median(ps)

    assert med(1000) < med(250)


def test_heavy_tails_rejected():
    rejections = 0
    for t in range(20):
        rng = np.random.default_rng([5, t])
        x = rng.standard_t(1, size=(1400, 1))
        rejections += gof_test(x, StandardNormalTarget(1), config=WildBootstrapConfig(0.5, 300, t)).reject
    assert rejections >= 19


def test_iid_signs_understate_null_spread_on_correlated_samples():
    # an AR(1) sample with strong serial correlation from the exact target:
    # i.i.d. signs drop the off-diagonal mass, so B_n sits below V_n and the
    # test over-rejects, while slowly flipping signs keep p-values moderate
    target, kernel = StandardNormalTarget(1), RBFKernel(1.0)
    p_iid, p_slow = [], []
    for s in range(10):
        rng = np.random.default_rng(s)
        x = np.empty(600)
        x[0] = rng.normal()
        for t in range(1, 600):
            x[t] = 0.95 * x[t - 1] + np.sqrt(1 - 0.95**2) * rng.normal()
        p_iid.append(gof_test(x[:, None], target, kernel, WildBootstrapConfig(0.5, 300, s)).p_value)
        p_slow.append(gof_test(x[:, None], target, kernel, WildBootstrapConfig(0.02, 300, s)).p_value)
    assert np.median(p_iid) < 0.05 < np.median(p_slow)
