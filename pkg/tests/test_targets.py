import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksdtest.errors import ConfigError, DomainError, InputError
from ksdtest.targets import (
    CallableTarget,
    MixturePosteriorTarget,
    StandardizedResidualTarget,
    StandardNormalTarget,
    StudentTTarget,
    grad_log_density,
    log_density_unnorm,
    make_target,
)

from conftest import central_difference, rel_error

FIVE_POINTS = [-1.5, 0.3, 2.2, 0.9, -0.4]


def mixture_log_posterior_oracle(theta, data):
    # written directly from the model, without log-sum-exp tricks
    t1, t2 = theta
    lp = -0.5 * t1**2 / 10.0 - 0.5 * t2**2 / 1.0
    for x in data:
        a = math.exp(-((x - t1) ** 2) / 8.0) / math.sqrt(8.0 * math.pi)
        b = math.exp(-((x - t1 - t2) ** 2) / 8.0) / math.sqrt(8.0 * math.pi)
        lp += math.log(0.5 * a + 0.5 * b)
    return lp


def test_standard_normal_gradient_examples():
    t = StandardNormalTarget(2)
    np.testing.assert_array_equal(grad_log_density(t, [0.0, 0.0]), [0.0, 0.0])
    np.testing.assert_array_equal(grad_log_density(t, [1.0, -2.0]), [-1.0, 2.0])


def test_student_t_gradient_at_one():
    t = StudentTTarget(1.0)
    fd = central_difference(lambda x: -math.log(1 + x[0] ** 2), [1.0])
    assert fd[0] == pytest.approx(-1.0, rel=1e-9)
    assert grad_log_density(t, [1.0])[0] == pytest.approx(fd[0], rel=1e-9)


def test_mixture_posterior_gradient_matches_oracle():
    t = MixturePosteriorTarget(FIVE_POINTS)
    theta = np.array([0.0, 1.0])
    fd = central_difference(lambda th: mixture_log_posterior_oracle(th, FIVE_POINTS), theta)
    assert rel_error(grad_log_density(t, theta), fd) < 1e-7


def test_mixture_log_density_matches_oracle_up_to_constant(rng):
    t = MixturePosteriorTarget(FIVE_POINTS)
    pts = rng.normal(size=(10, 2)) * 2
    ours = np.array([log_density_unnorm(t, p) for p in pts])
    oracle = np.array([mixture_log_posterior_oracle(p, FIVE_POINTS) for p in pts])
    diffs = ours - oracle
    np.testing.assert_allclose(diffs, diffs[0], atol=1e-10)


def test_log_density_differences():
    assert log_density_unnorm(StandardNormalTarget(1), [0.0]) - log_density_unnorm(
        StandardNormalTarget(1), [1.0]
    ) == pytest.approx(0.5)
    t = StudentTTarget(1.0)
    assert log_density_unnorm(t, [0.0]) - log_density_unnorm(t, [1.0]) == pytest.approx(math.log(2))
    for target in (StandardNormalTarget(3), StudentTTarget(4, dim=3)):
        x = np.array([0.1, -0.7, 2.0])
        assert log_density_unnorm(target, x) - log_density_unnorm(target, x) == 0


BUILTINS = [
    StandardNormalTarget(1),
    StandardNormalTarget(4),
    StudentTTarget(1.0),
    StudentTTarget(5.0, dim=3),
    StudentTTarget(np.inf, dim=2),
    MixturePosteriorTarget.simulate(400, rng=np.random.default_rng(3)),
]


@pytest.mark.parametrize("target", BUILTINS, ids=lambda t: f"{type(t).__name__}-{t.dim}")
def test_gradient_matches_finite_differences(target):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(size=target.dim) * 1.5
        fd = central_difference(lambda z: float(target.log_density(z)), x)
        worst = max(worst, rel_error(target.grad_log_density(x), fd))
    assert worst < 1e-5


def test_batched_evaluation_matches_pointwise(rng):
    t = MixturePosteriorTarget(FIVE_POINTS)
    X = rng.normal(size=(7, 2))
    G = t.grad_log_density(X)
    L = t.log_density(X)
    for i in range(7):
        np.testing.assert_allclose(G[i], t.grad_log_density(X[i]), rtol=1e-13)
        assert L[i] == pytest.approx(t.log_density(X[i]), rel=1e-13)


def test_gradient_invariant_to_normalisation_constant(rng):
    base = StudentTTarget(3.0, dim=2)
    shifted = CallableTarget(
        2,
        lambda x: base.log_density(x) + 123.456,
        base.grad_log_density,
    )
    x = rng.normal(size=2)
    fd_base = central_difference(lambda z: float(base.log_density(z)), x)
    fd_shift = central_difference(lambda z: float(shifted.log_density(z)), x)
    np.testing.assert_allclose(fd_base, fd_shift, rtol=1e-6)
    np.testing.assert_array_equal(base.grad_log_density(x), shifted.grad_log_density(x))


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-50, 50), nu=st.floats(0.5, 100))
def test_student_t_closed_form(x, nu):
    g = StudentTTarget(nu).grad_log_density([x])[0]
    assert g == pytest.approx(-(nu + 1) * x / (nu + x * x), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("x", [-3.0, -0.5, 0.0, 1.0, 2.5])
def test_student_t_approaches_normal(x):
    gaps = [abs(StudentTTarget(nu).grad_log_density([x])[0] + x) for nu in (10.0, 1e3, 1e6)]
    assert gaps[0] >= gaps[1] >= gaps[2]
    assert gaps[2] < 1e-4


def test_mixture_gradient_stable_far_from_data():
    t = MixturePosteriorTarget(FIVE_POINTS)
    g = t.grad_log_density([200.0, -300.0])
    assert np.all(np.isfinite(g))


def test_dimension_mismatch_is_input_error():
    with pytest.raises(InputError):
        StandardNormalTarget(2).grad_log_density([1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        StandardNormalTarget(2).log_density([1.0])


def test_non_finite_gradient_is_domain_error():
    t = CallableTarget(1, lambda x: -np.log(np.abs(x[..., 0])), lambda x: -1.0 / x)
    with np.errstate(divide="ignore"), pytest.raises(DomainError):
        t.grad_log_density([0.0])


def test_invalid_parameters():
    with pytest.raises(ConfigError):
        StudentTTarget(0)
    with pytest.raises(ConfigError):
        StandardizedResidualTarget([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ConfigError):
        MixturePosteriorTarget([])


def test_standardized_residual_pipeline_is_bitwise_identical(rng):
    mu = rng.normal(size=41)
    sd = rng.uniform(0.5, 2.0, size=41)
    y = mu + sd * rng.normal(size=41)
    target = StandardizedResidualTarget(mu, sd)
    via_target = target.prepare_samples(y)
    by_hand = ((y - mu) / sd)[:, None]
    assert np.array_equal(via_target, by_hand)
    assert np.array_equal(target.grad_log_density(via_target), StandardNormalTarget(1).grad_log_density(by_hand))


def test_make_target():
    assert isinstance(make_target("normal", dim=3), StandardNormalTarget)
    t = make_target("student_t", dof=5)
    assert isinstance(t, StudentTTarget) and t.dof == 5
    m = make_target("mixture-posterior", data=FIVE_POINTS)
    assert m.n_likelihood_terms == 5
    with pytest.raises(ConfigError):
        make_target("cauchy")
    with pytest.raises(ConfigError):
        make_target("normal", dim=2, mean=1.0)
    with pytest.raises(ConfigError):
        make_target("student-t")
