import math

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import random_params, random_relative_network
from exposuredrift.config import Hyperparams
from exposuredrift.exceptions import DataValidationError, NumericalAbort
from exposuredrift.models import DynamicNetwork
from exposuredrift.services.model import (
    LikelihoodEvaluator,
    ModelParams,
    PreparedData,
    alpha,
    alpha_matrix,
    conjugate_tau_eta,
    conjugate_tau_gamma,
    conjugate_tau_theta,
    constrained_gamma,
    log_dirichlet_row,
    log_likelihood,
    log_posterior,
    log_prior,
    logfc_gamma,
    logfc_mu,
    logfc_theta,
    sample_tau_theta,
)


def test_alpha_combines_period_and_node_effects():
    params = ModelParams.from_free_gamma([0.0], [0.0, 0.0, 0.0], [0.0, 0.0])
    assert alpha(params, 0, 0, 1) == 1.0
    params = ModelParams.from_free_gamma([0.2], [0.3, 0.0, 0.0], [0.1, -0.1])
    assert alpha(params, 0, 0, 1) == pytest.approx(1.8221188, rel=1e-7)
    with pytest.raises(ValueError):
        alpha(params, 0, 1, 1)
    matrix = alpha_matrix(params, 0)
    assert np.all(np.diag(matrix) == 0.0)
    assert matrix[0, 1] == pytest.approx(alpha(params, 0, 0, 1))


def test_gamma_sum_to_zero_is_enforced():
    gamma = constrained_gamma([0.4, -1.3, 2.2])
    assert gamma[0] == -math.fsum([0.4, -1.3, 2.2])
    with pytest.raises(ValueError):
        ModelParams(mu=[0.0], theta=[0.0, 0.0, 0.0], gamma=[0.1, 0.0, 0.0])
    params = ModelParams.zeros(2, 3).with_gamma(2, 0.75)
    assert params.gamma.tolist() == [-0.75, 0.0, 0.75]
    with pytest.raises(ValueError):
        params.with_gamma(0, 1.0)


def test_uniform_dirichlet_density_is_log_two():
    third = 1.0 / 3.0
    assert log_dirichlet_row([third, third, 1.0 - 2 * third], [1.0, 1.0, 1.0]) == pytest.approx(
        math.log(2.0), abs=1e-12
    )
    assert log_dirichlet_row([0.5, 0.5], [2.0, 2.0]) == pytest.approx(0.405465, abs=1e-6)


def test_dirichlet_density_matches_scipy():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.uniform(0.2, 5.0, size=4)
        y = rng.dirichlet(np.ones(4))
        y = y / y.sum()
        assert log_dirichlet_row(y, a) == pytest.approx(stats.dirichlet.logpdf(y, a), rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("a", [0.5, 1.0, 3.0])
def test_two_component_density_integrates_to_one(a):
    value, _ = integrate.quad(
        lambda y: math.exp(log_dirichlet_row([y, 1.0 - y], [a, a])), 0.0, 1.0, limit=200
    )
    assert value == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("a", [(1.0, 1.0, 1.0), (2.0, 3.0, 1.5)])
def test_three_component_density_integrates_to_one(a):
    def density(y2, y1):
        y3 = 1.0 - y1 - y2
        if y3 <= 0.0:
            return 0.0
        return math.exp(log_dirichlet_row([y1, y2, y3], a))

    value, _ = integrate.dblquad(density, 0.0, 1.0, 0.0, lambda y1: 1.0 - y1, epsabs=1e-10)
    assert value == pytest.approx(1.0, abs=1e-6)


def test_dirichlet_row_rejects_bad_inputs():
    with pytest.raises(DataValidationError, match="epsilon"):
        log_dirichlet_row([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(DataValidationError, match="sum to 1"):
        log_dirichlet_row([0.3, 0.3], [1.0, 1.0])
    with pytest.raises(ValueError):
        log_dirichlet_row([0.5, 0.5], [1.0, -1.0])


def test_likelihood_of_single_active_row():
    matrices = np.zeros((1, 3, 3))
    matrices[0, 0] = [0.0, 0.25, 0.75]
    mask = np.array([[False, True, True]])
    net = DynamicNetwork(
        matrices=matrices, node_labels=(0, 1, 2), period_labels=("0",), provenance="Y", mask=mask
    )
    data = PreparedData.from_network(net)
    params = ModelParams.from_free_gamma([0.1], [0.2, -0.4, 0.3], [0.5, -0.2])
    expected = log_dirichlet_row([0.25, 0.75], [alpha(params, 0, 0, 1), alpha(params, 0, 0, 2)])
    assert log_likelihood(params, data) == pytest.approx(expected, rel=1e-12)


def test_fully_masked_network_has_zero_likelihood():
    net = DynamicNetwork(
        matrices=np.zeros((2, 3, 3)),
        node_labels=(0, 1, 2),
        period_labels=("0", "1"),
        provenance="Y",
        mask=np.ones((2, 3), dtype=bool),
    )
    data = PreparedData.from_network(net)
    params = random_params(np.random.default_rng(2), 2, 3)
    assert log_likelihood(params, data) == 0.0


def test_likelihood_matches_row_by_row_sum():
    rng = np.random.default_rng(5)
    net = random_relative_network(rng, 3, 5)
    data = PreparedData.from_network(net)
    params = random_params(rng, 3, 5)
    expected = 0.0
    for t in range(3):
        for i in range(5):
            others = [j for j in range(5) if j != i]
            expected += log_dirichlet_row(
                net.matrices[t, i, others], [alpha(params, t, i, j) for j in others]
            )
    assert log_likelihood(params, data) == pytest.approx(expected, rel=1e-10)


def test_model_data_requires_relative_network_with_three_nodes(small_network):
    with pytest.raises(DataValidationError, match="'Y'"):
        PreparedData.from_network(small_network.with_matrices(small_network.matrices, "X"))
    two = DynamicNetwork(
        matrices=np.array([[[0.0, 1.0], [1.0, 0.0]]]),
        node_labels=(0, 1),
        period_labels=("0",),
        provenance="Y",
    )
    with pytest.raises(DataValidationError, match="N must exceed 2"):
        PreparedData.from_network(two)


@pytest.mark.parametrize("kind", ["mu", "theta", "gamma"])
def test_full_conditionals_track_posterior_differences(kind, hyper):
    rng = np.random.default_rng(17)
    logfc = {"mu": logfc_mu, "theta": logfc_theta, "gamma": logfc_gamma}[kind]
    checked = 0
    for n_periods in range(1, 5):
        for n_nodes in range(3, 7):
            data = PreparedData.from_network(random_relative_network(rng, n_periods, n_nodes))
            low, high = {"mu": (0, n_periods), "theta": (0, n_nodes), "gamma": (1, n_nodes)}[kind]
            for _ in range(63):
                params = random_params(rng, n_periods, n_nodes)
                index = int(rng.integers(low, high))
                proposal = float(getattr(params, kind)[index] + rng.normal(0.0, 0.7))
                moved = getattr(params, f"with_{kind}")(index, proposal)
                current = float(getattr(params, kind)[index])
                difference = logfc(params, data, hyper, index, proposal) - logfc(
                    params, data, hyper, index, current
                )
                expected = log_posterior(moved, data, hyper) - log_posterior(params, data, hyper)
                assert difference == pytest.approx(expected, abs=1e-8)
                checked += 1
    assert checked >= 1000


def test_full_conditional_rejects_bad_indices(small_data, hyper):
    params = ModelParams.zeros(small_data.n_periods, small_data.n_nodes)
    with pytest.raises(IndexError):
        logfc_mu(params, small_data, hyper, small_data.n_periods, 0.0)
    with pytest.raises(IndexError):
        logfc_gamma(params, small_data, hyper, 0, 0.0)


def test_prior_shift_for_theta_coordinate(hyper):
    params = random_params(np.random.default_rng(8), 2, 4)
    moved = params.with_theta(2, float(params.theta[2]) + 0.5)
    delta = -0.5 * params.tau_theta * (moved.theta[2] ** 2 - params.theta[2] ** 2)
    assert log_prior(moved, hyper) - log_prior(params, hyper) == pytest.approx(delta, abs=1e-12)


def test_likelihood_is_invariant_under_location_shear():
    rng = np.random.default_rng(21)
    data = PreparedData.from_network(random_relative_network(rng, 3, 4))
    params = random_params(rng, 3, 4)
    sheared = ModelParams(
        mu=params.mu + 0.7,
        theta=params.theta - 0.7,
        gamma=params.gamma,
    )
    assert log_likelihood(sheared, data) == pytest.approx(log_likelihood(params, data), rel=1e-10)


def test_node_effect_shear_is_removed_by_the_gamma_constraint():
    rng = np.random.default_rng(22)
    net = random_relative_network(rng, 2, 5)
    data = PreparedData.from_network(net)
    params = random_params(rng, 2, 5)
    shift = 0.9
    theta, gamma = params.theta + shift, params.gamma - shift
    for t in range(2):
        sheared = np.exp(params.mu[t] + theta[:, None] + gamma[None, :])
        np.fill_diagonal(sheared, 0.0)
        np.testing.assert_allclose(sheared, alpha_matrix(params, t), rtol=1e-12)
    # the sheared likelihood, row by row, matches the constrained one
    total = 0.0
    for t in range(2):
        for i in range(5):
            keep = np.arange(5) != i
            a = np.exp(params.mu[t] + theta[i] + gamma[keep])
            total += log_dirichlet_row(net.matrices[t, i, keep], a)
    assert total == pytest.approx(log_likelihood(params, data), rel=1e-10)
    # the shear leaves the constraint surface, so it is not a parameter state
    with pytest.raises(ValueError, match="gamma\\[0\\]"):
        ModelParams(mu=params.mu, theta=theta, gamma=gamma)
    rebuilt = constrained_gamma(gamma[1:])
    assert rebuilt[0] == -math.fsum(rebuilt[1:])
    assert rebuilt[0] == pytest.approx(params.gamma[0] + 4 * shift, abs=1e-12)


def test_likelihood_is_symmetric_under_node_permutation():
    rng = np.random.default_rng(23)
    net = random_relative_network(rng, 2, 5)
    params = random_params(rng, 2, 5)
    perm = [3, 0, 4, 1, 2]
    moved = net.relabel(perm)
    permuted_gamma = params.gamma[perm]
    permuted = ModelParams(
        mu=params.mu,
        theta=params.theta[perm],
        gamma=constrained_gamma(permuted_gamma[1:]),
    )
    assert log_likelihood(permuted, PreparedData.from_network(moved)) == pytest.approx(
        log_likelihood(params, PreparedData.from_network(net)), rel=1e-10
    )


def test_evaluator_is_thread_count_invariant():
    rng = np.random.default_rng(29)
    data = PreparedData.from_network(random_relative_network(rng, 6, 5))
    params = random_params(rng, 6, 5)
    with LikelihoodEvaluator(data, threads=1) as serial, LikelihoodEvaluator(data, threads=4) as pooled:
        assert log_likelihood(params, data, pooled) == log_likelihood(params, data, serial)
        np.testing.assert_array_equal(
            pooled.period_terms(params.mu, params.theta, params.gamma),
            serial.period_terms(params.mu, params.theta, params.gamma),
        )


def test_overflowing_state_raises_numerical_abort(small_data):
    params = ModelParams.from_free_gamma(
        np.full(small_data.n_periods, 1000.0), np.zeros(small_data.n_nodes), np.zeros(small_data.n_nodes - 1)
    )
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NumericalAbort):
            log_likelihood(params, small_data)


def test_conjugate_parameters():
    hyper = Hyperparams()
    params = ModelParams.zeros(16, 3)
    shape, rate = conjugate_tau_eta(params, hyper)
    assert shape == pytest.approx(7.51)
    assert rate == pytest.approx(0.01)
    params = ModelParams(mu=[0.0], theta=np.full(100, math.sqrt(0.02)), gamma=np.zeros(100))
    shape, rate = conjugate_tau_theta(params, hyper)
    assert shape == pytest.approx(50.01)
    assert rate == pytest.approx(1.01)


def test_conjugate_parameters_for_random_states():
    rng = np.random.default_rng(37)
    hyper = Hyperparams(a_eta=0.5, b_eta=2.0, a_theta=1.5, b_theta=0.25, a_gamma=3.0, b_gamma=1.0)
    for _ in range(20):
        params = random_params(rng, 5, 6)
        shape, rate = conjugate_tau_eta(params, hyper)
        assert shape == 0.5 + 0.5 * 4
        assert rate == pytest.approx(2.0 + 0.5 * np.sum(np.diff(params.mu) ** 2), rel=1e-15)
        shape, rate = conjugate_tau_theta(params, hyper)
        assert shape == 1.5 + 0.5 * 6
        assert rate == pytest.approx(0.25 + 0.5 * np.sum(params.theta**2), rel=1e-15)
        shape, rate = conjugate_tau_gamma(params, hyper)
        assert shape == 3.0 + 0.5 * 5
        assert rate == pytest.approx(1.0 + 0.5 * np.sum(params.gamma[1:] ** 2), rel=1e-15)


def test_conjugate_draws_match_gamma_moments():
    hyper = Hyperparams()
    params = ModelParams(mu=[0.0], theta=np.full(100, math.sqrt(0.02)), gamma=np.zeros(100))
    shape, rate = conjugate_tau_theta(params, hyper)
    rng = np.random.default_rng(31)
    draws = np.array([sample_tau_theta(params, hyper, rng) for _ in range(100_000)])
    mean, variance = shape / rate, shape / rate**2
    mean_se = math.sqrt(variance / draws.size)
    variance_se = float(np.std((draws - draws.mean()) ** 2)) / math.sqrt(draws.size)
    assert abs(draws.mean() - mean) < 3 * mean_se
    assert abs(draws.var() - variance) < 3 * variance_se
