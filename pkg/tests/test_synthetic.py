import numpy as np
import pytest
from scipy import stats

from exposuredrift.services.synthetic import SynthSpec, dirichlet_draw, generate, ground_truth
from exposuredrift.services.transform import node_entropy


def test_two_component_uniform_draw_is_uniform():
    rng = np.random.default_rng(1)
    first = np.array([dirichlet_draw([1.0, 1.0], rng)[0] for _ in range(2000)])
    assert stats.kstest(first, "uniform").pvalue > 1e-3


def test_symmetric_beta_moments():
    rng = np.random.default_rng(2)
    first = np.array([dirichlet_draw([5.0, 5.0], rng)[0] for _ in range(20000)])
    assert first.mean() == pytest.approx(0.5, abs=0.01)
    assert first.var() == pytest.approx(25.0 / (100.0 * 11.0), rel=0.05)


def test_draws_are_positive_and_sum_to_one():
    rng = np.random.default_rng(3)
    for alphas in ([0.01] * 6, [1.0] * 6, [1000.0] * 6):
        for _ in range(50):
            draw = dirichlet_draw(alphas, rng)
            assert np.all(draw > 0)
            assert draw.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        dirichlet_draw([1.0, 0.0], rng)


def test_concentration_regimes():
    rng = np.random.default_rng(4)
    sparse = np.array([dirichlet_draw([0.01] * 5, rng).max() for _ in range(200)])
    flat = np.array([dirichlet_draw([1000.0] * 5, rng).max() for _ in range(200)])
    assert np.median(sparse) > 0.99
    assert np.all(flat < 0.25)


def test_ground_truth_respects_fixed_values():
    spec = SynthSpec(n_nodes=4, n_periods=3, mu_start=1.0, mu_slope=0.5, theta=[0.1, 0.2, 0.3, 0.4], seed=8)
    truth = ground_truth(spec)
    np.testing.assert_allclose(truth.mu, [1.0, 1.5, 2.0])
    np.testing.assert_array_equal(truth.theta, [0.1, 0.2, 0.3, 0.4])
    assert truth.gamma_sum() == pytest.approx(0.0, abs=1e-12)
    explicit = ground_truth(SynthSpec(n_nodes=3, n_periods=1, gamma=[1.0, 2.0, 3.0], seed=8))
    np.testing.assert_allclose(explicit.gamma, [-1.0, 0.0, 1.0], atol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError, match="N >= 3"):
        SynthSpec(n_nodes=2, n_periods=1)
    with pytest.raises(ValueError, match="mu must have length 2"):
        SynthSpec(n_nodes=3, n_periods=2, mu=[0.0])
    with pytest.raises(ValueError):
        SynthSpec(n_nodes=3, n_periods=2, tau_eta=0.0)
    assert SynthSpec(n_nodes=3, n_periods=1).seed is not None


def test_generated_network_is_relative_and_reproducible():
    spec = SynthSpec(n_nodes=5, n_periods=3, seed=11)
    net, truth = generate(spec)
    again, _ = generate(SynthSpec(n_nodes=5, n_periods=3, seed=11))
    pooled, _ = generate(SynthSpec(n_nodes=5, n_periods=3, seed=11), threads=4)
    assert net.provenance == "Y"
    assert not net.mask.any()
    np.testing.assert_allclose(net.matrices.sum(axis=2), 1.0, atol=1e-12)
    assert np.all(net.matrices[:, np.arange(5), np.arange(5)] == 0.0)
    np.testing.assert_array_equal(net.matrices, again.matrices)
    np.testing.assert_array_equal(net.matrices, pooled.matrices)
    assert truth.n_periods == 3


def test_rising_drift_raises_row_entropy():
    spec = SynthSpec(n_nodes=8, n_periods=4, mu_start=-2.0, mu_slope=1.5, tau_theta=4.0, tau_gamma=4.0, seed=12)
    net, _ = generate(spec)
    mean_entropy = [
        np.mean([node_entropy(np.delete(net.matrices[t, i], i)) for i in range(8)]) for t in range(4)
    ]
    assert np.all(np.diff(mean_entropy) > 0)
