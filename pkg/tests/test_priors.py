import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feasprox import (GaussianPrior, GmmPrior, LinearAutoencoder, Rng, build_operator,
                      compose_decoder, latent_prior, squared_exponential_cov)
from feasprox.operators import OperatorSpec, gaussian_kernel


def test_point_mass_ignores_observation():
    prior = GaussianPrior([0.3, -0.2], np.zeros((2, 2)))
    assert np.allclose(prior.denoise([5.0, 7.0], 2.0), [0.3, -0.2])


def test_scalar_shrinkage():
    assert np.allclose(GaussianPrior([0.0], [[1.0]]).denoise([2.0], 1.0), [1.0])


def test_small_sigma_recovers_observation():
    prior = GaussianPrior(np.zeros(4), np.eye(4))
    xt = np.array([0.5, -1.0, 2.0, 0.1])
    assert np.linalg.norm(prior.denoise(xt, 1e-4) - xt) <= 1e-6


def test_denoise_matches_direct_solve():
    C = squared_exponential_cov(16, 2.0)
    prior = GaussianPrior(np.full(16, 0.1), C)
    xt = Rng(3).normal(16)
    direct = prior.mean + C @ np.linalg.solve(C + 0.49 * np.eye(16), xt - prior.mean)
    assert np.allclose(prior.denoise(xt, 0.7), direct, atol=1e-12)
    post = C - C @ np.linalg.solve(C + 0.49 * np.eye(16), C)
    assert np.allclose(prior.posterior_cov(0.7), post, atol=1e-12)


def test_gaussian_prior_rejects_bad_covariance():
    with pytest.raises(ValueError):
        GaussianPrior([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        GaussianPrior([0.0, 0.0], -np.eye(2))
    with pytest.raises(ValueError):
        GaussianPrior([0.0], [[1.0]]).denoise([0.0], 0.0)


def test_single_component_mixture_equals_gaussian():
    g = GaussianPrior([0.2, 0.1], [[1.0, 0.3], [0.3, 0.5]])
    mix = GmmPrior([1.0], [g])
    xt = np.array([1.5, -0.4])
    assert np.allclose(mix.denoise(xt, 0.6), g.denoise(xt, 0.6))


def test_symmetric_mixture_midpoint():
    mix = GmmPrior([0.5, 0.5], [([-1.0], [[0.3]]), ([1.0], [[0.3]])])
    assert np.allclose(mix.denoise([0.0], 0.9), [0.0], atol=1e-15)


def _quadrature_posterior_mean(w, mu, v, sigma, xt, points=100_001):
    x0 = np.linspace(-12.0, 12.0, points)
    prior = sum(wj * np.exp(-0.5 * (x0 - mj) ** 2 / vj) / np.sqrt(2 * np.pi * vj)
                for wj, mj, vj in zip(w, mu, v))
    joint = prior * np.exp(-0.5 * (xt - x0) ** 2 / sigma ** 2)
    return np.trapezoid(x0 * joint, x0) / np.trapezoid(joint, x0)


def test_mixture_matches_quadrature():
    w, mu, v = [0.3, 0.7], [-1.0, 1.5], [0.25, 0.5]
    mix = GmmPrior(w, [([m], [[s]]) for m, s in zip(mu, v)])
    got = mix.denoise([0.4], 0.8)[0]
    assert abs(got - _quadrature_posterior_mean(w, mu, v, 0.8, 0.4)) <= 1e-6
    # frozen from the quadrature above
    assert abs(got - 0.6680189167187894) <= 1e-6


def test_far_observation_selects_nearest_component():
    near = GaussianPrior([1.0], [[1e-6]])
    mix = GmmPrior([0.5, 0.5], [([-1.0], [[1e-6]]), near])
    assert np.array_equal(mix.responsibilities([1e5], 1e-3), [0.0, 1.0])
    assert np.allclose(mix.denoise([1e5], 1e-3), near.denoise([1e5], 1e-3))


def test_mixture_rejects_bad_weights():
    with pytest.raises(ValueError):
        GmmPrior([0.4, 0.4], [([0.0], [[1.0]]), ([1.0], [[1.0]])])
    with pytest.raises(ValueError):
        GmmPrior([1.0], [([0.0], [[1.0]]), ([1.0], [[1.0]])])


def test_identity_autoencoder_round_trip():
    ae = LinearAutoencoder.identity(3)
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(ae.decode(ae.encode(x)), x)
    assert np.array_equal(ae.jvp(x, x), x) and np.array_equal(ae.vjp(x, x), x)


def test_decode_zero_is_offset():
    c = np.array([0.1, 0.2, 0.3, 0.4])
    ae = LinearAutoencoder.random(4, 2, Rng(1), offset=c)
    assert np.allclose(ae.decode(np.zeros(2)), c)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 20), st.data())
def test_random_autoencoder_latent_round_trip(seed, n, data):
    k = data.draw(st.integers(1, n))
    rng = Rng(seed)
    ae = LinearAutoencoder.random(n, k, rng, offset=rng.normal(n))
    z = rng.normal(k)
    assert np.max(np.abs(ae.encode(ae.decode(z)) - z)) <= 1e-12
    x = ae.decode(z)
    assert np.allclose(ae.decode(ae.encode(x)), x, atol=1e-12)
    g, r = rng.normal(k), rng.normal(n)
    assert np.isclose(ae.jvp(z, g) @ r, g @ ae.vjp(z, r), rtol=1e-12, atol=1e-12)


def test_composed_duality_with_blur():
    n, k = 24, 7
    rng = Rng(11)
    op = build_operator(OperatorSpec("blur", n, {"kernel": gaussian_kernel(1.5, 7)}))
    comp = compose_decoder(op, LinearAutoencoder.random(n, k, rng, offset=rng.normal(n)))
    z, g, r = rng.normal(k), rng.normal(k), rng.normal(n)
    assert abs(comp.jvp(z, g) @ r - g @ comp.vjp(z, r)) <= 1e-10


def test_autoencoder_validation():
    with pytest.raises(ValueError):
        LinearAutoencoder(np.ones((3, 2)))
    ae = LinearAutoencoder.identity(3)
    with pytest.raises(ValueError):
        ae.encode(np.zeros(2))
    with pytest.raises(ValueError):
        ae.decode(np.zeros(4))


def test_latent_prior_is_pushforward():
    n, k = 10, 4
    prior = GaussianPrior(np.full(n, 0.2), squared_exponential_cov(n, 1.5))
    ae = LinearAutoencoder.random(n, k, Rng(2), offset=np.full(n, 0.05))
    lat = latent_prior(prior, ae)
    assert np.allclose(lat.mean, ae.encode(prior.mean))
    assert np.allclose(lat.cov, ae.W.T @ prior.cov @ ae.W)


def test_sample_moments():
    prior = GaussianPrior([1.0, -1.0], [[0.5, 0.2], [0.2, 0.3]])
    xs = prior.sample(Rng(4), 20000)
    assert np.allclose(xs.mean(axis=0), prior.mean, atol=0.02)
    assert np.allclose(np.cov(xs.T), prior.cov, atol=0.02)
