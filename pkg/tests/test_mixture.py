"""RTBM mixture densities."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from rtbm import core, mixture
from rtbm.core import Phase, RtbmParams
from rtbm.errors import InvalidParams, LengthMismatch, MixedVisibleDims
from rtbm.mixture import MixtureModel

from conftest import rel_err

seeds = st.integers(0, 2**32 - 1)


def gaussian_component(mean, var=1.0):
    t = 1.0 / var
    return RtbmParams([[t]], [[1.0]], [[0.0]], [-t * mean], [0.0])


def concentrated(p, half_width=30.0):
    mean, second = core.moments(p)
    sd = np.sqrt(np.diag(second) - mean**2)
    return bool(np.all(np.abs(mean) + 10 * sd < half_width))


def test_singleton_mixture_equals_component():
    p = core.init_random(1, 2, seed=3).replace(b_v=[0.3], b_h=[0.1, -0.4])
    m = MixtureModel((p,), [5.7])
    v = np.linspace(-3, 3, 9)
    assert np.array_equal(mixture.mixture_density(m, v).log_p, core.log_density(p, v))


@given(seeds, st.floats(-50, 50))
def test_shift_invariance_of_weights(seed, c):
    m = mixture.random_mixture(3, 1, 1, seed=seed)
    m = MixtureModel(m.components, np.random.default_rng(seed).normal(size=3))
    shifted = MixtureModel(m.components, m.omegas + c)
    v = np.linspace(-2, 2, 5)
    assert np.allclose(mixture.mixture_log_density(m, v), mixture.mixture_log_density(shifted, v),
                       rtol=0, atol=1e-12)


def test_two_gaussians():
    m = MixtureModel((gaussian_component(-2.0), gaussian_component(2.0)), [0.0, 0.0])
    expected = 0.5 * (stats.norm(-2, 1).pdf(0.0) + stats.norm(2, 1).pdf(0.0))
    assert mixture.mixture_density(m, [0.0]).p == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("phase", [Phase.I, Phase.II])
def test_mixture_normalised(n, phase):
    # oracle validity range: every component's mass must sit well inside [-30, 30]
    for seed in range(10 + n, 200):
        m = mixture.random_mixture(n, 1, 2, seed=seed, phase=phase)
        comps = tuple(c.replace(b_v=[0.5 * i]) for i, c in enumerate(m.components))
        if all(concentrated(c) for c in comps):
            break
    else:
        pytest.fail("no concentrated mixture found")
    m = MixtureModel(comps, np.arange(n, dtype=float) * 0.3)
    total = integrate.quad(lambda v: mixture.mixture_density(m, v).p, -30, 30, limit=400, epsabs=1e-13)[0]
    assert abs(total - 1) < 1e-6


def test_mixture_non_negative():
    m = mixture.random_mixture(3, 2, 1, seed=2, phase=Phase.II)
    v = np.random.default_rng(0).uniform(-8, 8, (500, 2))
    assert np.all(mixture.mixture_density(m, v).p >= 0)


def test_weights_sum_to_one():
    m = MixtureModel(mixture.random_mixture(4, 1, 1).components, [1.0, -2.0, 0.5, 3.0])
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_moments_are_weighted():
    m = MixtureModel((gaussian_component(-1.0, 0.5), gaussian_component(3.0, 2.0)), [0.0, np.log(3.0)])
    mean, second = mixture.mixture_moments(m)
    assert mean[0] == pytest.approx(0.25 * -1 + 0.75 * 3)
    assert second[0, 0] == pytest.approx(0.25 * 1.5 + 0.75 * 11.0)


@given(seeds, st.integers(1, 3))
def test_vector_round_trip(seed, n):
    m = mixture.random_mixture(n, 2, 2, seed=seed)
    vec = mixture.mixture_param_vector(m)
    assert vec.shape == (n * core.n_free_params(2, 2) + n,)
    assert mixture.mixture_from_vector(vec, m) == m


def test_vector_locality():
    m = mixture.random_mixture(2, 1, 1, seed=1)
    vec = mixture.mixture_param_vector(m)
    k = core.n_free_params(1, 1) + 1  # b_h of the second component
    vec[k] += 0.25
    m2 = mixture.mixture_from_vector(vec, m)
    assert m2.components[0] == m.components[0]
    assert np.array_equal(m2.omegas, m.omegas)
    assert m2.components[1].b_h[0] == m.components[1].b_h[0] + 0.25
    assert m2.components[1].replace(b_h=m.components[1].b_h) == m.components[1]


def test_vector_length_checked():
    m = mixture.random_mixture(2, 1, 1)
    with pytest.raises(LengthMismatch):
        mixture.mixture_from_vector(np.zeros(3), m)


def test_construction_errors():
    a = core.init_random(1, 1)
    b = core.init_random(2, 1)
    with pytest.raises(MixedVisibleDims):
        MixtureModel((a, b), [0.0, 0.0])
    with pytest.raises(LengthMismatch):
        MixtureModel((a,), [0.0, 1.0])
    with pytest.raises(InvalidParams):
        MixtureModel((), [])


def test_dict_round_trip():
    m = mixture.random_mixture(2, 1, 2, seed=4, phase=Phase.II)
    d = mixture.model_to_dict(m)
    assert d["kind"] == "mixture"
    assert mixture.model_from_dict(d) == m
    p = m.components[0]
    assert mixture.model_from_dict(mixture.model_to_dict(p)) == p


def test_log_likelihood_matches_density():
    m = mixture.random_mixture(2, 1, 1, seed=9)
    x = np.array([0.1, 0.5, -1.0])
    assert rel_err(mixture.log_likelihood(m, x), mixture.mixture_log_density(m, x)) < 1e-15
