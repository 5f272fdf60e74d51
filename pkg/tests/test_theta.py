"""Rescaled Riemann theta: values, derivatives and functional identities."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtbm import theta as th
from rtbm.errors import (
    DimensionMismatch,
    InvalidConfig,
    InvalidDerivative,
    NonPositiveDefiniteOmega,
    NonSymmetricOmega,
    ThetaZeroEncountered,
    TruncationOverflow,
)

from conftest import random_pd, rel_err

TWO_PI = 2 * np.pi
# theta_3 at nome exp(-pi): sum over n in [-50, 50] of exp(-pi n^2)
THETA_2PI = 1.0864348112133082

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([1, 2, 3])


def random_arg(seed, g, kind="complex"):
    """Random (z, Q) inside the naive oracle's validity range.

    Q has eigenvalues in [0.5, 10]; the real part of z keeps the lattice
    centre Q^-1 Re z within a few units of the origin, so the radius-30 box
    holds every significant term.
    """
    rng = np.random.default_rng(seed)
    q = random_pd(rng, g)
    re = q @ rng.uniform(-3, 3, g)
    im = rng.uniform(-TWO_PI, TWO_PI, g)
    if kind == "real":
        return re, q
    if kind == "imag":
        return 1j * im, q
    return re + 1j * im, q


def well_conditioned(res, limit=1e3):
    """The naive sum loses log10(abs_sum / |theta|) digits to cancellation."""
    return res.abs_sum * math.exp(res.log_scale) / abs(res.theta) < limit


# ---------------------------------------------------------------------------
# reference values


def test_theta_at_origin_matches_jacobi_constant():
    naive = th.theta_tilde_naive([0.0], [[TWO_PI]], radius=50).theta
    assert naive == pytest.approx(THETA_2PI, rel=1e-15)
    assert th.theta_tilde([0.0], [[TWO_PI]]).theta == pytest.approx(THETA_2PI, rel=1e-14)


def test_log_theta_at_origin():
    assert th.log_theta_tilde([0.0], [[TWO_PI]]) == pytest.approx(math.log(THETA_2PI), rel=1e-14)


def test_naive_converges_by_radius_ten():
    assert th.theta_tilde_naive([0.0], [[TWO_PI]], radius=10).theta == THETA_2PI


def test_naive_radius_zero_is_single_term():
    assert th.theta_tilde_naive([1.3 + 0.4j, -2.0], np.eye(2), radius=0).theta == 1.0


def test_naive_diagonal_square():
    v = th.theta_tilde_naive([0.0, 0.0], TWO_PI * np.eye(2), radius=20).theta
    assert v == pytest.approx(THETA_2PI**2, rel=1e-15)


def test_huge_argument_uses_quasi_periodic_reduction():
    z, q = 200.0, TWO_PI
    m = round(z / q)
    reduced = th.theta_tilde_naive([z - q * m], [[q]], radius=30).theta
    expected = math.log(reduced.real) + m * z - 0.5 * m * m * q
    got = th.log_theta_tilde([z], [[q]])
    assert np.isfinite(got)
    assert got == pytest.approx(expected, rel=1e-13)


def test_shift_by_two_pi_i_equals_origin(rng):
    q = random_pd(rng, 2)
    a = th.theta_tilde([0.0, 0.0], q).theta
    b = th.theta_tilde(TWO_PI * 1j * np.ones(2), q).theta
    assert rel_err(b, a) < 1e-12


def test_classical_theta_convention():
    omega = np.array([[1.1j, 0.2 + 0.3j], [0.2 + 0.3j, 0.9j]])
    z = np.array([0.13 - 0.05j, 0.4 + 0.1j])
    n = np.arange(-25, 26)
    grid = np.stack(np.meshgrid(n, n, indexing="ij"), -1).reshape(-1, 2)
    direct = np.exp(2j * np.pi * (0.5 * np.einsum("ki,ij,kj->k", grid, omega, grid) + grid @ z)).sum()
    assert rel_err(th.riemann_theta(z, omega), direct) < 1e-12


# ---------------------------------------------------------------------------
# oracle equivalence and derivatives


@given(seeds, dims, st.sampled_from(["real", "imag", "complex"]))
def test_matches_naive_oracle(seed, g, kind):
    z, q = random_arg(seed, g, kind)
    derivs = [(0,), (g - 1, 0), (0, g - 1, g - 1)]
    fast = th.theta_tilde(z, q, derivs)
    naive = th.theta_tilde_naive(z, q, derivs, radius=30)
    if not well_conditioned(fast):
        return
    assert rel_err(fast.theta, naive.theta) < 1e-10
    scale = abs(naive.theta)
    for d in derivs:
        # derivatives can vanish by symmetry; compare against the value scale
        assert abs(fast.deriv(d) - naive.derivs[d]) < 1e-10 * max(abs(naive.derivs[d]), scale)


@given(seeds, dims)
def test_first_derivative_by_finite_differences(seed, g):
    z, q = random_arg(seed, g, "complex")
    r = th.theta_tilde(z, q, [(i,) for i in range(g)])
    h = 1e-6
    for i in range(g):
        e = np.zeros(g)
        e[i] = h
        fd = (th.theta_tilde(z + e, q).theta - th.theta_tilde(z - e, q).theta) / (2 * h)
        assert abs(r.deriv((i,)) - fd) <= 1e-6 * max(abs(fd), abs(r.theta))


def test_third_order_tensor_is_symmetric(rng):
    q = random_pd(rng, 3)
    z = rng.normal(size=(4, 3))
    _, D, H, T = th.theta_ratios(z, q, 3)
    assert np.allclose(H, np.swapaxes(H, 1, 2))
    for perm in [(0, 2, 1, 3), (0, 1, 3, 2), (0, 3, 2, 1)]:
        assert np.allclose(T, T.transpose(perm))


# ---------------------------------------------------------------------------
# functional identities


@given(seeds, dims)
def test_even_symmetry(seed, g):
    z, q = random_arg(seed, g)
    a = th.theta_tilde(z, q)
    b = th.theta_tilde(-z, q)
    assert rel_err(b.theta, a.theta) < 1e-10


@given(seeds, dims)
def test_periodicity_in_imaginary_direction(seed, g):
    z, q = random_arg(seed, g)
    n = np.random.default_rng(seed).integers(-3, 4, g)
    a = th.theta_tilde(z, q)
    b = th.theta_tilde(z + TWO_PI * 1j * n, q)
    assert rel_err(b.theta, a.theta) < 1e-10


@given(seeds, dims)
def test_quasi_periodicity(seed, g):
    z, q = random_arg(seed, g)
    n = np.random.default_rng(seed + 1).integers(-2, 3, g)
    lhs = th.log_theta_tilde(z - q @ n, q) + n @ z - 0.5 * n @ q @ n
    rhs = th.log_theta_tilde(z, q)
    # compare modulo 2 pi i in the imaginary part of the complex log
    diff = lhs - rhs
    diff = diff.real + 1j * (((diff.imag + np.pi) % TWO_PI) - np.pi)
    assert abs(diff) <= 1e-8 * max(1.0, abs(rhs))


def test_quasi_periodicity_real_shift_by_one():
    q = np.array([[3.0]])
    z = np.array([0.7])
    n = np.array([1])
    lhs = th.log_theta_tilde(z - q @ n, q)
    rhs = th.log_theta_tilde(z, q) - n @ z + 0.5 * n @ q @ n
    assert lhs == pytest.approx(rhs, abs=1e-10)


@given(seeds)
def test_diagonal_factorisation(seed):
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.3, 12.0, 3)
    z = rng.uniform(-5, 5, 3) + 1j * rng.uniform(-4, 4, 3)
    joint = th.theta_tilde(z, np.diag(d)).theta
    parts = np.prod([th.theta_tilde([z[i]], [[d[i]]]).theta for i in range(3)])
    assert rel_err(joint, parts) < 1e-10


@given(seeds, st.sampled_from([1, 2, 3]))
def test_heat_equation(seed, g):
    z, q = random_arg(seed, g)
    rng = np.random.default_rng(seed)
    j, k = sorted(rng.integers(0, g, 2))
    h = 1e-5
    e = np.zeros((g, g))
    e[j, k] = e[k, j] = h
    fd = (th.theta_tilde(z, q + e).theta - th.theta_tilde(z, q - e).theta) / (2 * h)
    r = th.theta_tilde(z, q, [(j, k)])
    expected = -r.deriv((j, k)) / (2.0 if j == k else 1.0)
    assert abs(fd - expected) <= 1e-5 * max(abs(expected), abs(r.theta))


def test_phase_two_values_are_real(rng):
    for g in (1, 2, 3):
        q = random_pd(rng, g, 0.2, 20.0)
        for _ in range(10):
            r = th.theta_tilde(1j * rng.uniform(-20, 20, g), q)
            assert abs(np.imag(r.value)) <= 1e-10 * abs(r.value)
            assert np.real(r.value) > 0


def test_large_real_arguments_do_not_overflow():
    q = np.array([[2.0, 0.3], [0.3, 1.0]])
    r = th.theta_tilde([5000.0, -3000.0], q, [(0,)])
    assert np.isfinite(r.log_scale) and r.log_scale > 700
    assert np.isfinite(r.value) and np.isfinite(r.derivs[(0,)])


def test_batch_matches_pointwise(rng):
    q = random_pd(rng, 2)
    z = rng.normal(size=(6, 2)) * 3 + 1j * rng.normal(size=(6, 2))
    batch = th.theta_tilde_batch(z, q, [(1,)])
    for i in range(6):
        one = th.theta_tilde(z[i], q, [(1,)])
        assert rel_err(batch[i].theta, one.theta) < 1e-12
        assert rel_err(batch[i].deriv((1,)), one.deriv((1,))) < 1e-12


@pytest.mark.parametrize("imag", [0.0, 0.7])
@pytest.mark.parametrize("derivs", [[], [(0,), (0, 1)]])
def test_small_q_batch_with_shared_imaginary_part(imag, derivs, rng):
    # small eigenvalues route through the dual sum, whose batch path
    # shares the term moduli between rows with a common imaginary part
    q = np.array([[1.2, 0.3, -0.2], [0.3, 2.0, 0.1], [-0.2, 0.1, 3.5]])
    z = rng.normal(size=(7, 3)) * 2 + 1j * imag
    batch = th.theta_tilde_batch(z, q, derivs)
    for i in range(7):
        ref = th.theta_tilde_naive(z[i], q, derivs, radius=30)
        assert rel_err(batch[i].theta, ref.theta) < 1e-10
        for d in derivs:
            assert rel_err(batch[i].deriv(d), ref.deriv(d)) < 1e-9


# ---------------------------------------------------------------------------
# the one-dimensional fast path


@pytest.mark.parametrize("phase_two", [False, True])
@pytest.mark.parametrize("q", [0.4, 1.5, 3.0, 5.0, 9.0, 30.0])
def test_jacobi_fast_path_matches_general(q, phase_two, rng):
    y = rng.uniform(-25, 25, 40)
    u = 1j if phase_two else 1.0
    l1, l2, l3 = th.jacobi_log_derivs(y, q, phase_two)
    _, D, H, T = th.theta_ratios((u * y)[:, None], [[q]], 3)
    D, H, T = D[:, 0], H[:, 0, 0], T[:, 0, 0, 0]
    scale = 1 + np.abs(D) ** 3 + np.abs(H) ** 2
    assert np.max(np.abs(l1 - np.real(u * D))) < 1e-10
    assert np.max(np.abs(l2 - np.real(u * u * (H - D * D))) / scale) < 1e-10
    assert np.max(np.abs(l3 - np.real(u**3 * (T - 3 * H * D + 2 * D**3))) / scale) < 1e-10


def test_jacobi_rejects_non_positive_q():
    with pytest.raises(NonPositiveDefiniteOmega):
        th.jacobi_log_derivs([0.0], [0.0])


# ---------------------------------------------------------------------------
# errors


def test_rejects_non_symmetric():
    with pytest.raises(NonSymmetricOmega):
        th.theta_tilde([0, 0], [[1.0, 0.2], [0.1, 1.0]])


def test_rejects_indefinite():
    with pytest.raises(NonPositiveDefiniteOmega):
        th.theta_tilde([0, 0], [[1.0, 2.0], [2.0, 1.0]])


def test_rejects_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        th.theta_tilde([0, 0, 0], np.eye(2))
    with pytest.raises(DimensionMismatch):
        th.theta_tilde_naive([0, 0, 0], np.eye(2))


def test_rejects_bad_derivative_spec():
    with pytest.raises(InvalidDerivative):
        th.theta_tilde([0.0], [[1.0]], [(0, 0, 0, 0)])
    with pytest.raises(InvalidDerivative):
        th.theta_tilde([0.0], [[1.0]], [(1,)])


def test_truncation_cap():
    settings = th.EvalSettings(max_points=5)
    with pytest.raises(TruncationOverflow):
        th.theta_tilde([0.0, 0.0], 20.0 * np.eye(2), (), settings)


def test_naive_limits():
    with pytest.raises(InvalidConfig):
        th.theta_tilde_naive(np.zeros(5), np.eye(5), radius=1)
    with pytest.raises(InvalidConfig):
        th.theta_tilde_naive([0.0], [[1.0]], radius=51)


def test_zero_of_theta_is_reported():
    # the g = 1 zeros sit at z = Q/2 + pi i
    q = 3.0
    with pytest.raises(ThetaZeroEncountered):
        th.log_theta_tilde([q / 2 + np.pi * 1j], [[q]])
