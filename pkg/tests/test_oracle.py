import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contattn import densities as dn
from contattn.attention import RBFBasis
from contattn.densities import CanonicalScore1D, CanonicalScore2D
from contattn.errors import InfiniteSupport, TooLarge
from contattn.oracle import (
    FiniteDiffSpec,
    attention_forward_quadrature,
    attention_jacobian_quadrature,
    expectation_quadrature,
    fd_attention_jacobian,
    finite_diff_jacobian,
    generalized_cov_quadrature,
    simplex_projection_bruteforce,
)

FAMILIES = [
    dn.make_gaussian_1d(0.3, 0.7),
    dn.make_truncated_parabola(-0.2, 0.5),
    dn.make_triangular(0.1, 2.0),
    dn.make_location_scale(dn.LocationScaleG(*dn.NAMED_GENERATORS["quartic"]), 0.4, 0.8),
    dn.make_gaussian_2d([0.1, 0.2], [[0.5, 0.1], [0.1, 0.3]]),
    dn.make_truncated_paraboloid([0.1, 0.2], [[0.5, 0.1], [0.1, 0.3]]),
]


@pytest.mark.parametrize("p", FAMILIES, ids=lambda p: f"{p.family.value}-{p.dim}d")
def test_unit_expectation(p):
    one = (lambda t: 1.0) if p.dim == 1 else (lambda T: np.ones(T.shape[:-1]))
    assert abs(expectation_quadrature(p, one) - 1.0) <= 1e-7


@pytest.mark.parametrize("make", [dn.make_gaussian_1d, dn.make_truncated_parabola, dn.make_triangular])
def test_odd_moment_vanishes(make):
    p = make(0.0, 0.6)
    assert abs(expectation_quadrature(p, lambda t: t**3)) <= 1e-12


def test_triangular_second_moment():
    p = dn.make_triangular(0.0, 1.0)
    assert abs(expectation_quadrature(p, lambda t: t * t) - 1 / 6) <= 1e-12


def test_escort_variance_beta_one():
    p = dn.make_gaussian_1d(0.0, 1.0)
    c = generalized_cov_quadrature(p, lambda t: t, lambda t: t, 1.0)
    assert c.shape == (1, 1)
    # ||p||_1 = 1, so this is the plain variance
    assert abs(c[0, 0] - 1.0) <= 1e-9


def test_uniform_covariance_beta_zero():
    p = dn.make_truncated_parabola(0.0, 1.0)
    a = p.support[1]
    c = generalized_cov_quadrature(p, lambda t: t, lambda t: t, 0.0)
    assert abs(c[0, 0] - (2 * a) ** 3 / 12) <= 1e-10


def test_beta_zero_gaussian_rejected():
    with pytest.raises(InfiniteSupport):
        generalized_cov_quadrature(dn.make_gaussian_1d(0, 1), lambda t: t, lambda t: t, 0.0)


def test_cov_2d_symmetry():
    p = FAMILIES[5]
    f = lambda T: T
    c = generalized_cov_quadrature(p, f, f, 0.0)
    assert np.allclose(c, c.T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(c) > 0)


class TestFiniteDiff:
    def test_linear(self, rng):
        A = rng.normal(size=(3, 4))
        J = finite_diff_jacobian(lambda x: A @ x, rng.normal(size=4))
        assert np.allclose(J, A, atol=1e-8)

    def test_square(self):
        J = finite_diff_jacobian(lambda x: x * x, [3.0])
        assert abs(J[0, 0] - 6.0) <= 1e-8

    def test_bad_step(self):
        with pytest.raises(ValueError):
            FiniteDiffSpec(0.0)

    def test_attention_layout_2d(self):
        s = CanonicalScore2D.from_moments([0.5, 0.5], [[0.05, 0.01], [0.01, 0.04]])
        basis = RBFBasis.grid_2d(4, 0.02)
        J = fd_attention_jacobian(lambda sc: attention_forward_quadrature(sc, basis, 1, 64), s, 1e-5)
        assert J.shape == (6, 4)
        assert np.allclose(J[3], J[4])


class TestBruteforce:
    def test_tie(self):
        assert np.allclose(simplex_projection_bruteforce([0.0, 0.0]).probs, [0.5, 0.5])

    def test_corner(self):
        assert np.allclose(simplex_projection_bruteforce([5.0, 0.0, 0.0]).probs, [1, 0, 0])

    def test_too_large(self):
        with pytest.raises(TooLarge):
            simplex_projection_bruteforce(np.zeros(21))

    def test_empty(self):
        with pytest.raises(ValueError):
            simplex_projection_bruteforce([])

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=7))
    def test_feasible_and_optimal(self, f):
        p = simplex_projection_bruteforce(f).probs
        assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-12
        rng = np.random.default_rng(len(f))
        base = np.sum((p - np.array(f)) ** 2)
        for q in rng.dirichlet(np.ones(len(f)), size=20):
            assert np.sum((q - np.array(f)) ** 2) >= base - 1e-12


def test_2d_oracle_resolution_stable():
    s = CanonicalScore2D.from_moments([0.4, 0.6], [[0.06, 0.02], [0.02, 0.05]])
    basis = RBFBasis.grid_2d(9, 0.02)
    for alpha in (1, 2):
        r1 = attention_forward_quadrature(s, basis, alpha, 128)
        r2 = attention_forward_quadrature(s, basis, alpha, 256)
        assert np.max(np.abs(r1 - r2)) <= 1e-5


def test_1d_jacobian_oracle_shape():
    s = CanonicalScore1D.from_moments(0.5, 0.04)
    J = attention_jacobian_quadrature(s, RBFBasis.linear_1d(5, 0.1), 2)
    assert J.shape == (2, 5)
    assert np.all(np.isfinite(J))
