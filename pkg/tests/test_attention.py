import math

import numpy as np
import pytest

from contattn import attention as att
from contattn import densities as dens
from contattn import oracle
from contattn.checks import random_attention_config
from contattn.errors import DegenerateCovariance, NotSPD, ToleranceNotReached

S1 = dens.CanonicalScore1D
S2 = dens.CanonicalScore2D


def basis1(centers, variances):
    c = np.atleast_1d(np.asarray(centers, dtype=float))
    v = np.broadcast_to(np.asarray(variances, dtype=float), c.shape)
    return att.RBFBasis(c, v)


def basis2(centers, covs):
    return att.RBFBasis(np.asarray(centers, dtype=float), np.asarray(covs, dtype=float))


class TestConversions:
    def test_1d(self):
        sc = att.theta_from_moments(0.0, 1.0)
        assert sc.as_vector().tolist() == [0.0, -0.5]

    def test_2d(self):
        sc = att.theta_from_moments(np.zeros(2), np.eye(2))
        assert np.array_equal(sc.theta_lin, np.zeros(2))
        assert np.array_equal(sc.theta_quad, -0.5 * np.eye(2))

    def test_roundtrip(self, rng):
        for _ in range(20):
            A = rng.normal(size=(2, 2))
            cov = A @ A.T + 0.05 * np.eye(2)
            mu = rng.normal(size=2)
            m2, c2 = att.moments_from_theta(att.theta_from_moments(mu, cov))
            assert np.allclose(m2, mu, atol=1e-12, rtol=1e-12)
            assert np.allclose(c2, cov, atol=1e-12, rtol=1e-12)

    def test_not_spd(self):
        with pytest.raises((NotSPD, ValueError)):
            att.theta_from_moments(np.zeros(2), np.array([[1.0, 3.0], [3.0, 1.0]]))


class TestMomentMatch:
    def test_two_points(self):
        mu, s2 = att.moment_match_from_discrete([0.5, 0.5], [0.0, 1.0])
        assert mu == 0.5 and s2 == 0.25

    def test_corners(self):
        locs = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        mu, cov = att.moment_match_from_discrete(np.full(4, 0.25), locs)
        assert np.allclose(mu, 0.5) and np.allclose(cov, 0.25 * np.eye(2))

    def test_point_mass(self):
        with pytest.raises(DegenerateCovariance):
            att.moment_match_from_discrete([1.0, 0.0, 0.0], [0.1, 0.2, 0.3])

    def test_collinear_2d(self):
        locs = np.array([[0, 0], [1, 1], [2, 2]], dtype=float)
        with pytest.raises(DegenerateCovariance):
            att.moment_match_from_discrete(np.full(3, 1 / 3), locs)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            att.moment_match_from_discrete([0.5, 0.5], [0.0, 0.5, 1.0])


class TestBasis:
    def test_immutable(self):
        b = att.RBFBasis.linear_1d(4, 0.1)
        with pytest.raises(ValueError):
            b.centers[0, 0] = 3.0

    def test_layouts(self):
        b = att.RBFBasis.linear_1d(5, 0.5)
        assert np.allclose(b.centers[:, 0], np.linspace(0, 1, 5))
        assert np.allclose(b.widths[:, 0, 0], 0.25)
        g = att.RBFBasis.grid_2d(9)
        assert g.dimension == 2 and len(g) == 9
        assert np.allclose(g.widths, 1e-3 * np.eye(2))
        with pytest.raises(ValueError):
            att.RBFBasis.grid_2d(8)

    def test_bad_width(self):
        with pytest.raises((NotSPD, ValueError)):
            basis2([[0, 0]], [[[1.0, 2.0], [2.0, 1.0]]])


class TestSoftmax:
    def test_1d_value(self):
        r = att.forward_softmax(S1.from_moments(0, 0.5), basis1([0.0], 0.5))
        assert abs(r[0] - 0.3989422804014327) < 1e-15
        q = oracle.attention_forward_quadrature(S1.from_moments(0, 0.5), basis1([0.0], 0.5), 1)
        assert abs(r[0] - q[0]) < 1e-12

    def test_2d_value(self):
        r = att.forward_softmax(S2.from_moments(np.zeros(2), 0.5 * np.eye(2)), basis2([[0, 0]], [0.5 * np.eye(2)]))
        assert abs(r[0] - 1 / (2 * math.pi)) < 1e-15

    def test_translation(self, rng):
        score, basis = random_attention_config(rng, 1, 2)
        shift = np.array([3.0, -1.5])
        r0 = att.forward_softmax(score, basis)
        moved = S2.from_moments(score.mu + shift, score.cov)
        r1 = att.forward_softmax(moved, att.RBFBasis(basis.centers + shift, basis.widths))
        assert np.allclose(r0, r1, rtol=1e-10, atol=0)

    def test_jacobian_symmetric_case(self):
        J = att.jacobian_softmax(S1.from_moments(0.0, 1.0), basis1([0.0], 1.0))
        assert J[0, 0] == 0.0
        # N(0;0,2) * (1/2 - 1)
        assert abs(J[1, 0] + 0.5 / math.sqrt(4 * math.pi)) < 1e-15
        assert abs(J[1, 0] + 0.14104739588693907) < 1e-15

    def test_jacobian_fd(self, rng):
        for dim in (1, 2):
            for _ in range(10):
                score, basis = random_attention_config(rng, 1, dim)
                J = att.jacobian_softmax(score, basis)
                Jf = oracle.fd_attention_jacobian(lambda s: att.forward_softmax(s, basis), score)
                assert np.abs(J - Jf).max() <= 1e-6


class TestSparsemax1D:
    def test_wide_basis(self):
        sc = S1.from_moments(0.2, 0.3)
        r = att.forward_sparsemax_1d(sc, basis1([0.2], 1e6))
        ref = 1 / math.sqrt(2 * math.pi * 1e6)
        assert abs(r[0] / ref - 1) < 1e-6

    def test_oracle(self):
        sc = S1.from_moments(0.0, 1.0)
        b = basis1([0.0], 0.1)
        assert abs(att.forward_sparsemax_1d(sc, b)[0] - oracle.attention_forward_quadrature(sc, b, 2)[0]) < 1e-10

    def test_far_basis(self):
        sc = S1.from_moments(0.0, 1.0)
        assert att.forward_sparsemax_1d(sc, basis1([100.0], 0.01))[0] < 1e-12

    def test_jacobian_symmetric_row(self):
        J = att.jacobian_sparsemax_1d(S1.from_moments(0.3, 0.5), basis1([0.3], 0.2))
        assert abs(J[0, 0]) < 1e-15

    def test_jacobian_oracle(self):
        sc = S1.from_moments(0.0, 1.0)
        b = basis1([0.5], 0.25)
        J = att.jacobian_sparsemax_1d(sc, b)
        Jq = oracle.attention_jacobian_quadrature(sc, b, 2)
        assert np.abs(J - Jq).max() < 1e-8

    def test_jacobian_fd(self, rng):
        for _ in range(10):
            score, basis = random_attention_config(rng, 2, 1)
            J = att.jacobian_sparsemax_1d(score, basis)
            Jf = oracle.fd_attention_jacobian(lambda s: att.forward_sparsemax_1d(s, basis), score)
            assert np.abs(J - Jf).max() <= 1e-5

    def test_narrow_basis_is_point_evaluation(self):
        sc = S1.from_moments(0.4, 0.05)
        p = dens.density_from_score(sc, 2)
        for c in (0.3, 0.45, 0.6):
            r = att.forward_sparsemax_1d(sc, basis1([c], 1e-6))[0]
            assert abs(r / p.pdf(c) - 1) < 1e-3
            r1 = att.forward_softmax(sc, basis1([c], 1e-6))[0]
            assert abs(r1 / dens.density_from_score(sc, 1).pdf(c) - 1) < 1e-3

    def test_tiny_support_tolerance(self):
        # support much narrower than the basis width: difference form keeps 1e-8
        sc = S1.from_moments(0.5, 1e-8)
        b = basis1([0.5, 0.52], 0.01)
        r = att.forward_sparsemax_1d(sc, b)
        q = oracle.attention_forward_quadrature(sc, b, 2)
        assert np.abs(r - q).max() < 1e-8


class TestSparsemax2D:
    def test_oracle_identity(self):
        sc = S2.from_moments(np.zeros(2), np.eye(2))
        b = basis2([[0, 0]], [0.25 * np.eye(2)])
        r = att.forward_sparsemax_2d(sc, b)
        assert abs(r[0] - oracle.attention_forward_quadrature(sc, b, 2)[0]) < 1e-6

    def test_grid_oracle_bounding_box(self):
        # the clamped bounding-box rule is coarse but must agree to its own accuracy
        from contattn import core_math as cm
        sc = S2.from_moments(np.zeros(2), np.eye(2))
        b = basis2([[0.3, -0.2]], [0.25 * np.eye(2)])
        p = dens.density_from_score(sc, 2)
        (x0, x1), (y0, y1) = p.support.bounding_box()
        q = cm.integrate_fixed_2d(
            lambda X, Y: p.pdf(np.stack([X, Y], -1)) * b.evaluate(np.stack([X, Y], -1))[..., 0],
            ((x0, x1), (y0, y1)), 256)
        assert abs(att.forward_sparsemax_2d(sc, b)[0] - q) < 1e-4

    def test_rotation_symmetry(self):
        sc = S2.from_moments(np.array([0.2, 0.1]), np.eye(2))
        Sj = np.array([[0.3, 0.1], [0.1, 0.2]])
        R = np.array([[0.0, -1.0], [1.0, 0.0]])
        r_a = att.forward_sparsemax_2d(sc, basis2([[0.2, 0.1]], [Sj]))
        r_b = att.forward_sparsemax_2d(sc, basis2([[0.2, 0.1]], [R @ Sj @ R.T]))
        assert abs(r_a[0] - r_b[0]) <= 1e-10

    def test_far_basis(self):
        sc = S2.from_moments(np.zeros(2), np.eye(2))
        assert att.forward_sparsemax_2d(sc, basis2([[50, 50]], [0.1 * np.eye(2)]))[0] < 1e-12

    def test_refinement(self, rng):
        for _ in range(5):
            score, basis = random_attention_config(rng, 2, 2)
            r64 = att.forward_sparsemax_2d(score, basis, angular_nodes=64)
            r512 = att.forward_sparsemax_2d(score, basis, angular_nodes=512)
            assert np.abs(r64 - r512).max() <= 1e-7

    def test_min_nodes(self):
        sc = S2.from_moments(np.zeros(2), np.eye(2))
        with pytest.raises(ValueError):
            att.forward_sparsemax_2d(sc, basis2([[0, 0]], [np.eye(2)]), angular_nodes=32)

    def test_self_check_raises(self):
        # a basis much narrower than the support makes 64 angular nodes insufficient
        sc = S2.from_moments(np.zeros(2), np.eye(2))
        b = basis2([[0.9, 0.4]], [1e-3 * np.eye(2)])
        with pytest.raises(ToleranceNotReached):
            att.forward_sparsemax_2d(sc, b, angular_nodes=64)
        with pytest.raises(ToleranceNotReached):
            att.jacobian_sparsemax_2d(sc, b, angular_nodes=64)
        r = att.forward_sparsemax_2d(sc, b, angular_nodes=64, check=False)
        assert abs(r[0] - oracle.attention_forward_quadrature(sc, b, 2)[0]) > 1e-4
        # the default resolution handles it
        assert abs(att.forward_sparsemax_2d(sc, b)[0] - oracle.attention_forward_quadrature(sc, b, 2)[0]) < 1e-6

    def test_jacobian_symmetric_linear_rows(self):
        sc = S2.from_moments(np.array([0.1, -0.2]), np.eye(2))
        J = att.jacobian_sparsemax_2d(sc, basis2([[0.1, -0.2]], [np.eye(2)]))
        assert np.abs(J[:2]).max() < 1e-12
        assert abs(J[3, 0] - J[4, 0]) < 1e-15

    def test_jacobian_fd(self, rng):
        for _ in range(5):
            score, basis = random_attention_config(rng, 2, 2)
            J = att.jacobian_sparsemax_2d(score, basis)
            Jf = oracle.fd_attention_jacobian(lambda s: att.forward_sparsemax_2d(s, basis), score, 1e-5)
            assert np.abs(J - Jf).max() <= 1e-4

    def test_jacobian_oracle(self, rng):
        score, basis = random_attention_config(rng, 2, 2)
        J = att.jacobian_sparsemax_2d(score, basis)
        assert np.abs(J - oracle.attention_jacobian_quadrature(score, basis, 2)).max() < 1e-5


def test_closed_forms_match_oracle_suite():
    rng = np.random.default_rng(2024)
    tol = {(1, 1): 1e-10, (1, 2): 1e-8, (2, 1): 1e-10, (2, 2): 1e-6}
    for k in range(52):
        alpha, dim = [(1, 1), (1, 2), (2, 1), (2, 2)][k % 4]
        score, basis = random_attention_config(rng, alpha, dim)
        r = att.forward(score, basis, alpha)
        assert np.all(r >= 0)
        assert np.abs(r - oracle.attention_forward_quadrature(score, basis, alpha)).max() <= tol[alpha, dim]


class TestAttend:
    def test_identity_context(self):
        b = att.RBFBasis.linear_1d(5, 0.1)
        res = att.attend((0.5, 0.02), b, np.eye(5), alpha=1)
        assert np.array_equal(res.context, res.r)

    def test_zero_upstream(self):
        b = att.RBFBasis.linear_1d(5, 0.1)
        res = att.attend((0.5, 0.02), b, np.ones((3, 5)), alpha=2)
        assert np.array_equal(res.backward(np.zeros(3)), np.zeros(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            att.attend((0.5, 0.02), att.RBFBasis.linear_1d(5, 0.1), np.ones((3, 4)))
        with pytest.raises(ValueError):
            att.forward(S1.from_moments(0, 1), att.RBFBasis.grid_2d(4), 1)

    def test_unsupported_alpha(self):
        with pytest.raises(ValueError):
            att.forward(S1.from_moments(0, 1), att.RBFBasis.linear_1d(3, 0.1), 1.5)

    @pytest.mark.parametrize("alpha,dim,tol", [(1, 1, 1e-5), (2, 1, 1e-5), (1, 2, 1e-5), (2, 2, 1e-4)])
    def test_chain_rule(self, alpha, dim, tol, rng):
        score, basis = random_attention_config(rng, alpha, dim)
        B = rng.normal(size=(4, len(basis)))
        res = att.attend(score, basis, B, alpha)
        g = res.backward(np.ones(4))
        step = 1e-5 if dim == 2 else 1e-6
        Jf = oracle.fd_attention_jacobian(lambda s: np.atleast_1d(np.sum(B @ att.forward(s, basis, alpha))),
                                          score, step)
        assert np.abs(g - Jf[:, 0]).max() <= tol
