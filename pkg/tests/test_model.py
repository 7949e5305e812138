import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remlsplit.errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InfeasibleParams,
    NotPositiveDefinite,
    RankDeficientX,
)
from remlsplit.model import (
    CovarianceModel,
    Dataset,
    ThetaVector,
    ar1_residual,
    composite,
    cov_grad,
    cov_hess,
    cov_matrix,
    indicator_matrix,
    validate_params,
    variance_components,
)

BLOCKS = indicator_matrix([0, 0, 1, 1])[0]


def fd_matrix(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


class TestCovMatrix:
    def test_zero_component(self):
        m = variance_components([np.eye(3)])
        np.testing.assert_array_equal(cov_matrix(m, [0.0]), np.eye(3))

    def test_ar1_definition(self):
        np.testing.assert_allclose(
            cov_matrix(ar1_residual(3), [0.5]), [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]], rtol=0, atol=0
        )

    def test_two_blocks(self):
        m = variance_components([BLOCKS])
        J2 = np.ones((2, 2))
        expected = np.eye(4) + 2 * np.block([[J2, np.zeros((2, 2))], [np.zeros((2, 2)), J2]])
        np.testing.assert_array_equal(cov_matrix(m, [2.0]), expected)

    def test_infeasible(self):
        with pytest.raises(InfeasibleParams):
            cov_matrix(variance_components([BLOCKS]), [-1.0])
        with pytest.raises(InfeasibleParams):
            cov_matrix(ar1_residual(4), [1.0])

    def test_not_positive_definite_from_bad_structure(self):
        # a user-supplied structure whose "residual" is singular
        class Broken(CovarianceModel):
            def residual(self, kappa):
                return np.zeros((self.n, self.n))

        m = Broken(4, groups=[BLOCKS])
        with pytest.raises(NotPositiveDefinite):
            cov_matrix(m, [1.0])


class TestDerivatives:
    def test_vc_gradient_is_ZZt(self):
        Z2 = indicator_matrix([0, 1, 0, 1])[0]
        m = variance_components([BLOCKS, Z2])
        for kappa in ([0.1, 3.0], [7.0, 0.0]):
            np.testing.assert_array_equal(cov_grad(m, kappa, 0), BLOCKS @ BLOCKS.T)
            np.testing.assert_array_equal(cov_grad(m, kappa, 1), Z2 @ Z2.T)

    def test_ar1_gradient_examples(self):
        m = ar1_residual(3)
        np.testing.assert_array_equal(cov_grad(m, [0.5], 0), [[0, 1, 1], [1, 0, 1], [1, 1, 0]])
        np.testing.assert_array_equal(cov_grad(m, [0.0], 0), [[0, 1, 0], [1, 0, 1], [0, 1, 0]])

    @pytest.mark.parametrize("phi", [0.5, 0.0])
    def test_ar1_gradient_examples_match_fd(self, phi):
        m = ar1_residual(3)
        fd = fd_matrix(lambda p: m.H([p]), phi, 1e-5)
        np.testing.assert_allclose(cov_grad(m, [phi], 0), fd, rtol=1e-6, atol=1e-9)

    def test_ar1_hessian_example(self):
        m = ar1_residual(3)
        np.testing.assert_array_equal(cov_hess(m, [0.5], 0, 0), [[0, 0, 2], [0, 0, 0], [2, 0, 0]])
        fd = fd_matrix(lambda p: m.dH([p], 0), 0.5, 1e-5)
        np.testing.assert_allclose(cov_hess(m, [0.5], 0, 0), fd, rtol=1e-6, atol=1e-9)

    def test_vc_hessian_exactly_zero(self):
        m = variance_components([BLOCKS, np.eye(4)])
        for i in range(2):
            for j in range(2):
                assert not np.any(cov_hess(m, [0.3, 1.2], i, j))

    def test_composite_cross_block_hessian_zero(self):
        m = composite([BLOCKS], 4)
        assert not np.any(cov_hess(m, [1.0, 0.3], 0, 1))
        assert not np.any(cov_hess(m, [1.0, 0.3], 1, 0))
        assert np.any(cov_hess(m, [1.0, 0.3], 1, 1))

    def test_hessian_symmetric_in_indices(self):
        m = composite([BLOCKS, np.eye(4)], 4)
        k = [0.5, 2.0, -0.4]
        for i in range(3):
            for j in range(3):
                np.testing.assert_array_equal(cov_hess(m, k, i, j), cov_hess(m, k, j, i))

    def test_index_out_of_range(self):
        m = composite([BLOCKS], 4)
        with pytest.raises(IndexOutOfRange):
            cov_grad(m, [1.0, 0.2], 2)
        with pytest.raises(IndexOutOfRange):
            cov_hess(m, [1.0, 0.2], 0, -1)


def _random_model(draw, family):
    n = draw(st.integers(2, 20))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    k = {"variance-components": draw(st.integers(1, 3)), "ar1-residual": 0, "composite": draw(st.integers(1, 3))}[family]
    groups = [indicator_matrix(rng.integers(0, max(1, n // 2), size=n))[0] for _ in range(k)]
    m = CovarianceModel(n, groups=groups, ar1=family != "variance-components")
    kappa = [draw(st.floats(0.0, 50.0)) for _ in range(k)]
    if m.ar1:
        bound = 1 - m.phi_margin
        kappa.append(draw(st.floats(-bound, bound)))
    return m, np.array(kappa)


@st.composite
def models(draw, family):
    return _random_model(draw, family)


@pytest.mark.parametrize("family", ["variance-components", "ar1-residual", "composite"])
def test_cholesky_succeeds_for_feasible_kappa(family):
    @settings(max_examples=1000, deadline=None)
    @given(models(family))
    def check(mk):
        m, kappa = mk
        H = cov_matrix(m, kappa)
        np.testing.assert_array_equal(H, H.T)

    check()


@pytest.mark.parametrize("family", ["variance-components", "ar1-residual", "composite"])
def test_derivatives_match_finite_differences(family):
    @settings(max_examples=150, deadline=None)
    @given(models(family))
    def check(mk):
        m, kappa = mk
        lo, hi = m.lower_bounds(), m.upper_bounds()
        for i in range(m.m):
            h = 1e-5 * max(1.0, abs(kappa[i]))
            if kappa[i] - h < lo[i] or kappa[i] + h > hi[i]:
                continue

            def shifted(delta, f):
                k = kappa.copy()
                k[i] += delta
                return f(k)

            fd = (shifted(h, m.H) - shifted(-h, m.H)) / (2 * h)
            g = cov_grad(m, kappa, i)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(g).max()))
            for j in range(m.m):
                fd2 = (shifted(h, lambda k: m.dH(k, j)) - shifted(-h, lambda k: m.dH(k, j))) / (2 * h)
                hess = cov_hess(m, kappa, j, i)
                np.testing.assert_allclose(hess, fd2, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(hess).max()))

    check()


class TestValidateParams:
    def test_negative_sigma2(self):
        rep = validate_params(variance_components([BLOCKS]), ThetaVector(-1.0, [1.0]))
        assert not rep.feasible
        assert rep.reasons["sigma2"] == "sigma2 must be positive"

    def test_ar1_outside_margin(self):
        m = ar1_residual(5)
        assert not validate_params(m, ThetaVector(1.0, [0.99995])).feasible
        assert not validate_params(m, ThetaVector(1.0, [-1.0])).feasible
        assert validate_params(m, ThetaVector(1.0, [0.999])).feasible
        assert not validate_params(ar1_residual(5, phi_margin=1e-2), ThetaVector(1.0, [0.999])).feasible

    def test_vc_feasible(self):
        Z2 = indicator_matrix([0, 1, 0, 1])[0]
        rep = validate_params(variance_components([BLOCKS, Z2]), ThetaVector(1.0, [0.5, 3.0]))
        assert rep.feasible and not rep.reasons and rep.at_boundary == ()

    def test_boundary_flags(self):
        rep = validate_params(variance_components([BLOCKS]), ThetaVector(1e-11, [0.0]))
        assert rep.feasible
        assert set(rep.at_boundary) == {"sigma2", "gamma1"}

    def test_wrong_length_and_nan(self):
        m = variance_components([BLOCKS])
        assert not validate_params(m, ThetaVector(1.0, [1.0, 2.0])).feasible
        assert not validate_params(m, ThetaVector(np.nan, [1.0])).feasible


class TestDataset:
    def test_shapes_and_rank(self):
        d = Dataset([1, 2, 3], np.ones(3), np.eye(3))
        assert (d.n, d.p, d.b, d.nu) == (3, 1, 3, 1)
        assert not d.y.flags.writeable

    def test_rank_deficient(self):
        X = np.column_stack([np.ones(4), np.arange(4.0), np.arange(4.0)])
        with pytest.raises(RankDeficientX):
            Dataset(np.arange(4.0), X)

    def test_dimension_checks(self):
        with pytest.raises(DimensionMismatch):
            Dataset([1, 2, 3], np.ones((2, 1)))
        with pytest.raises(DimensionMismatch):
            Dataset([1.0], np.ones((1, 1)))

    def test_theta_roundtrip(self):
        th = ThetaVector(2.0, [0.5, -0.1])
        assert ThetaVector.from_array(th.as_array()) == th
        assert ThetaVector.from_array([3.0]).m == 0
