import numpy as np
import pytest

from remlsplit.errors import DimensionMismatch, InfeasibleParams, SingularCurvature
from remlsplit.likelihood import reml_loglik, score
from remlsplit.model import CovarianceModel, Dataset, ThetaVector, indicator_matrix, variance_components
from remlsplit.simulate import SimSpec, sample_dataset
from remlsplit.solver import METHODS, SolverConfig, default_theta0, fit, newton_step, standard_errors

N_OBS, LEVELS = 40, 10


def vc_spec(seed, replicates=1):
    Z, _ = indicator_matrix(np.repeat(np.arange(LEVELS), N_OBS // LEVELS))
    model = variance_components([Z], N_OBS)
    return SimSpec(np.ones((N_OBS, 1)), Z, model, ThetaVector(1.0, [2.0]), [0.0], seed, replicates)


def vc_dataset(seed):
    spec = vc_spec(seed)
    return spec.dataset(sample_dataset(spec, 0)), spec.model


class TestNewtonStep:
    def test_identity(self):
        delta, ridge = newton_step(np.eye(2), [0.5, -0.25])
        np.testing.assert_allclose(delta, [0.5, -0.25])
        assert ridge == 0.0

    def test_singular_with_zero_score(self):
        delta, ridge = newton_step(np.ones((2, 2)), [0.0, 0.0])
        np.testing.assert_array_equal(delta, [0.0, 0.0])
        assert ridge > 0

    def test_diagonal(self):
        delta, _ = newton_step(np.diag([2.0, 8.0]), [1.0, 2.0])
        np.testing.assert_allclose(delta, [0.5, 0.25])

    def test_escalation_exhausts(self):
        with pytest.raises(SingularCurvature):
            newton_step(np.diag([1.0, -1.0]), [1.0, 1.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            newton_step(np.eye(3), [1.0, 2.0])


class TestStandardErrors:
    def test_diagonal(self):
        np.testing.assert_allclose(standard_errors(np.diag([4.0, 25.0])), [0.5, 0.2])

    def test_sigma2_only(self):
        s2, dof = 1.7, 12
        se = standard_errors([[dof / (2 * s2**2)]])
        assert se[0] == pytest.approx(s2 * np.sqrt(2 / dof), rel=1e-14)

    def test_singular(self):
        with pytest.raises(SingularCurvature):
            standard_errors(np.ones((2, 2)))


class TestConfig:
    def test_unknown_method(self):
        with pytest.raises(ValueError):
            SolverConfig(method="bfgs")

    @pytest.mark.parametrize("kw", [{"grad_tol": 0}, {"max_iter": 0}, {"ridge0": -1}])
    def test_bad_values(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_methods_agree(seed):
    data, model = vc_dataset(seed)
    theta0 = default_theta0(data, model)
    results = {m: fit(data, model, theta0, SolverConfig(method=m)) for m in METHODS}
    for r in results.values():
        assert r.status == "converged"
        assert np.max(np.abs(score(data, model, r.theta_hat))) < 1e-8 or r.loglik_trace[-1][3] > 0
    ref = results["average-information"].theta_hat.as_array()
    for r in results.values():
        assert np.max(np.abs(r.theta_hat.as_array() - ref)) <= 1e-6


@pytest.mark.parametrize("method", sorted(METHODS))
def test_trace_is_monotone(method):
    data, model = vc_dataset(4)
    r = fit(data, model, ThetaVector(5.0, [0.05]), SolverConfig(method=method))
    lls = [t[1] for t in r.loglik_trace]
    assert all(b >= a for a, b in zip(lls, lls[1:]))
    assert r.loglik == pytest.approx(reml_loglik(data, model, r.theta_hat).value)


def test_stationary_start():
    data, model = vc_dataset(5)
    first = fit(data, model, default_theta0(data, model))
    again = fit(data, model, first.theta_hat)
    assert again.status == "converged"
    assert again.iterations <= 1
    np.testing.assert_allclose(again.theta_hat.as_array(), first.theta_hat.as_array(), rtol=1e-9)


def test_infeasible_start_raises():
    data, model = vc_dataset(6)
    with pytest.raises(InfeasibleParams):
        fit(data, model, ThetaVector(-1.0, [1.0]))


def test_max_iter_status():
    data, model = vc_dataset(7)
    r = fit(data, model, ThetaVector(50.0, [10.0]), SolverConfig(max_iter=1))
    assert r.status == "max_iter"
    assert np.all(np.isnan(r.std_errors))


@pytest.mark.parametrize("method", sorted(METHODS))
def test_sigma2_only_model(method):
    rng = np.random.default_rng(8)
    X = np.column_stack([np.ones(15), rng.standard_normal(15)])
    data = Dataset(X @ [1.0, -2.0] + 0.7 * rng.standard_normal(15), X)
    model = CovarianceModel(15)
    r = fit(data, model, ThetaVector(20.0, []), SolverConfig(method=method))
    ev = reml_loglik(data, model, r.theta_hat)
    assert r.status == "converged"
    assert abs(r.theta_hat.sigma2 - ev.yPy / 13) <= 1e-8
    assert r.std_errors[0] == pytest.approx(r.theta_hat.sigma2 * np.sqrt(2 / 13), rel=1e-6)


def test_boundary_when_no_group_signal():
    # y constant within groups shows no between-group variance beyond the mean
    rng = np.random.default_rng(9)
    labels = np.repeat(np.arange(8), 3)
    Z, _ = indicator_matrix(labels)
    e = rng.standard_normal(24)
    e -= (Z @ (Z.T @ e)) / 3  # remove group means: gamma_hat is at 0
    data = Dataset(e, np.ones((24, 1)), Z)
    model = variance_components([Z], 24)
    r = fit(data, model, ThetaVector(1.0, [1.0]))
    assert r.status == "boundary"
    assert np.isfinite(r.std_errors[0]) and np.isnan(r.std_errors[1])


def test_ar1_fit_recovers_stationarity():
    rng = np.random.default_rng(10)
    n = 60
    from remlsplit.model import ar1_residual

    model = ar1_residual(n)
    L = np.linalg.cholesky(model.H([0.6]))
    data = Dataset(1.0 + L @ rng.standard_normal(n), np.ones((n, 1)))
    r = fit(data, model, default_theta0(data, model))
    assert r.status == "converged"
    assert np.max(np.abs(score(data, model, r.theta_hat))) < 1e-6
