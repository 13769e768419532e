import numpy as np
import pytest

from xrfquant.baselines import (
    KalphaLinear,
    MeanRegressor,
    NotApplicableError,
    SpectralLasso,
    lasso_coordinate_descent,
    lasso_kkt_residual,
    lasso_lambda_max,
    lasso_objective,
    soft_threshold,
    standardize_columns,
)
from xrfquant.core import EnergyCalibration
from xrfquant.simulator import ForwardModel, SimulatorGlobals
from xrfquant.transitions import Transition, TransitionTable, load_bundled_table

from oracles import lasso_projected_gradient

CAL = EnergyCalibration(0.0, 50.0, 1024)


def test_mean_regressor_predicts_training_mean():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(20, 8))
    Y = rng.uniform(size=(20, 3))
    pred = MeanRegressor().fit(X, Y).predict(X[:5])
    assert np.allclose(pred, np.tile(Y.mean(axis=0), (5, 1)))


def _spectra_with_channel(rng, n, ch, values):
    X = rng.uniform(0.0, 0.1, size=(n, CAL.n_channels))
    X[:, ch] = values
    return X


def test_lr_exact_linear_target_zero_residual():
    rng = np.random.default_rng(1)
    table = load_bundled_table()
    fe_kalpha = max((t for t in table.get("Fe") if t.kind == "K"),
                    key=lambda t: t.probability)
    ch = CAL.nearest_channel(fe_kalpha.energy_kev)
    counts = rng.uniform(10, 100, size=40)
    X = _spectra_with_channel(rng, 40, ch, counts)
    y = 0.004 * counts + 0.02
    Y = y[:, None]
    model = KalphaLinear(elements=("Fe",)).fit(X, Y)
    assert model.channel_[0] == ch
    assert np.allclose(model.predict(X)[:, 0], y, atol=1e-12)
    assert model.slope_[0] == pytest.approx(0.004, rel=1e-9)


def test_lr_constant_target():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 50, size=(30, CAL.n_channels))
    Y = np.full((30, 1), 0.37)
    model = KalphaLinear(elements=("Fe",)).fit(X, Y)
    assert model.slope_[0] == pytest.approx(0.0, abs=1e-12)
    assert model.intercept_[0] == pytest.approx(0.37)


def test_lr_recovers_simulator_slope_noiselessly():
    # single-element spectra generated by the forward model: the K-alpha
    # count is exactly linear in concentration, so LR must recover the
    # generating slope's inverse to well within 5%
    rng = np.random.default_rng(3)
    table = TransitionTable([Transition("Fe", "K", 6.404, 1.0)])
    model_fwd = ForwardModel(table, CAL, ("Fe",))
    g = SimulatorGlobals(a1=0.0, a2=0.0)  # flat response = 1/3
    gain = 1.4
    y = rng.uniform(0.01, 0.4, size=25)
    X = model_fwd.simulate_batch((gain * y)[:, None], np.zeros(25), g)
    lr = KalphaLinear(table=table, elements=("Fe",)).fit(X, y[:, None])
    ch = CAL.nearest_channel(6.404)
    generating_slope = gain * model_fwd.peak_profiles(g.gamma)[0, ch] / 3.0
    assert lr.slope_[0] == pytest.approx(1.0 / generating_slope, rel=0.05)
    assert np.allclose(lr.predict(X)[:, 0], y, rtol=1e-6)


def test_lr_not_applicable_elements():
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 50, size=(10, CAL.n_channels))
    Y = rng.uniform(0, 0.5, size=(10, 3))
    model = KalphaLinear(elements=("Li", "Pb", "Fe")).fit(X, Y)
    # Li has no lines at all; Pb's K-alpha (75 keV) is outside 0-50 keV
    assert list(model.applicable_) == [False, False, True]
    pred = model.predict(X)
    assert np.all(np.isnan(pred[:, 0])) and np.all(np.isnan(pred[:, 1]))
    assert np.all(np.isfinite(pred[:, 2]))
    with pytest.raises(NotApplicableError):
        model.predict_element(X, "Pb")


def test_lr_scale_equivariance():
    rng = np.random.default_rng(5)
    table = load_bundled_table()
    ch = CAL.nearest_channel(6.404)
    counts = rng.uniform(10, 100, size=30)
    X = _spectra_with_channel(rng, 30, ch, counts)
    Y = (0.01 * counts + 0.1)[:, None] + 0.001 * rng.normal(size=(30, 1))
    m1 = KalphaLinear(elements=("Fe",)).fit(X, Y)
    m2 = KalphaLinear(elements=("Fe",)).fit(7.0 * X, Y)
    assert m2.slope_[0] == pytest.approx(m1.slope_[0] / 7.0, rel=1e-9)
    assert np.allclose(m1.predict(X), m2.predict(7.0 * X), rtol=1e-9)


def test_lr_window_sum():
    rng = np.random.default_rng(6)
    ch = CAL.nearest_channel(6.404)
    X = rng.uniform(0.0, 0.1, size=(25, CAL.n_channels))
    X[:, ch - 1:ch + 2] = rng.uniform(5, 50, size=(25, 3))
    y = 0.02 * X[:, ch - 1:ch + 2].sum(axis=1) + 0.3
    model = KalphaLinear(elements=("Fe",), window=3).fit(X, y[:, None])
    assert np.allclose(model.predict(X)[:, 0], y, atol=1e-10)
    with pytest.raises(ValueError):
        KalphaLinear(elements=("Fe",), window=2).fit(X, y[:, None])


def test_lr_requires_two_samples():
    with pytest.raises(ValueError):
        KalphaLinear(elements=("Fe",)).fit(np.zeros((1, 1024)), np.zeros((1, 1)))


# -- LASSO -------------------------------------------------------------------


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0


def test_lasso_zero_penalty_is_ols():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 6))
    beta_true = rng.normal(size=6)
    y = X @ beta_true + 2.0
    model = SpectralLasso(lam=0.0, max_iter=5000).fit(X, y[:, None])
    design = np.column_stack([X, np.ones(40)])
    ols, *_ = np.linalg.lstsq(design, y, rcond=None)
    assert np.allclose(model.coef_[0], ols[:6], atol=1e-6)
    assert model.intercept_[0] == pytest.approx(ols[6], abs=1e-6)
    assert np.allclose(model.predict(X)[:, 0], X @ ols[:6] + ols[6], atol=1e-6)


def test_lambda_max_kills_all_coefficients():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(30, 10))
    y = X @ rng.normal(size=10) + rng.normal(size=30)
    Xs, *_ = standardize_columns(X)
    lam_max = lasso_lambda_max(Xs, y - y.mean())
    for lam in (lam_max, 1.5 * lam_max, 10 * lam_max):
        model = SpectralLasso(lam=lam).fit(X, y[:, None])
        assert np.all(model.coef_ == 0.0)
        assert model.intercept_[0] == pytest.approx(y.mean())
        assert np.allclose(model.predict(X)[:, 0], y.mean())


def test_cd_matches_projected_gradient_oracle():
    from oracles import random_lasso_instance
    for seed in range(5):
        Xs, yc, lam = random_lasso_instance(seed)
        beta_cd = lasso_coordinate_descent(Xs, yc, lam, tol=1e-10)
        beta_or = lasso_projected_gradient(Xs, yc, lam)
        obj_cd = lasso_objective(Xs, yc, beta_cd, lam)
        obj_or = lasso_objective(Xs, yc, beta_or, lam)
        assert abs(obj_cd - obj_or) < 1e-5
        assert obj_cd <= obj_or + 1e-9


def test_cd_satisfies_kkt():
    from oracles import random_lasso_instance
    for seed in range(5):
        Xs, yc, lam = random_lasso_instance(seed + 100)
        beta = lasso_coordinate_descent(Xs, yc, lam, tol=1e-8)
        assert lasso_kkt_residual(Xs, yc, beta, lam) <= 1e-8
        # independent recomputation of the stationarity conditions
        c = Xs.T @ (yc - Xs @ beta) / Xs.shape[0]
        for j in range(len(beta)):
            if beta[j] != 0:
                assert abs(c[j] - lam * np.sign(beta[j])) <= 1e-6
            else:
                assert abs(c[j]) <= lam + 1e-6


def test_lasso_beats_mean_predictor_on_linear_data():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(60, 30))
    beta_true = np.zeros(30)
    beta_true[[3, 11, 20]] = [1.0, -2.0, 0.5]
    y = X @ beta_true + 0.05 * rng.normal(size=60)
    model = SpectralLasso(lam="cv", n_lambdas=10, seed=0).fit(X, y[:, None])
    pred = model.predict(X)[:, 0]
    mse_lasso = np.mean((pred - y) ** 2)
    mse_mean = np.mean((y - y.mean()) ** 2)
    assert mse_lasso < mse_mean / 2


def test_lasso_cv_is_deterministic():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(40, 12))
    y = X[:, 2] - 0.5 * X[:, 7] + 0.1 * rng.normal(size=40)
    m1 = SpectralLasso(lam="cv", n_lambdas=8, seed=3).fit(X, y[:, None])
    m2 = SpectralLasso(lam="cv", n_lambdas=8, seed=3).fit(X, y[:, None])
    assert m1.lambda_[0] == m2.lambda_[0]
    assert np.array_equal(m1.coef_, m2.coef_)


def test_lasso_handles_constant_columns():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(30, 5))
    X[:, 2] = 4.2
    y = X[:, 0] + 0.01 * rng.normal(size=30)
    model = SpectralLasso(lam=0.01).fit(X, y[:, None])
    assert model.coef_[0, 2] == 0.0


def test_lasso_rejects_nonfinite():
    X = np.ones((10, 3))
    X[0, 0] = np.inf
    with pytest.raises(ValueError):
        SpectralLasso(lam=0.1).fit(X, np.zeros((10, 1)))
