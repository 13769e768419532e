"""Non-neural reference models: per-element K-alpha linear regression and
full-spectrum LASSO.

Both are sklearn-style estimators over a spectra matrix X of shape
(n_samples, n_channels) and a concentration matrix Y of shape
(n_samples, n_elements).
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .core import TARGET_ELEMENTS, EnergyCalibration
from .transitions import TransitionTable, load_bundled_table
from .validation import check_matrix, check_paired


class NotApplicableError(ValueError):
    """The model is undefined for this element (no usable K-alpha line)."""


class MeanRegressor(BaseEstimator, RegressorMixin):
    """Predicts the training mean of every element; the retention baseline."""

    def fit(self, X, Y):
        X = check_matrix(X, "X")
        Y = check_matrix(Y, "Y")
        check_paired(X, Y)
        self.mean_ = Y.mean(axis=0)
        return self

    def predict(self, X):
        if not hasattr(self, "mean_"):
            raise NotFittedError("fit before predict")
        X = check_matrix(X, "X")
        return np.tile(self.mean_, (X.shape[0], 1))


def _kalpha_line(table: TransitionTable, element: str):
    """The element's K-alpha transition: its most probable K-series line."""
    k_lines = [t for t in table.get(element) if t.kind == "K"]
    if not k_lines:
        return None
    return max(k_lines, key=lambda t: t.probability)


class KalphaLinear(BaseEstimator, RegressorMixin):
    """Per-element simple linear regression on the K-alpha channel count.

    Elements without a K-alpha line inside the calibrated energy range are
    not applicable; their predictions are NaN and ``predict_element`` raises
    :class:`NotApplicableError` for them. ``window`` is an odd channel count
    summed symmetrically around the K-alpha channel (1 = single channel).
    """

    def __init__(self, table=None, calibration=None, elements=None, window=1):
        self.table = table
        self.calibration = calibration
        self.elements = elements
        self.window = window

    def _resolve(self):
        table = self.table if self.table is not None else load_bundled_table()
        cal = self.calibration if self.calibration is not None else EnergyCalibration()
        elements = tuple(self.elements) if self.elements is not None else TARGET_ELEMENTS
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd count, got {self.window}")
        return table, cal, elements

    def _feature(self, X, ch):
        half = (self.window - 1) // 2
        lo, hi = max(0, ch - half), min(X.shape[1] - 1, ch + half)
        return X[:, lo:hi + 1].sum(axis=1)

    def fit(self, X, Y):
        table, cal, elements = self._resolve()
        X = check_matrix(X, "X", n_cols=cal.n_channels)
        Y = check_matrix(Y, "Y", n_cols=len(elements))
        check_paired(X, Y)
        if X.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        n_el = len(elements)
        self.slope_ = np.zeros(n_el)
        self.intercept_ = np.zeros(n_el)
        self.channel_ = np.full(n_el, -1, dtype=int)
        self.applicable_ = np.zeros(n_el, dtype=bool)
        for j, el in enumerate(elements):
            line = _kalpha_line(table, el)
            if line is None or not (cal.e_min <= line.energy_kev <= cal.e_max):
                continue
            ch = cal.nearest_channel(line.energy_kev)
            x = self._feature(X, ch)
            y = Y[:, j]
            var = np.var(x)
            slope = 0.0 if var == 0 else float(np.cov(x, y, bias=True)[0, 1] / var)
            self.applicable_[j] = True
            self.channel_[j] = ch
            self.slope_[j] = slope
            self.intercept_[j] = float(y.mean() - slope * x.mean())
        self.elements_ = elements
        return self

    def predict(self, X):
        if not hasattr(self, "slope_"):
            raise NotFittedError("fit before predict")
        X = check_matrix(X, "X")
        out = np.full((X.shape[0], len(self.elements_)), np.nan)
        for j in range(len(self.elements_)):
            if self.applicable_[j]:
                x = self._feature(X, self.channel_[j])
                out[:, j] = self.slope_[j] * x + self.intercept_[j]
        return out

    def predict_element(self, X, element: str):
        if not hasattr(self, "slope_"):
            raise NotFittedError("fit before predict")
        j = self.elements_.index(element)
        if not self.applicable_[j]:
            raise NotApplicableError(
                f"{element} has no K-alpha line inside the calibrated range"
            )
        X = check_matrix(X, "X")
        return self.slope_[j] * self._feature(X, self.channel_[j]) + self.intercept_[j]


# -- LASSO ------------------------------------------------------------------
#
# The optimization problem lives on standardized features (columns of mean 0
# and population variance 1) with a centered target:
#
#     minimize (1/2n) ||y - X b||^2 + lam ||b||_1
#
# Reported coefficients are de-standardized for prediction on raw spectra.


def soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def standardize_columns(X: np.ndarray):
    """Column-standardize; constant columns are zeroed and flagged."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > 0
    Xs = (X - mu) / np.where(keep, sd, 1.0)
    Xs[:, ~keep] = 0.0
    return Xs, mu, sd, keep


def lasso_lambda_max(Xs: np.ndarray, yc: np.ndarray) -> float:
    """Smallest penalty at which the all-zero solution is optimal."""
    n = Xs.shape[0]
    return float(np.max(np.abs(Xs.T @ yc)) / n) if Xs.size else 0.0


def lasso_objective(Xs: np.ndarray, yc: np.ndarray, beta: np.ndarray, lam: float) -> float:
    n = Xs.shape[0]
    r = yc - Xs @ beta
    return float(0.5 * (r @ r) / n + lam * np.abs(beta).sum())


def lasso_kkt_residual(Xs, yc, beta, lam, r=None) -> float:
    """Max violation of the stationarity conditions; 0 at the optimum."""
    n = Xs.shape[0]
    if r is None:
        r = yc - Xs @ beta
    c = Xs.T @ r / n
    active = beta != 0
    viol_inactive = np.maximum(np.abs(c[~active]) - lam, 0.0)
    viol_active = np.abs(c[active] - lam * np.sign(beta[active]))
    worst = 0.0
    if viol_inactive.size:
        worst = max(worst, float(viol_inactive.max()))
    if viol_active.size:
        worst = max(worst, float(viol_active.max()))
    return worst


def lasso_coordinate_descent(Xs, yc, lam, tol=1e-8, max_iter=1000, beta=None):
    """Cyclic coordinate descent to KKT residual <= tol.

    ``Xs``/``yc`` must already be standardized/centered. Each outer iteration
    runs one full cyclic pass followed by passes over the active set; the
    KKT conditions are checked with a single matrix-vector sweep.
    """
    n, p = Xs.shape
    beta = np.zeros(p) if beta is None else beta.astype(np.float64).copy()
    col_scale = np.einsum("ij,ij->j", Xs, Xs) / n  # 1 for kept, 0 for constant
    nonzero_cols = np.flatnonzero(col_scale > 0)
    r = yc - Xs @ beta

    def sweep(cols):
        delta = 0.0
        for j in cols:
            xj = Xs[:, j]
            rho = (xj @ r) / n + col_scale[j] * beta[j]
            new = soft_threshold(rho, lam) / col_scale[j]
            if new != beta[j]:
                r[:] += xj * (beta[j] - new)
                delta = max(delta, abs(new - beta[j]))
                beta[j] = new
        return delta

    for _ in range(max_iter):
        sweep(nonzero_cols)
        active = np.flatnonzero(beta)
        for _ in range(100):
            if sweep(active) < tol * 1e-2:
                break
        if lasso_kkt_residual(Xs, yc, beta, lam, r=r) <= tol:
            return beta
    warnings.warn(
        f"coordinate descent did not reach KKT tolerance {tol} in {max_iter} passes",
        RuntimeWarning,
    )
    return beta


def lambda_grid(lam_max: float, n_lambdas: int, min_ratio: float) -> np.ndarray:
    if lam_max <= 0:
        return np.zeros(1)
    return lam_max * np.logspace(0.0, np.log10(min_ratio), n_lambdas)


class SpectralLasso(BaseEstimator, RegressorMixin):
    """One LASSO model per element over the full spectrum.

    ``lam`` may be a fixed penalty (standardized scale) or "cv", which picks
    each element's penalty by inner k-fold cross-validation over a log grid
    from lambda_max down to lambda_max * lambda_min_ratio, preferring the
    sparser model on ties. Deterministic given ``seed``.
    """

    def __init__(self, lam="cv", n_lambdas=20, lambda_min_ratio=1e-3,
                 n_inner_folds=5, tol=1e-8, max_iter=1000, seed=0):
        self.lam = lam
        self.n_lambdas = n_lambdas
        self.lambda_min_ratio = lambda_min_ratio
        self.n_inner_folds = n_inner_folds
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed

    def _fit_single(self, Xs, yc, lam):
        return lasso_coordinate_descent(Xs, yc, lam, tol=self.tol,
                                        max_iter=self.max_iter)

    def _select_lambda(self, X, y):
        n = X.shape[0]
        k = min(self.n_inner_folds, n)
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(n)
        fold_of = np.zeros(n, dtype=int)
        fold_of[order] = np.arange(n) % k
        Xs_all, _, _, _ = standardize_columns(X)
        grid = lambda_grid(lasso_lambda_max(Xs_all, y - y.mean()),
                           self.n_lambdas, self.lambda_min_ratio)
        errors = np.zeros((k, len(grid)))
        for fold in range(k):
            tr, va = fold_of != fold, fold_of == fold
            Xs, mu, sd, keep = standardize_columns(X[tr])
            yc = y[tr] - y[tr].mean()
            beta = None
            for gi, lam in enumerate(grid):
                beta = lasso_coordinate_descent(Xs, yc, lam, tol=self.tol,
                                                max_iter=self.max_iter, beta=beta)
                coef = np.where(keep, beta / np.where(keep, sd, 1.0), 0.0)
                intercept = y[tr].mean() - coef @ mu
                pred = X[va] @ coef + intercept
                errors[fold, gi] = np.mean((y[va] - pred) ** 2)
        mean_err = errors.mean(axis=0)
        # ties go to the larger penalty (grid is descending in lambda)
        return float(grid[int(np.argmin(mean_err))])

    def fit(self, X, Y):
        X = check_matrix(X, "X")
        Y = check_matrix(Y, "Y")
        check_paired(X, Y)
        n, p = X.shape
        n_el = Y.shape[1]
        self.coef_ = np.zeros((n_el, p))
        self.intercept_ = np.zeros(n_el)
        self.lambda_ = np.zeros(n_el)
        for j in range(n_el):
            y = Y[:, j]
            lam = self.lam if self.lam != "cv" else self._select_lambda(X, y)
            Xs, mu, sd, keep = standardize_columns(X)
            yc = y - y.mean()
            beta = self._fit_single(Xs, yc, lam)
            coef = np.where(keep, beta / np.where(keep, sd, 1.0), 0.0)
            self.coef_[j] = coef
            self.intercept_[j] = y.mean() - coef @ mu
            self.lambda_[j] = lam
        return self

    def predict(self, X):
        if not hasattr(self, "coef_"):
            raise NotFittedError("fit before predict")
        X = check_matrix(X, "X", n_cols=self.coef_.shape[1])
        return X @ self.coef_.T + self.intercept_
