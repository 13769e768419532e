"""Slow, independent re-implementations used as test oracles."""

import numpy as np


def lasso_projected_gradient(Xs, yc, lam, max_iter=200_000, ftol=1e-14):
    """Projected (sub)gradient solver on the positive/negative split.

    Writes beta = bp - bm with bp, bm >= 0, turning the L1 term into a
    linear one; fixed-step projected gradient descent on the orthant then
    minimizes the same objective as coordinate descent, slowly but surely.
    """
    n, p = Xs.shape
    gram = Xs.T @ Xs / n
    xty = Xs.T @ yc / n
    step = 1.0 / (np.linalg.eigvalsh(gram).max() + 1e-12)
    bp = np.zeros(p)
    bm = np.zeros(p)
    prev = np.inf
    for it in range(max_iter):
        grad = gram @ (bp - bm) - xty
        bp = np.maximum(0.0, bp - step * (grad + lam))
        bm = np.maximum(0.0, bm - step * (-grad + lam))
        if it % 200 == 0:
            r = yc - Xs @ (bp - bm)
            obj = 0.5 * (r @ r) / n + lam * (bp.sum() + bm.sum())
            if abs(prev - obj) < ftol:
                break
            prev = obj
    return bp - bm


def random_lasso_instance(seed, n=30, p=10, lam_scale=0.3):
    """A small random regression problem plus a penalty below lambda_max."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta_true = np.zeros(p)
    support = rng.choice(p, size=3, replace=False)
    beta_true[support] = rng.normal(scale=2.0, size=3)
    y = X @ beta_true + 0.1 * rng.normal(size=n)
    Xs = (X - X.mean(axis=0)) / X.std(axis=0)
    yc = y - y.mean()
    lam_max = np.max(np.abs(Xs.T @ yc)) / n
    return Xs, yc, lam_scale * lam_max
