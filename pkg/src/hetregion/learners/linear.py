"""L2-penalized logistic regression (Newton) and ridge regression.

Both leave the intercept unpenalized.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..errors import ComputationError, DataError
from .model import Model


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise DataError("cannot fit on zero rows")
    if y.shape != (X.shape[0],):
        raise DataError(f"target length {y.shape} does not match {X.shape[0]} rows")
    return X, y


def logistic_objective(theta, X, y, C):
    """Penalized loss ``C * sum(logloss) + ||w||^2 / 2`` and its gradient.

    ``theta`` is ``[w..., b]``.
    """
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    loss = C * np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * w @ w
    resid = expit(z) - y
    grad = np.empty_like(theta)
    grad[:-1] = C * (X.T @ resid) + w
    grad[-1] = C * resid.sum()
    return loss, grad


def fit_logistic(X, y, l2_c: float = 1.0, *, max_iter: int = 500, tol: float = 1e-8) -> Model:
    """Newton's method with backtracking on the penalized log-likelihood.

    ``l2_c`` is the inverse regularization strength. Iteration stops once the
    gradient norm drops below ``tol``, once a Newton step can no longer lower
    the loss in floating point, or after ``max_iter`` steps.
    """
    X, y = _check_xy(X, y)
    if not np.all((y == 0) | (y == 1)):
        raise DataError("logistic regression needs binary targets")
    if not l2_c > 0:
        raise DataError(f"l2_c must be positive, got {l2_c}")
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    ridge = np.ones(d + 1)
    ridge[-1] = 0.0
    theta = np.zeros(d + 1)
    loss, grad = logistic_objective(theta, X, y, l2_c)
    n_iter = 0
    while n_iter < max_iter and np.linalg.norm(grad) >= tol:
        p = expit(Xb @ theta)
        H = (Xb * (l2_c * p * (1 - p))[:, None]).T @ Xb + np.diag(ridge)
        # tiny jitter keeps H invertible once every p has saturated
        H[-1, -1] += 1e-12 * max(1.0, l2_c * n)
        step = np.linalg.lstsq(H, grad, rcond=None)[0]
        decrement = grad @ step
        t = 1.0
        cand = theta - step
        new_loss, new_grad = logistic_objective(cand, X, y, l2_c)
        while new_loss > loss - 1e-4 * t * decrement and t > 1e-10:
            t *= 0.5
            cand = theta - t * step
            new_loss, new_grad = logistic_objective(cand, X, y, l2_c)
        if new_loss > loss or (new_loss == loss and np.linalg.norm(new_grad) >= np.linalg.norm(grad)):
            break  # floating-point floor reached
        theta, loss, grad = cand, new_loss, new_grad
        n_iter += 1
    gnorm = float(np.linalg.norm(grad))
    return Model(
        "logistic",
        {"l2_c": float(l2_c)},
        {"weights": theta[:-1].copy(), "intercept": float(theta[-1])},
        d,
        info={"n_iter": n_iter, "converged": gnorm < tol, "grad_norm": gnorm},
    )


def ridge_system(X, y, alpha: float):
    """Centered normal equations ``(Xc'Xc + alpha I) w = Xc'yc`` as ``(A, rhs, x_mean, y_mean)``."""
    X, y = _check_xy(X, y)
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    A = Xc.T @ Xc + alpha * np.eye(X.shape[1])
    return A, Xc.T @ (y - ym), xm, ym


def fit_ridge(X, y, alpha: float = 1.0) -> Model:
    """Ridge regression with an unpenalized intercept."""
    if alpha < 0:
        raise DataError(f"alpha must be nonnegative, got {alpha}")
    A, rhs, xm, ym = ridge_system(X, y, alpha)
    d = A.shape[0]
    if alpha == 0 and np.linalg.matrix_rank(A) < d:
        raise ComputationError("singular normal equations with alpha=0 (rank-deficient X); use alpha > 0")
    try:
        w = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise ComputationError("singular normal equations; use alpha > 0") from None
    # one step of iterative refinement tightens the system residual
    w = w + np.linalg.solve(A, rhs - A @ w)
    return Model(
        "ridge",
        {"alpha": float(alpha)},
        {"weights": w, "intercept": float(ym - xm @ w)},
        d,
    )
