"""Independent reference implementations used by the test suite.

Everything here is deliberately written against a different codepath
than the functions it checks: finite differences instead of analytic
gradients, scalar python loops with math.* instead of vectorized numpy
kernels, IRLS instead of diagonal scoring, and a direct SVD instead of
the alternating optimizer.  Desk scale only; performance is a non-goal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import OracleError
from .families import MEAN_CEIL, MEAN_FLOOR, PROB_CEIL, PROB_FLOOR, Family
from .model import ModelState, objective


@dataclass(frozen=True)
class OracleReport:
    """Worst-case disagreement between two arrays."""

    max_abs_err: float
    max_rel_err: float
    location: tuple[int, ...]


def report(actual, expected) -> OracleReport:
    """Compare arrays; relative error uses denominator 1 + |expected| so
    near-zero entries degrade gracefully to an absolute comparison."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    abs_err = np.abs(actual - expected)
    rel_err = abs_err / (1.0 + np.abs(expected))
    loc = np.unravel_index(int(np.argmax(rel_err)), rel_err.shape)
    return OracleReport(float(abs_err.max()), float(rel_err.max()), loc)


# ----------------------------------------------------------------------
# finite differences


def finite_diff_gradient(state: ModelState, block: str, k: int,
                         eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of the objective along one column.

    block is "U" or "V"; eps must lie in [1e-8, 1e-4].
    """
    if not 1e-8 <= eps <= 1e-4:
        raise OracleError(f"eps {eps} outside [1e-8, 1e-4]")
    if block not in ("U", "V"):
        raise OracleError(f"block must be 'U' or 'V', got {block!r}")
    mat = state.U if block == "U" else state.V
    grad = np.zeros(mat.shape[0])
    for i in range(mat.shape[0]):
        saved = mat[i, k]
        mat[i, k] = saved + eps
        q_plus = objective(state)
        mat[i, k] = saved - eps
        q_minus = objective(state)
        mat[i, k] = saved
        grad[i] = (q_plus - q_minus) / (2.0 * eps)
    return grad


# ----------------------------------------------------------------------
# scalar-loop reference formulas (no numpy kernels)


def _mean_of(fam: Family, r: float) -> float:
    if fam.link == "identity":
        return r
    if fam.link == "log":
        mu = math.exp(r) if r < 700 else math.inf
        return min(max(mu, MEAN_FLOOR), MEAN_CEIL)
    mu = 1.0 / (1.0 + math.exp(-r)) if r > -700 else 0.0
    return min(max(mu, PROB_FLOOR), PROB_CEIL)


def _dmean_of(fam: Family, r: float) -> float:
    if fam.link == "identity":
        return 1.0
    mu = _mean_of(fam, r)
    if fam.link == "log":
        return mu
    return mu * (1.0 - mu)


def _variance_of(fam: Family, mu: float) -> float:
    if fam.kind == "gaussian":
        return 1.0
    if fam.kind == "poisson":
        return mu
    if fam.kind == "bernoulli":
        return mu * (1.0 - mu)
    return mu + mu * mu / fam.dispersion


def _loglik_of(fam: Family, y: float, mu: float) -> float:
    if fam.kind == "gaussian":
        return y * mu - 0.5 * mu * mu
    if fam.kind == "poisson":
        return y * math.log(mu) - mu
    if fam.kind == "bernoulli":
        theta = math.log(mu) - math.log1p(-mu)
        kappa = theta + math.log1p(math.exp(-theta)) if theta > 0 \
            else math.log1p(math.exp(theta))
        return y * theta - kappa
    a = fam.dispersion
    theta = math.log(mu) - math.log(mu + a)
    return y * theta + a * (math.log(a) - math.log(mu + a))


def _predictor_entry(state: ModelState, j: int, i: int) -> float:
    total = state.delta[i]
    for k in range(state.index.n_total):
        total += state.V[j, k] * state.U[i, k]
    return total


def scalar_objective(state: ModelState) -> float:
    """Triple-loop evaluation of the penalized objective."""
    q = 0.0
    for j in range(state.n_feat):
        for i in range(state.n_obs):
            mu = _mean_of(state.family, _predictor_entry(state, j, i))
            q += _loglik_of(state.family, state.Y[j, i], mu)
    for k in state.index.u_cols:
        for i in range(state.n_obs):
            q -= 0.5 * state.lambda_u[k] * state.U[i, k] ** 2
    for k in state.index.v_cols:
        for j in range(state.n_feat):
            q -= 0.5 * state.lambda_v[k] * state.V[j, k] ** 2
    return q


def scalar_gradient_u(state: ModelState, k: int) -> np.ndarray:
    """Scalar-loop gradient for U[:, k]."""
    fam = state.family
    grad = np.zeros(state.n_obs)
    for i in range(state.n_obs):
        total = 0.0
        for j in range(state.n_feat):
            r = _predictor_entry(state, j, i)
            mu = _mean_of(fam, r)
            total += ((state.Y[j, i] - mu) / _variance_of(fam, mu)
                      * _dmean_of(fam, r) * state.V[j, k])
        grad[i] = total - state.lambda_u[k] * state.U[i, k]
    return grad


def scalar_fisher_u(state: ModelState, k: int) -> np.ndarray:
    """Scalar-loop Fisher information for U[:, k]."""
    fam = state.family
    info = np.zeros(state.n_obs)
    for i in range(state.n_obs):
        total = 0.0
        for j in range(state.n_feat):
            r = _predictor_entry(state, j, i)
            h = _dmean_of(fam, r)
            total += h * h * state.V[j, k] ** 2 / _variance_of(
                fam, _mean_of(fam, r))
        info[i] = total + state.lambda_u[k]
    return info


def scalar_gradient_v(state: ModelState, k: int) -> np.ndarray:
    """Scalar-loop gradient for V[:, k]."""
    fam = state.family
    grad = np.zeros(state.n_feat)
    for j in range(state.n_feat):
        total = 0.0
        for i in range(state.n_obs):
            r = _predictor_entry(state, j, i)
            mu = _mean_of(fam, r)
            total += ((state.Y[j, i] - mu) / _variance_of(fam, mu)
                      * _dmean_of(fam, r) * state.U[i, k])
        grad[j] = total - state.lambda_v[k] * state.V[j, k]
    return grad


def scalar_fisher_v(state: ModelState, k: int) -> np.ndarray:
    """Scalar-loop Fisher information for V[:, k]."""
    fam = state.family
    info = np.zeros(state.n_feat)
    for j in range(state.n_feat):
        total = 0.0
        for i in range(state.n_obs):
            r = _predictor_entry(state, j, i)
            h = _dmean_of(fam, r)
            total += h * h * state.U[i, k] ** 2 / _variance_of(
                fam, _mean_of(fam, r))
        info[j] = total + state.lambda_v[k]
    return info


# ----------------------------------------------------------------------
# reference GLM and PCA


def irls_glm(y, X, family: Family, offset=None, max_iters: int = 200,
             tol: float = 1e-10) -> np.ndarray:
    """Maximum-likelihood GLM coefficients by iteratively reweighted
    least squares, to ``tol`` relative change.

    Independent of the diagonal-scoring optimizer.  Divergence (or not
    converging within max_iters) raises OracleError so callers can skip.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n <= p:
        raise OracleError("need more observations than coefficients")
    if np.linalg.matrix_rank(X) < p:
        raise OracleError("design matrix is rank deficient")
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    beta = np.zeros(p)
    for _ in range(max_iters):
        eta = X @ beta + offset
        mu = family.inverse_link(eta)
        h = family.dinverse_link(eta)
        w = h * h / family.variance(mu)
        z = eta - offset + (y - mu) / h
        try:
            beta_new = np.linalg.solve(X.T @ (w[:, None] * X), X.T @ (w * z))
        except np.linalg.LinAlgError as exc:
            raise OracleError(f"IRLS system singular: {exc}") from exc
        if not np.all(np.isfinite(beta_new)):
            raise OracleError("IRLS diverged to non-finite coefficients")
        change = np.max(np.abs(beta_new - beta)) / (1.0 + np.max(np.abs(beta)))
        beta = beta_new
        if change < tol:
            return beta
    raise OracleError(f"IRLS did not converge in {max_iters} iterations")


def pca_reference(Y, n_components: int):
    """Exact truncated PCA of the row-centered data matrix.

    Returns (scores, loadings) with scores N x L ordered by singular
    value and loadings J x L orthonormal, so that
    loadings @ scores.T reconstructs the best rank-L approximation of
    the centered matrix.
    """
    Y = np.asarray(Y, dtype=float)
    n_feat, n_obs = Y.shape
    if n_components > min(n_feat, n_obs):
        raise OracleError("n_components exceeds min(J, N)")
    centered = Y - Y.mean(axis=1, keepdims=True)
    left, sing, right_t = np.linalg.svd(centered, full_matrices=False)
    loadings = left[:, :n_components]
    scores = right_t[:n_components].T * sing[:n_components]
    return scores, loadings
