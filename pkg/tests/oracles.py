"""Independent reference computations used by the tests.

Nothing here imports the package's numerical routines: each helper rebuilds
its quantity from the textbook formula with plain dense linear algebra.
"""

import numpy as np
import scipy.linalg as sla


def dense_PW(Q, W):
    Qi = sla.inv(Q)
    return Qi @ W @ sla.inv(W.T @ Qi @ W) @ W.T


def dense_QW(Q, W):
    return Q - W @ sla.inv(W.T @ sla.inv(Q) @ W) @ W.T


def dense_A(X, d, lam):
    Vi = np.diag(1.0 / (d + lam))
    return Vi - Vi @ X @ sla.inv(X.T @ Vi @ X) @ X.T @ Vi


def normal_equations_beta(X, d, y, lam):
    """GLS coefficients through a Cholesky solve of the normal equations."""
    Vi = np.diag(1.0 / (d + lam))
    c = sla.cho_factor(X.T @ Vi @ X)
    return sla.cho_solve(c, X.T @ Vi @ y)


def grid_scan_root(y, X, d, df, lam_max, n=1_000_000):
    """Root of y'A(lam)y = df: dense grid, first sign change, then brentq refinement."""
    grid = np.linspace(0.0, lam_max, n)
    # closed-form quadratic pieces evaluated without the package helpers
    vals = np.empty(n)
    Xy = X * y[:, None]
    for start in range(0, n, 20_000):
        lam = grid[start:start + 20_000]
        w = 1.0 / (d[None, :] + lam[:, None])
        M = np.einsum("lk,ki,kj->lij", w, X, X)
        b = w @ Xy
        beta = np.linalg.solve(M, b[..., None])[..., 0]
        vals[start:start + 20_000] = (w * y**2).sum(1) - (b * beta).sum(1) - df
    if vals[0] <= 0:
        return 0.0
    idx = np.nonzero(vals <= 0)[0]
    if idx.size == 0:
        raise ValueError("no sign change on grid")
    j = idx[0]

    def f(lam):
        return float(y @ dense_A(X, d, lam) @ y - df)

    from scipy.optimize import brentq
    return brentq(f, grid[j - 1], grid[j], xtol=1e-14, rtol=1e-15)


def balanced_lambda_star(y, d):
    """Intercept-only, equal-variance moment estimator: y'My/(k-1) - d."""
    k = y.size
    M = np.eye(k) - np.ones((k, k)) / k
    return float(y @ M @ y / (k - 1) - d)


def random_spd(n, rng, cond=10.0):
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.linspace(1.0, cond, n)
    return (U * ev) @ U.T


def central_difference(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)
