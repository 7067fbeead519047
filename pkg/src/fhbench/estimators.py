"""Direct, Bayes, empirical Bayes and benchmarked estimators for the Fay-Herriot model.

The empirical Bayes machinery works on a diagonal sampling covariance.  The
constraint-satisfying estimators UC1/UC2 live in a (k-m)-dimensional subspace
with a dense covariance ``V11_2``; they are reduced to the diagonal case by
rotating onto the eigenvectors of ``V11_2``, which leaves the moment equation
and the shrinkage estimator unchanged.

Most internals accept a batch of observations as the rows of a 2-D array so
that Monte Carlo replications can be processed together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .canonical import CanonicalBlocks, CanonicalFrame, build_blocks, transform
from .model import (
    BenchmarkSpec,
    FayHerriotModel,
    FixedTarget,
    NumericalError,
    Observation,
    WeightedDirect,
    benchmark_adjustment,
    projection_PW,
)

LAMBDA_TOL = 1e-10
MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class VarianceFit:
    lambda_hat: float
    lambda_star: float
    converged: bool
    iterations: int
    residual: float


@dataclass(frozen=True)
class EstimateResult:
    mu_hat: np.ndarray
    method: str
    fit: Optional[VarianceFit] = None
    beta_hat: Optional[np.ndarray] = None
    constraint_residual: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# Dense single-instance building blocks
# ---------------------------------------------------------------------------

def a_matrix(model: FayHerriotModel, lam: float) -> np.ndarray:
    """A(lam) = V^{-1} - V^{-1}X (X'V^{-1}X)^{-1} X'V^{-1}, V = D + lam I."""
    return _a_dense(model.X, 1.0 / (model.d + lam))


def _a_dense(X, w):
    VX = w[:, None] * X
    A = np.diag(w) - VX @ np.linalg.solve(X.T @ VX, VX.T)
    return 0.5 * (A + A.T)


def a3_matrix(V: np.ndarray, X: np.ndarray, lam: float) -> np.ndarray:
    """Symmetric A-matrix for a dense covariance V (used for the subspace fits)."""
    V3i = np.linalg.inv(V + lam * np.eye(V.shape[0]))
    V3iX = V3i @ X
    A = V3i - V3iX @ np.linalg.solve(X.T @ V3iX, V3iX.T)
    return 0.5 * (A + A.T)


def gls_beta(model: FayHerriotModel, obs: Observation, lam: float) -> np.ndarray:
    w = 1.0 / (model.d + lam)
    XtVi = model.X.T * w
    return np.linalg.solve(XtVi @ model.X, XtVi @ obs.y)


# ---------------------------------------------------------------------------
# Batched moment equation and lambda solver (diagonal covariance)
# ---------------------------------------------------------------------------

def _gls_batch(Y, X, d, lam):
    """Return (weights 1/(d+lam), beta_hat) for each row of Y at its own lam."""
    w = 1.0 / (d[None, :] + lam[:, None])
    k, p = X.shape
    M = (w @ (X[:, :, None] * X[:, None, :]).reshape(k, p * p)).reshape(-1, p, p)
    b = (w * Y) @ X
    beta = np.linalg.solve(M, b[..., None])[..., 0]
    return w, beta, b


def moment_function(Y, X, d, lam) -> np.ndarray:
    """y'A(lam)y for each row of Y (lam broadcast to rows)."""
    Y = np.atleast_2d(Y)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (Y.shape[0],))
    w, beta, b = _gls_batch(Y, X, d, lam)
    return np.sum(w * Y * Y, axis=1) - np.sum(b * beta, axis=1)


@dataclass
class _BatchFit:
    lam: np.ndarray
    lam_star: np.ndarray
    converged: np.ndarray
    iterations: int
    residual: np.ndarray


def solve_lambda_batch(Y, X, d, df: float, tol: float = LAMBDA_TOL,
                       strict: bool = True) -> _BatchFit:
    """Solve y'A(lam)y = df per row by doubling + bisection, truncating at zero."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    R = Y.shape[0]
    if not np.all(np.isfinite(Y)):
        raise NumericalError("non-finite observations passed to lambda solver")
    q0 = moment_function(Y, X, d, np.zeros(R))
    active = q0 > df
    lam = np.zeros(R)
    lam_star = np.zeros(R)
    converged = np.ones(R, dtype=bool)
    residual = np.where(active, 0.0, q0 - df)
    iterations = 0
    if not np.any(active):
        return _BatchFit(lam, lam_star, converged, iterations, residual)

    Ya = Y[active]
    n = Ya.shape[0]
    lo = np.zeros(n)
    hi = np.full(n, max(float(np.max(d)), tol))
    need = moment_function(Ya, X, d, hi) > df
    doublings = 0
    while np.any(need) and doublings < MAX_DOUBLINGS:
        lo[need] = hi[need]
        hi[need] *= 2.0
        need[need] = moment_function(Ya[need], X, d, hi[need]) > df
        doublings += 1
    bracketed = ~need
    if strict and not np.all(bracketed):
        raise NumericalError(
            f"moment equation not bracketed after {MAX_DOUBLINGS} doublings "
            f"(upper end {hi[need].max():.3g})")

    # capped: at very large brackets the float spacing can exceed tol
    while iterations < 200:
        width = hi - lo
        if np.all(width <= tol):
            break
        mid = 0.5 * (lo + hi)
        above = moment_function(Ya, X, d, mid) > df
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        iterations += 1
    root = 0.5 * (lo + hi)
    lam[active] = root
    lam_star[active] = root
    converged[active] = bracketed
    residual[active] = moment_function(Ya, X, d, root) - df
    return _BatchFit(lam, lam_star, converged, iterations + doublings, residual)


def _negative_root(y, X, d, df, tol):
    """Untruncated root on (-min d, 0] when it can be bracketed, else None."""
    lo = -float(np.min(d)) * (1.0 - 1e-9)
    g = lambda t: float(moment_function(y, X, d, t)[0]) - df
    if g(lo) <= 0.0:
        return None
    a, b = lo, 0.0
    while b - a > tol:
        c = 0.5 * (a + b)
        if g(c) > 0.0:
            a = c
        else:
            b = c
    return 0.5 * (a + b)


def fit_lambda(y, X, d, df: float | None = None, tol: float = LAMBDA_TOL) -> VarianceFit:
    """Fay-Herriot moment estimator for a diagonal covariance ``d``.

    ``df`` defaults to ``len(y) - p``.  When y'A(0)y <= df the estimate is
    truncated at zero and ``lambda_star`` carries the negative root if one can
    be bracketed on ``(-min d, 0]``.
    """
    y = np.asarray(y, dtype=float)
    if df is None:
        df = y.size - X.shape[1]
    fit = solve_lambda_batch(y[None, :], X, d, df, tol)
    lam = float(fit.lam[0])
    lam_star = float(fit.lam_star[0])
    if lam == 0.0:
        neg = _negative_root(y[None, :], X, d, df, tol)
        lam_star = 0.0 if neg is None else min(neg, 0.0)
    return VarianceFit(lam, lam_star, bool(fit.converged[0]), fit.iterations,
                       float(fit.residual[0]))


def fh_lambda_solve(model: FayHerriotModel, obs: Observation,
                    tol: float = LAMBDA_TOL) -> VarianceFit:
    if model.k <= model.p:
        raise ValueError("need k > p for the moment equation")
    return fit_lambda(obs.y, model.X, model.d, model.k - model.p, tol)


def shrink_batch(Y, X, d, lam):
    """EB estimate y - D V^{-1}(y - X beta(lam)) for each row; returns (mu, beta)."""
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (Y.shape[0],))
    w, beta, _ = _gls_batch(Y, X, d, lam)
    return Y - d[None, :] * w * (Y - beta @ X.T), beta


def eb_batch(Y, X, d, df=None):
    Y = np.atleast_2d(Y)
    if df is None:
        df = X.shape[0] - X.shape[1]
    fit = solve_lambda_batch(Y, X, d, df)
    mu, beta = shrink_batch(Y, X, d, fit.lam)
    return mu, beta, fit


# ---------------------------------------------------------------------------
# Subspace EB (dense covariance) via eigen-rotation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubspaceEB:
    """Empirical Bayes shrinkage for z ~ N(xi, V), xi ~ N(X beta, lam I), V dense."""

    V: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        ev, U = np.linalg.eigh(self.V)
        object.__setattr__(self, "_ev", ev)
        object.__setattr__(self, "_U", U)
        object.__setattr__(self, "_Xr", U.T @ self.X)

    @property
    def df(self) -> int:
        return self.X.shape[0] - self.X.shape[1]

    def estimate_batch(self, Z):
        Z = np.atleast_2d(Z)
        Zr = Z @ self._U
        fit = solve_lambda_batch(Zr, self._Xr, self._ev, self.df)
        xr, beta = shrink_batch(Zr, self._Xr, self._ev, fit.lam)
        return xr @ self._U.T, beta, fit

    def estimate(self, z):
        xi, beta, fit = self.estimate_batch(np.asarray(z, dtype=float)[None, :])
        vf = fit_lambda(np.asarray(z) @ self._U, self._Xr, self._ev, self.df)
        return xi[0], beta[0], vf


def subspace_eb(z, X, V):
    """Convenience wrapper returning (xi_hat, beta_hat, VarianceFit)."""
    return SubspaceEB(np.asarray(V, float), np.asarray(X, float)).estimate(z)


# ---------------------------------------------------------------------------
# Public estimators
# ---------------------------------------------------------------------------

def _residual(spec: BenchmarkSpec | None, mu, y):
    if spec is None:
        return None
    return spec.W.T @ mu - spec.target_value(y)


def direct_estimate(model: FayHerriotModel, obs: Observation,
                    spec: BenchmarkSpec | None = None) -> EstimateResult:
    return EstimateResult(obs.y.copy(), "Direct",
                          constraint_residual=_residual(spec, obs.y, obs.y))


def bayes_estimate(model: FayHerriotModel, obs: Observation, beta, lam: float) -> EstimateResult:
    """Posterior mean with known (beta, lam)."""
    beta = np.asarray(beta, dtype=float)
    mu = obs.y - model.d / (model.d + lam) * (obs.y - model.X @ beta)
    return EstimateResult(mu, "Bayes", beta_hat=beta)


def eb_estimate(model: FayHerriotModel, obs: Observation,
                spec: BenchmarkSpec | None = None) -> EstimateResult:
    fit = fh_lambda_solve(model, obs)
    mu, beta = shrink_batch(obs.y[None, :], model.X, model.d, fit.lambda_hat)
    return EstimateResult(mu[0], "EB", fit, beta[0], _residual(spec, mu[0], obs.y))


def eb_estimate_a_form(model: FayHerriotModel, obs: Observation) -> np.ndarray:
    """EB estimate through the y - D A(lam_hat) y form."""
    lam = fh_lambda_solve(model, obs).lambda_hat
    return obs.y - model.d * (a_matrix(model, lam) @ obs.y)


def constrain_batch(M, Y, spec: BenchmarkSpec, adjust=None):
    """Add the minimal Q-norm correction so that W'mu = t(y), row by row."""
    if adjust is None:
        adjust = benchmark_adjustment(spec)
    gap = spec.target_value(Y) - M @ spec.W
    return M + gap @ adjust.T


def constrain(muhat, model: FayHerriotModel, spec: BenchmarkSpec, obs: Observation,
              inner: str = "given") -> EstimateResult:
    mu = constrain_batch(np.asarray(muhat, float)[None, :], obs.y[None, :], spec)[0]
    return EstimateResult(mu, f"Constrained({inner})",
                          constraint_residual=_residual(spec, mu, obs.y))


def cm_estimate(model: FayHerriotModel, spec: BenchmarkSpec, obs: Observation) -> EstimateResult:
    mu = constrain_batch(obs.y[None, :], obs.y[None, :], spec)[0]
    return EstimateResult(mu, "CM", constraint_residual=_residual(spec, mu, obs.y))


def ceb_estimate(model: FayHerriotModel, spec: BenchmarkSpec, obs: Observation) -> EstimateResult:
    """(I - P_W) mu_EB + Q^{-1}W(W'Q^{-1}W)^{-1} t(y)."""
    eb = eb_estimate(model, obs)
    mu = (eb.mu_hat - projection_PW(spec) @ eb.mu_hat
          + benchmark_adjustment(spec) @ spec.target_value(obs.y))
    return EstimateResult(mu, "CEB", eb.fit, eb.beta_hat, _residual(spec, mu, obs.y))


def uc1_batch(blocks: CanonicalBlocks, Y, engine: SubspaceEB | None = None):
    """UC1 for each row of Y; returns (mu, beta, batch fit)."""
    if engine is None:
        engine = SubspaceEB(blocks.V11_2, blocks.X3)
    _, z2, z3, _ = transform(blocks, Y)
    xi3, beta, fit = engine.estimate_batch(z3)
    H1, H2 = blocks.basis.H1, blocks.basis.H2
    u = (xi3 + z2 @ blocks.gain.T) @ H1 + z2 @ H2
    return u @ blocks.Q_neg_half, beta, fit


def uc2_batch(blocks: CanonicalBlocks, Y, engine: SubspaceEB | None = None):
    if blocks.xi0 is None:
        raise ValueError("UC2 requires a fixed benchmark target")
    if engine is None:
        engine = SubspaceEB(blocks.V11_2, blocks.X4)
    _, _, _, z4 = transform(blocks, Y)
    xi1, beta, fit = engine.estimate_batch(z4)
    u = xi1 @ blocks.basis.H1 + blocks.xi0 @ blocks.basis.H2
    return u @ blocks.Q_neg_half, beta, fit


def _frame_blocks(model, spec, frame):
    return frame.blocks if frame is not None else build_blocks(model, spec)


def uc1_estimate(model: FayHerriotModel, spec: BenchmarkSpec, obs: Observation,
                 frame: CanonicalFrame | None = None) -> EstimateResult:
    if not isinstance(spec.target, WeightedDirect):
        raise ValueError("UC1 is defined for the weighted-direct target t(y) = W'y")
    blocks = _frame_blocks(model, spec, frame)
    engine = SubspaceEB(blocks.V11_2, blocks.X3)
    z3 = transform(blocks, obs.y)[2]
    mu, beta, _ = uc1_batch(blocks, obs.y[None, :], engine)
    fit = engine.estimate(z3)[2]
    return EstimateResult(mu[0], "UC1", fit, beta[0], _residual(spec, mu[0], obs.y))


def uc2_estimate(model: FayHerriotModel, spec: BenchmarkSpec, obs: Observation,
                 frame: CanonicalFrame | None = None) -> EstimateResult:
    if not isinstance(spec.target, FixedTarget):
        raise ValueError("UC2 is defined for a fixed target t(y) = t0")
    blocks = _frame_blocks(model, spec, frame)
    engine = SubspaceEB(blocks.V11_2, blocks.X4)
    z4 = transform(blocks, obs.y)[3]
    mu, beta, _ = uc2_batch(blocks, obs.y[None, :], engine)
    fit = engine.estimate(z4)[2]
    return EstimateResult(mu[0], "UC2", fit, beta[0], _residual(spec, mu[0], obs.y))
