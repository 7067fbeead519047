"""Fay-Herriot model containers, benchmark specification and shared projections."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

RANK_RTOL = 1e-10


class ValidationError(ValueError):
    """Raised when a model or benchmark specification violates its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails (e.g. root not bracketed)."""


def numerical_rank(A: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def sym_power(S: np.ndarray, power: float) -> np.ndarray:
    """Symmetric matrix power via eigendecomposition (S must be SPD)."""
    w, U = np.linalg.eigh(S)
    return (U * w**power) @ U.T


@dataclass(frozen=True)
class FayHerriotModel:
    """Design matrix ``X`` (k x p) and known sampling variances ``d``."""

    X: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float).ravel())

    @property
    def k(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d)


@dataclass(frozen=True)
class Observation:
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).ravel())


@dataclass(frozen=True)
class WeightedDirect:
    """Benchmark target t(y) = W'y."""

    def value(self, W: np.ndarray, y: np.ndarray) -> np.ndarray:
        return W.T @ y


@dataclass(frozen=True)
class FixedTarget:
    """Benchmark target t(y) = t0, a constant vector."""

    t0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t0", np.atleast_1d(np.asarray(self.t0, dtype=float)))

    def value(self, W: np.ndarray, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.ndim == 2:
            return np.broadcast_to(self.t0, (y.shape[0], self.t0.size)).copy()
        return self.t0.copy()


Target = Union[WeightedDirect, FixedTarget]


@dataclass(frozen=True)
class BenchmarkSpec:
    """Benchmark weights ``W`` (k x m), loss matrix ``Q`` and target rule."""

    W: np.ndarray
    Q: np.ndarray
    target: Target = field(default_factory=WeightedDirect)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Q", np.asarray(self.Q, dtype=float))

    @property
    def m(self) -> int:
        return self.W.shape[1]

    @property
    def k(self) -> int:
        return self.W.shape[0]

    def target_value(self, y: np.ndarray) -> np.ndarray:
        """t(y); for a (R, k) batch of observations returns (R, m)."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 2:
            if isinstance(self.target, WeightedDirect):
                return y @ self.W
            return self.target.value(self.W, y)
        return self.target.value(self.W, y)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ValidationError(self.violations)


def validate(model: FayHerriotModel, spec: BenchmarkSpec | None = None,
             obs: Observation | None = None) -> ValidationReport:
    """Collect every invariant violation instead of stopping at the first one."""
    v = []
    k, p = model.k, model.p
    if k < 1:
        v.append("k must be at least 1")
    if not 1 <= p < k:
        v.append(f"need 1 <= p < k, got p={p}, k={k}")
    if model.d.shape != (k,):
        v.append(f"sampling variances have length {model.d.size}, expected {k}")
    elif not np.all(np.isfinite(model.d)) or np.any(model.d <= 0):
        v.append("nonpositive sampling variance")
    if not np.all(np.isfinite(model.X)):
        v.append("X has non-finite entries")
    elif p >= 1 and numerical_rank(model.X) < p:
        v.append("X rank-deficient")

    if obs is not None:
        if obs.y.shape != (k,):
            v.append(f"y has length {obs.y.size}, expected {k}")
        elif not np.all(np.isfinite(obs.y)):
            v.append("y has non-finite entries")

    if spec is not None:
        W, Q = spec.W, spec.Q
        m = spec.m
        if W.shape[0] != k:
            v.append(f"W has {W.shape[0]} rows, expected {k}")
        elif not np.all(np.isfinite(W)):
            v.append("W has non-finite entries")
        elif m >= k:
            v.append(f"need m < k, got m={m}")
        elif numerical_rank(W) < m:
            v.append("W rank-deficient")
        if Q.shape != (k, k):
            v.append(f"Q has shape {Q.shape}, expected {(k, k)}")
        elif not np.allclose(Q, Q.T, rtol=1e-12, atol=1e-12 * np.abs(Q).max()):
            v.append("Q not symmetric")
        else:
            try:
                np.linalg.cholesky(Q)
            except np.linalg.LinAlgError:
                v.append("Q not positive definite")
        if isinstance(spec.target, FixedTarget) and spec.target.t0.shape != (m,):
            v.append(f"t0 has length {spec.target.t0.size}, expected m={m}")
    return ValidationReport(v)


def _gram_inverse(spec: BenchmarkSpec):
    Qinv_W = np.linalg.solve(spec.Q, spec.W)
    G = spec.W.T @ Qinv_W
    return Qinv_W, G


def projection_PW(spec: BenchmarkSpec) -> np.ndarray:
    """Q-orthogonal projector onto span(Q^{-1}W): Q^{-1}W (W'Q^{-1}W)^{-1} W'."""
    Qinv_W, G = _gram_inverse(spec)
    return Qinv_W @ np.linalg.solve(G, spec.W.T)


def loss_reduced_QW(spec: BenchmarkSpec) -> np.ndarray:
    """Q - W (W'Q^{-1}W)^{-1} W', the loss matrix restricted to the free directions."""
    _, G = _gram_inverse(spec)
    QW = spec.Q - spec.W @ np.linalg.solve(G, spec.W.T)
    return 0.5 * (QW + QW.T)


def benchmark_adjustment(spec: BenchmarkSpec) -> np.ndarray:
    """k x m matrix Q^{-1}W(W'Q^{-1}W)^{-1} mapping a constraint gap to a correction."""
    Qinv_W, G = _gram_inverse(spec)
    return np.linalg.solve(G.T, Qinv_W.T).T


def weighted_loss(muhat, mu, Q) -> float | np.ndarray:
    """(muhat - mu)' Q (muhat - mu); rows are treated as replications for 2-D input."""
    diff = np.asarray(muhat, dtype=float) - np.asarray(mu, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if diff.shape[-1] != Q.shape[0]:
        raise ValueError(f"dimension mismatch: {diff.shape[-1]} vs Q {Q.shape}")
    if diff.ndim == 1:
        return float(diff @ Q @ diff)
    return np.einsum("ri,ij,rj->r", diff, Q, diff)


def q_identity(model: FayHerriotModel) -> np.ndarray:
    return np.eye(model.k)


def q_d_inverse(model: FayHerriotModel) -> np.ndarray:
    return np.diag(1.0 / model.d)


def w_d_inverse(model: FayHerriotModel) -> np.ndarray:
    """Weights D^{-1} j used by the simulation design."""
    return (1.0 / model.d)[:, None]
