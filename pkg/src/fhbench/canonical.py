"""Orthogonal canonical frame that separates constrained and free directions.

Rows of ``H2`` span the column space of ``Q^{-1/2} W``; rows of ``H1`` span its
orthogonal complement.  In the rotated coordinates ``z = H Q^{1/2} y`` the
benchmark constraint only touches ``z2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    BenchmarkSpec,
    FayHerriotModel,
    FixedTarget,
    Observation,
    ValidationError,
    numerical_rank,
    sym_power,
)


@dataclass(frozen=True)
class CanonicalBasis:
    H1: np.ndarray  # (k-m) x k
    H2: np.ndarray  # m x k

    @property
    def H(self) -> np.ndarray:
        return np.vstack([self.H1, self.H2])


def build_basis(spec: BenchmarkSpec, method: str = "svd", rng=None) -> CanonicalBasis:
    """Build an orthogonal basis adapted to span(Q^{-1/2} W).

    ``method`` is ``"svd"`` (default) or ``"qr"``; the two orthonormalize in a
    different order and generally return different rows.  Passing ``rng``
    additionally applies a random rotation inside each subspace.  Any of these
    are valid bases; downstream estimators do not depend on the choice.
    """
    m, k = spec.m, spec.k
    B = sym_power(spec.Q, -0.5) @ spec.W
    if method == "svd":
        U, _, _ = np.linalg.svd(B, full_matrices=True)
    elif method == "qr":
        U, _ = np.linalg.qr(np.hstack([B, np.eye(k)]), mode="complete")
    else:
        raise ValueError(f"unknown basis method {method!r}")
    H2 = U[:, :m].T
    H1 = U[:, m:].T
    if rng is not None:
        H1 = _random_orthogonal(k - m, rng) @ H1
        H2 = _random_orthogonal(m, rng) @ H2
    return CanonicalBasis(H1=H1, H2=H2)


def _random_orthogonal(n: int, rng) -> np.ndarray:
    Z = rng.standard_normal((n, n))
    Qm, R = np.linalg.qr(Z)
    return Qm * np.sign(np.diag(R))


@dataclass(frozen=True)
class CanonicalBlocks:
    """Observation-free parts of the canonical frame.

    Holds the covariance blocks of ``H Q^{1/2} D Q^{1/2} H'``, the Schur
    complement ``V11_2``, the regressors ``X3``/``X4`` and (for a fixed
    target) the anchor ``xi0``.  Shared by every replication of a simulation.
    """

    basis: CanonicalBasis
    Q_half: np.ndarray
    Q_neg_half: np.ndarray
    V11: np.ndarray
    V12: np.ndarray
    V22: np.ndarray
    V11_2: np.ndarray
    gain: np.ndarray  # V12 V22^{-1}
    X3: np.ndarray
    X4: np.ndarray
    xi0: Optional[np.ndarray]

    @property
    def free_dim(self) -> int:
        return self.V11.shape[0]


def build_blocks(model: FayHerriotModel, spec: BenchmarkSpec,
                 basis: CanonicalBasis | None = None,
                 check_rank: bool = True) -> CanonicalBlocks:
    if basis is None:
        basis = build_basis(spec)
    H1, H2 = basis.H1, basis.H2
    Qh = sym_power(spec.Q, 0.5)
    Qnh = sym_power(spec.Q, -0.5)
    H = basis.H
    S = Qh * model.d[None, :] @ Qh
    V = H @ S @ H.T
    V = 0.5 * (V + V.T)
    r = H1.shape[0]
    V11, V12, V22 = V[:r, :r], V[:r, r:], V[r:, r:]
    gain = np.linalg.solve(V22, V12.T).T
    V11_2 = V11 - gain @ V12.T
    V11_2 = 0.5 * (V11_2 + V11_2.T)
    X3 = (H1 - gain @ H2) @ Qh @ model.X
    X4 = H1 @ Qh @ model.X

    p = model.p
    if check_rank:
        if numerical_rank(X3) < p:
            raise ValidationError(["X3 = (H1 - V12 V22^{-1} H2) Q^{1/2} X is not of rank p"])
        if numerical_rank(X4) < p:
            raise ValidationError(["X4 = H1 Q^{1/2} X is not of rank p"])

    xi0 = None
    if isinstance(spec.target, FixedTarget):
        M = spec.W.T @ Qnh @ H2.T
        if numerical_rank(M) < spec.m:
            raise ValidationError(["W' Q^{-1/2} H2' is singular"])
        xi0 = np.linalg.solve(M, spec.target.t0)
    return CanonicalBlocks(basis, Qh, Qnh, V11, V12, V22, V11_2, gain, X3, X4, xi0)


@dataclass(frozen=True)
class CanonicalFrame:
    blocks: CanonicalBlocks
    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    z4: Optional[np.ndarray]

    # Convenience pass-throughs so a frame reads like the flat record it is.
    @property
    def basis(self) -> CanonicalBasis:
        return self.blocks.basis

    @property
    def V11(self):
        return self.blocks.V11

    @property
    def V12(self):
        return self.blocks.V12

    @property
    def V22(self):
        return self.blocks.V22

    @property
    def V11_2(self):
        return self.blocks.V11_2

    @property
    def X3(self):
        return self.blocks.X3

    @property
    def X4(self):
        return self.blocks.X4

    @property
    def xi0(self):
        return self.blocks.xi0


def transform(blocks: CanonicalBlocks, y: np.ndarray):
    """Return (z1, z2, z3, z4) for a single y or a (R, k) batch (rows)."""
    y = np.asarray(y, dtype=float)
    u = y @ blocks.Q_half  # Q^{1/2} symmetric
    z1 = u @ blocks.basis.H1.T
    z2 = u @ blocks.basis.H2.T
    z3 = z1 - z2 @ blocks.gain.T
    z4 = None
    if blocks.xi0 is not None:
        z4 = z1 - (z2 - blocks.xi0) @ blocks.gain.T
    return z1, z2, z3, z4


def build_frame(model: FayHerriotModel, spec: BenchmarkSpec, obs: Observation,
                basis: CanonicalBasis | None = None) -> CanonicalFrame:
    blocks = build_blocks(model, spec, basis)
    z1, z2, z3, z4 = transform(blocks, obs.y)
    return CanonicalFrame(blocks, z1, z2, z3, z4)


def canonical_parameters(blocks: CanonicalBlocks, mu: np.ndarray):
    """Parameter-side images xi_i = H_i Q^{1/2} mu and xi3 (diagnostics only)."""
    u = np.asarray(mu, dtype=float) @ blocks.Q_half
    xi1 = u @ blocks.basis.H1.T
    xi2 = u @ blocks.basis.H2.T
    xi3 = xi1 - xi2 @ blocks.gain.T
    return xi1, xi2, xi3
