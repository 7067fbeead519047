"""Sufficient and necessary conditions for benchmarked EB estimators to improve on y.

Every condition is an inequality ``lhs >= rhs``.  Eigenvalues of products of
two symmetric PSD matrices are taken on a symmetric congruent form, so the
spectra are real by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .canonical import build_blocks
from .estimators import _a_dense
from .model import BenchmarkSpec, FayHerriotModel, loss_reduced_QW

# Verdicts tolerate this relative slack so that exact ties (e.g. the balanced
# reduction at k - p = 2(m + 2)) are not decided by rounding noise.
VERDICT_RTOL = 1e-9

SUFFICIENT_CONDITIONAL = "sufficient-conditional"
SUFFICIENT_UNCONDITIONAL = "sufficient-unconditional-approx"
NECESSARY_UNCONDITIONAL = "necessary-unconditional-approx"


@dataclass(frozen=True)
class ConditionVerdict:
    name: str
    lhs: float
    rhs: float
    kind: str
    lambda_at_min: Optional[float] = None

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def satisfied(self) -> bool:
        return self.lhs >= self.rhs - VERDICT_RTOL * max(1.0, abs(self.rhs))

    @property
    def sign(self) -> str:
        return "+" if self.satisfied else "-"


def default_lambda_grid(n: int = 400) -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-4, 4, n)])


# ---------------------------------------------------------------------------
# spectral helpers
# ---------------------------------------------------------------------------

def _psd_root(P):
    w, U = np.linalg.eigh(0.5 * (P + P.T))
    return U * np.sqrt(np.clip(w, 0.0, None))


def product_eigenvalues(S: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Eigenvalues of S P for symmetric PSD S and P, via R'SR with P = RR'."""
    R = _psd_root(P)
    return np.linalg.eigvalsh(R.T @ S @ R)


def ch_max_product(S, P) -> float:
    return float(product_eigenvalues(S, P)[-1])


def _loss_matrix(spec: BenchmarkSpec, use_QW: bool) -> np.ndarray:
    return loss_reduced_QW(spec) if use_QW else spec.Q


def _sandwich(model, L):
    """D L D for the loss matrix L."""
    return model.d[:, None] * L * model.d[None, :]


def unconditional_rhs_factor(v: np.ndarray) -> float:
    """k tr[V^-2] / (tr[V^-1])^2 for the spectrum v of a covariance V."""
    inv = 1.0 / np.asarray(v, dtype=float)
    return float(v.size * np.sum(inv**2) / np.sum(inv) ** 2)


# ---------------------------------------------------------------------------
# CEB / EB conditions
# ---------------------------------------------------------------------------

def explicit_lhs(model: FayHerriotModel, spec: BenchmarkSpec, use_QW: bool = True) -> float:
    """max{tr[D^2 L]/(d_1 Ch_max(DL)), d_k tr[DL]/Ch_max(D^2 L)} with L = Q_W or Q."""
    L = _loss_matrix(spec, use_QW)
    d = model.d
    d1, dk = float(d.max()), float(d.min())
    ch_DL = ch_max_product(L, np.diag(d))  # DL ~ D^{1/2} L D^{1/2}
    ch_D2L = float(np.linalg.eigvalsh(_sandwich(model, L))[-1])  # D^2 L ~ D L D
    tr_D2L = float(np.sum(d**2 * np.diag(L)))
    tr_DL = float(np.sum(d * np.diag(L)))
    return max(tr_D2L / (d1 * ch_DL), dk * tr_DL / ch_D2L)


def sr_explicit(model: FayHerriotModel, spec: BenchmarkSpec, use_QW: bool = True) -> ConditionVerdict:
    k, p = model.k, model.p
    rhs = p + 2 + (k - p) / 2
    name = "SR[CB]" if use_QW else "SR[EB]"
    return ConditionVerdict(name, explicit_lhs(model, spec, use_QW), rhs, SUFFICIENT_CONDITIONAL)


def sr_uncond_explicit(model: FayHerriotModel, spec: BenchmarkSpec,
                       use_QW: bool = True) -> ConditionVerdict:
    rhs = model.p + 2 * unconditional_rhs_factor(model.d)
    name = "SRU[CB]" if use_QW else "SRU[EB]"
    return ConditionVerdict(name, explicit_lhs(model, spec, use_QW), rhs, SUFFICIENT_UNCONDITIONAL)


def _ratio(S, P):
    ev = product_eigenvalues(S, P)
    return float(np.sum(ev) / ev[-1])


def _minimize_ratio(f, grid):
    vals = np.array([f(l) for l in grid])
    i = int(np.argmin(vals))
    best_l, best_v = float(grid[i]), float(vals[i])
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * max(1.0, hi)})
        if res.success and res.fun < best_v:
            best_l, best_v = float(res.x), float(res.fun)
    return best_v, best_l


def ceb_ratio(model: FayHerriotModel, spec: BenchmarkSpec, lam: float, use_QW: bool = True) -> float:
    """tr[DLDA(lam)] / Ch_max(DLDA(lam))."""
    S = _sandwich(model, _loss_matrix(spec, use_QW))
    return _ratio(S, _a_dense(model.X, 1.0 / (model.d + lam)))


def uncond_ratio(model: FayHerriotModel, spec: BenchmarkSpec, lam: float, use_QW: bool = True) -> float:
    """tr[DLDV^{-1}(lam)] / Ch_max(DLDV^{-1}(lam))."""
    S = _sandwich(model, _loss_matrix(spec, use_QW))
    return _ratio(S, np.diag(1.0 / (model.d + lam)))


def sr_ceb_minform(model: FayHerriotModel, spec: BenchmarkSpec, lambda_grid=None,
                   use_QW: bool = True) -> ConditionVerdict:
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, float)
    lhs, lam = _minimize_ratio(lambda l: ceb_ratio(model, spec, l, use_QW), grid)
    rhs = (model.k - model.p) / 2 + 2
    return ConditionVerdict("SR-min[CB]" if use_QW else "SR-min[EB]", lhs, rhs,
                            SUFFICIENT_CONDITIONAL, lam)


def sr_uncond_minform(model: FayHerriotModel, spec: BenchmarkSpec, lambda_grid=None,
                      use_QW: bool = True) -> ConditionVerdict:
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, float)
    lhs, lam = _minimize_ratio(lambda l: uncond_ratio(model, spec, l, use_QW), grid)
    rhs = model.p + 2 * unconditional_rhs_factor(model.d)
    return ConditionVerdict("SRU-min[CB]" if use_QW else "SRU-min[EB]", lhs, rhs,
                            SUFFICIENT_UNCONDITIONAL, lam)


def delta_apr_terms(model: FayHerriotModel, spec: BenchmarkSpec, lam: float,
                    use_QW: bool = True):
    """The three terms of the second-order unconditional risk difference."""
    X, d, k = model.X, model.d, model.k
    S = _sandwich(model, _loss_matrix(spec, use_QW))
    v = 1.0 / (d + lam)
    t1 = -float(np.sum(np.diag(S) * v))
    VX = v[:, None] * X
    t2 = float(np.trace(np.linalg.solve(X.T @ VX, VX.T @ S @ VX)))
    t3 = float(np.sum(np.diag(S) * v**3)) * 2 * k / np.sum(v) ** 2
    return t1, t2, t3


def delta_apr(model: FayHerriotModel, spec: BenchmarkSpec, lam: float, use_QW: bool = True) -> float:
    return float(sum(delta_apr_terms(model, spec, lam, use_QW)))


def nr_uncond(model: FayHerriotModel, spec: BenchmarkSpec, use_QW: bool = True) -> ConditionVerdict:
    """tr[DL] >= tr[(X'D^{-1}X)^{-1} X'LX] + tr[L D^{-1}] 2k/(tr[D^{-1}])^2."""
    X, d, k = model.X, model.d, model.k
    L = _loss_matrix(spec, use_QW)
    lhs = float(np.sum(d * np.diag(L)))
    XtDi = X.T / d
    rhs = (float(np.trace(np.linalg.solve(XtDi @ X, X.T @ L @ X)))
           + float(np.sum(np.diag(L) / d)) * 2 * k / np.sum(1.0 / d) ** 2)
    return ConditionVerdict("NRU[CB]" if use_QW else "NRU[EB]", lhs, rhs, NECESSARY_UNCONDITIONAL)


# ---------------------------------------------------------------------------
# UC1 / UC2 conditions (Schur complement covariance)
# ---------------------------------------------------------------------------

def uc_lhs(V11_2: np.ndarray) -> float:
    ev = np.linalg.eigvalsh(V11_2)
    cmax, cmin = ev[-1], ev[0]
    return float(max(np.sum(ev**2) / cmax**2, cmin / cmax * np.sum(ev)))


def uc_conditions(V11_2: np.ndarray, Xr: np.ndarray, k: int, m: int, p: int,
                  label: str = "UC"):
    """(SR, SR^U, NR^U) verdicts for UC1 (Xr = X3) or UC2 (Xr = X4)."""
    del m  # the inequalities involve m only through V11_2's dimension
    ev = np.linalg.eigvalsh(V11_2)
    lhs = uc_lhs(V11_2)
    sr = ConditionVerdict(f"SR[{label}]", lhs, p + 2 + (k - p) / 2, SUFFICIENT_CONDITIONAL)
    inv = 1.0 / ev
    sru_rhs = p + 2 * k * np.sum(inv**2) / np.sum(inv) ** 2
    sru = ConditionVerdict(f"SRU[{label}]", lhs, float(sru_rhs), SUFFICIENT_UNCONDITIONAL)
    Vi_X = np.linalg.solve(V11_2, Xr)
    nr_rhs = (float(np.trace(np.linalg.solve(Xr.T @ Vi_X, Xr.T @ Xr)))
              + 2 * k / float(np.sum(inv)))
    nr = ConditionVerdict(f"NRU[{label}]", float(np.sum(ev)), nr_rhs, NECESSARY_UNCONDITIONAL)
    return sr, sru, nr


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

ESTIMATORS = ("EB", "CB", "UC1", "UC2")
CONDITIONS = ("SR", "SRU", "NRU")


@dataclass
class ConditionReport:
    """Verdicts keyed by (estimator, condition) for one model/benchmark setting."""

    verdicts: dict = field(default_factory=dict)
    label: str = ""

    def sign(self, estimator: str, condition: str) -> str:
        return self.verdicts[(estimator, condition)].sign

    def signs(self) -> dict:
        return {key: v.sign for key, v in self.verdicts.items()}

    def rows(self):
        for (est, cond), v in self.verdicts.items():
            yield {"setting": self.label, "estimator": est, "condition": cond,
                   "verdict": v.sign, "lhs": v.lhs, "rhs": v.rhs, "margin": v.margin}


def condition_report(model: FayHerriotModel, spec: BenchmarkSpec, label: str = "",
                     estimators=ESTIMATORS) -> ConditionReport:
    """All SR / SR^U / NR^U verdicts for one setting (explicit forms)."""
    out = {}
    if "EB" in estimators:
        out["EB", "SR"] = sr_explicit(model, spec, use_QW=False)
        out["EB", "SRU"] = sr_uncond_explicit(model, spec, use_QW=False)
        out["EB", "NRU"] = nr_uncond(model, spec, use_QW=False)
    if "CB" in estimators:
        out["CB", "SR"] = sr_explicit(model, spec)
        out["CB", "SRU"] = sr_uncond_explicit(model, spec)
        out["CB", "NRU"] = nr_uncond(model, spec)
    if "UC1" in estimators or "UC2" in estimators:
        blocks = build_blocks(model, BenchmarkSpec(spec.W, spec.Q))
        for name, Xr in (("UC1", blocks.X3), ("UC2", blocks.X4)):
            if name in estimators:
                sr, sru, nr = uc_conditions(blocks.V11_2, Xr, model.k, spec.m, model.p, name)
                out[name, "SR"], out[name, "SRU"], out[name, "NRU"] = sr, sru, nr
    return ConditionReport(out, label)


def condition_table(seed: int = 0, patterns=("a", "b", "c", "d"),
                    qs=("identity", "d-inverse"), estimators=ESTIMATORS, **overrides) -> dict:
    """Reports for every (q, pattern) simulation setting, keyed by (q, pattern)."""
    from .montecarlo import SimConfig, Setting

    out = {}
    for q in qs:
        for pat in patterns:
            setting = Setting(SimConfig(pattern=pat, q=q, seed=seed, **overrides))
            out[q, pat] = condition_report(setting.model, setting.spec("case1"),
                                           f"{q}/{pat}", estimators)
    return out


def nr_stability(pattern: str, q: str, draws: int = 100, seed: int = 0, **overrides) -> dict:
    """Fraction of random designs for which each NR^U condition holds."""
    from .montecarlo import SimConfig, Setting

    counts = {est: 0 for est in ESTIMATORS}
    for i in range(draws):
        setting = Setting(SimConfig(pattern=pattern, q=q, seed=seed + i, **overrides))
        rep = condition_report(setting.model, setting.spec("case1"))
        for est in ESTIMATORS:
            counts[est] += rep.verdicts[est, "NRU"].satisfied
    return {est: c / draws for est, c in counts.items()}
