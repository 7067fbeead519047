"""Simulation design and Monte Carlo risk evaluation.

The design follows the five-group layout with three areas per group: sampling
variances come from one of four patterns, covariate rows are correlated
normals, and regression coefficients are uniform on (1, 5).  ``X`` and
``beta`` are drawn once per seed; ``mu`` and ``y`` are redrawn every
replication.  All estimator columns of one setting share the same draws
(common random numbers).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import rng as rngmod
from .canonical import build_blocks
from .conditions import delta_apr
from .estimators import (
    SubspaceEB,
    constrain_batch,
    eb_batch,
    uc1_batch,
    uc2_batch,
)
from .model import (
    BenchmarkSpec,
    FayHerriotModel,
    FixedTarget,
    WeightedDirect,
    benchmark_adjustment,
    numerical_rank,
    weighted_loss,
)

PATTERNS = {
    "a": (0.5, 0.5, 0.4, 0.3, 0.3),
    "b": (0.7, 0.6, 0.5, 0.4, 0.3),
    "c": (2.0, 0.6, 0.5, 0.4, 0.2),
    "d": (4.0, 0.6, 0.5, 0.4, 0.1),
}
Q_CHOICES = ("identity", "d-inverse")
CASES = ("case1", "case2", "case2star")
ESTIMATORS = ("Direct", "EB", "CM", "CB", "UC1", "UC2")


def expand_pattern(pattern: str, areas_per_group: int = 3) -> np.ndarray:
    return np.repeat(np.asarray(PATTERNS[pattern], dtype=float), areas_per_group)


def gen_design(seed: int, k: int, p: int, rho: float = 0.2, max_tries: int = 100) -> np.ndarray:
    """Rows i.i.d. N_p(0, (1 - rho) I + rho J); redrawn until rank p."""
    cov = (1 - rho) * np.eye(p) + rho * np.ones((p, p))
    L = np.linalg.cholesky(cov)
    for attempt in range(max_tries):
        g = rngmod.stream(seed, rngmod.setting_key("design", k, p), attempt, rngmod.DESIGN)
        X = g.standard_normal((k, p)) @ L.T
        if numerical_rank(X) == p:
            return X
    raise RuntimeError("could not draw a full-rank design")


def gen_beta(seed: int, p: int) -> np.ndarray:
    g = rngmod.stream(seed, rngmod.setting_key("beta", p), 0, rngmod.BETA)
    return 1.0 + 4.0 * g.random(p)


@dataclass(frozen=True)
class SimConfig:
    pattern: str = "a"
    q: str = "identity"
    case: str = "case1"
    seed: int = 0
    replications: int = 10_000
    areas_per_group: int = 3
    p: int = 2
    lam: float = 1.0
    t0_scale: float = 3.0
    t0: tuple | None = None
    redraw_design: bool = False
    block_size: int = 1000
    workers: int = 1

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown d-pattern {self.pattern!r}")
        if self.q not in Q_CHOICES:
            raise ValueError(f"unknown Q choice {self.q!r}")
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")

    @property
    def k(self) -> int:
        return len(PATTERNS[self.pattern]) * self.areas_per_group

    @property
    def m(self) -> int:
        return 1


@dataclass(frozen=True)
class SimTruth:
    beta: np.ndarray
    lam: float
    mu: np.ndarray
    seed: int
    replication: int | None = None


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    stderr: float
    replications: int
    estimator: str

    @classmethod
    def from_losses(cls, losses, estimator: str) -> "RiskEstimate":
        losses = np.asarray(losses, dtype=float)
        n = losses.size
        # np.mean / np.std use pairwise summation in a fixed order
        return cls(float(np.mean(losses)), float(np.std(losses, ddof=1) / np.sqrt(n)), n, estimator)


class Setting:
    """A fully specified simulation setting: model, truth hyperparameters, specs."""

    def __init__(self, config: SimConfig, X=None, beta=None):
        self.config = config
        d = expand_pattern(config.pattern, config.areas_per_group)
        if X is None:
            X = gen_design(config.seed, config.k, config.p)
        if beta is None:
            beta = gen_beta(config.seed, config.p)
        self.model = FayHerriotModel(X, d)
        self.beta = np.asarray(beta, dtype=float)
        self.W = (1.0 / d)[:, None]
        self.Q = np.eye(config.k) if config.q == "identity" else np.diag(1.0 / d)
        if config.t0 is not None:
            self.t0 = np.atleast_1d(np.asarray(config.t0, dtype=float))
        else:
            # 3 W'X 1_p: one conformable reading of the benchmark target
            self.t0 = config.t0_scale * (self.W.T @ X).sum(axis=1)
        self.key = rngmod.setting_key(config.pattern, config.q, config.areas_per_group, config.p)

    @property
    def mean(self) -> np.ndarray:
        return self.model.X @ self.beta

    def spec(self, case: str) -> BenchmarkSpec:
        target = WeightedDirect() if case == "case1" else FixedTarget(self.t0)
        return BenchmarkSpec(self.W, self.Q, target)

    @cached_property
    def _restrict(self):
        W = self.W
        return W @ np.linalg.inv(W.T @ W)

    def restrict(self, MU):
        """Condition prior draws on W'mu = t0 (isotropic prior covariance)."""
        return MU - (MU @ self.W - self.t0) @ self._restrict.T

    @cached_property
    def blocks_case1(self):
        return build_blocks(self.model, self.spec("case1"))

    @cached_property
    def blocks_case2(self):
        return build_blocks(self.model, self.spec("case2"))

    @cached_property
    def uc1_engine(self):
        b = self.blocks_case1
        return SubspaceEB(b.V11_2, b.X3)

    @cached_property
    def uc2_engine(self):
        b = self.blocks_case2
        return SubspaceEB(b.V11_2, b.X4)

    @cached_property
    def adjust(self):
        return benchmark_adjustment(self.spec("case1"))

    # -- draws --------------------------------------------------------------

    def draw_block(self, block: int, n: int):
        """Standard-normal draws (U for mu, E for epsilon) of one block."""
        k = self.config.k
        U = rngmod.stream(self.config.seed, self.key, block, rngmod.MU).standard_normal((n, k))
        E = rngmod.stream(self.config.seed, self.key, block, rngmod.EPS).standard_normal((n, k))
        return U, E

    def mu_from_normals(self, U, case: str):
        MU = self.mean + np.sqrt(self.config.lam) * U
        if case == "case2star":
            MU = self.restrict(MU)
        return MU

    def y_from_normals(self, MU, E):
        return MU + np.sqrt(self.model.d) * E

    # -- estimators ----------------------------------------------------------

    def estimate(self, estimator: str, case: str, Y, cache=None):
        """Estimates for each row of Y; ``cache`` shares the EB fit across columns."""
        if cache is None:
            cache = {}
        spec = self.spec(case)
        if estimator == "Direct":
            return Y
        if estimator in ("EB", "CB"):
            if "EB" not in cache:
                cache["EB"] = eb_batch(Y, self.model.X, self.model.d)[0]
            if estimator == "EB":
                return cache["EB"]
            return constrain_batch(cache["EB"], Y, spec, self.adjust)
        if estimator == "CM":
            return constrain_batch(Y, Y, spec, self.adjust)
        if estimator == "UC1":
            if case != "case1":
                raise ValueError("UC1 requires Case 1 (t(y) = W'y)")
            return uc1_batch(self.blocks_case1, Y, self.uc1_engine)[0]
        if estimator == "UC2":
            if case == "case1":
                raise ValueError("UC2 requires Case 2 or Case 2* (t(y) = t0)")
            return uc2_batch(self.blocks_case2, Y, self.uc2_engine)[0]
        raise ValueError(f"unknown estimator {estimator!r}")


def draw_mu(setting: Setting, case: str, n: int = 1, block: int = 0) -> np.ndarray:
    """n prior draws of mu for the given case (rows)."""
    U, _ = setting.draw_block(block, n)
    return setting.mu_from_normals(U, case)


def draw_truth(config: SimConfig, replication: int = 0) -> SimTruth:
    setting = Setting(config)
    block, pos = divmod(replication, config.block_size)
    MU = draw_mu(setting, config.case, config.block_size, block)
    return SimTruth(setting.beta, config.lam, MU[pos], config.seed, replication)


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

def _blocks(reps: int, size: int):
    for b, start in enumerate(range(0, reps, size)):
        yield b, min(size, reps - start)


def _run_blocks(fn, reps, size, workers):
    jobs = list(_blocks(reps, size))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda j: fn(*j), jobs))
    else:
        parts = [fn(*j) for j in jobs]
    keys = parts[0].keys()
    return {key: np.concatenate([part[key] for part in parts]) for key in keys}


def simulate_losses(setting: Setting, columns, replications: int | None = None,
                    mu_fixed=None) -> dict:
    """Per-replication losses for each (estimator, case) column under CRN.

    With ``mu_fixed`` the prior draw is skipped and only y is redrawn
    (conditional risk); otherwise mu follows the prior for the column's case.
    """
    cfg = setting.config
    reps = cfg.replications if replications is None else replications
    block_size = cfg.block_size

    def run(block, n):
        U, E = setting.draw_block(block, block_size)
        U, E = U[:n], E[:n]
        out = {}
        per_case = {}
        for est, case in columns:
            mu_case = "case2star" if case == "case2star" else "case1"
            if mu_case not in per_case:
                if mu_fixed is not None:
                    MU = np.broadcast_to(np.asarray(mu_fixed, float), (n, cfg.k))
                else:
                    MU = setting.mu_from_normals(U, mu_case)
                per_case[mu_case] = (MU, setting.y_from_normals(MU, E), {})
            MU, Y, cache = per_case[mu_case]
            est_mu = setting.estimate(est, case, Y, cache)
            out[est, case] = weighted_loss(est_mu, MU, setting.Q)
        return out

    if cfg.redraw_design:
        return _simulate_redraw(setting, columns, reps)
    return _run_blocks(run, reps, block_size, cfg.workers)


def _simulate_redraw(setting: Setting, columns, reps):
    """Slow path: fresh X and beta in every replication."""
    cfg = setting.config
    out = {c: np.empty(reps) for c in columns}
    for r in range(reps):
        sub = Setting(replace(cfg, seed=rngmod.setting_key(cfg.seed, "rep", r), redraw_design=False))
        res = simulate_losses(sub, columns, replications=1)
        for c in columns:
            out[c][r] = res[c][0]
    return out


def unconditional_risk(estimator: str, config: SimConfig, setting: Setting | None = None) -> RiskEstimate:
    setting = setting or Setting(config)
    losses = simulate_losses(setting, [(estimator, config.case)])[estimator, config.case]
    return RiskEstimate.from_losses(losses, estimator)


def conditional_risk(estimator: str, mu, config: SimConfig,
                     setting: Setting | None = None) -> RiskEstimate:
    setting = setting or Setting(config)
    losses = simulate_losses(setting, [(estimator, config.case)], mu_fixed=mu)[estimator, config.case]
    return RiskEstimate.from_losses(losses, estimator)


def paired_difference(setting: Setting, first, second, replications=None, mu_fixed=None) -> RiskEstimate:
    """Risk difference of two columns evaluated on the same draws."""
    res = simulate_losses(setting, [first, second], replications, mu_fixed)
    return RiskEstimate.from_losses(res[first] - res[second], f"{first[0]}-{second[0]}")


def verify_decomposition(config: SimConfig, draws: int = 10_000, inner: str = "EB",
                         setting: Setting | None = None) -> float:
    """Max |L(mu, mu_C) - R1 - R2| over draws for the constrained version of ``inner``.

    R1 = (mu_hat - mu)' Q (I - P_W) (mu_hat - mu) and
    R2 = (t(y) - W'mu)' (W'Q^{-1}W)^{-1} (t(y) - W'mu).
    """
    setting = setting or Setting(config)
    _, R1, R2, L = decomposition_terms(setting, config.case, draws, inner)
    return float(np.max(np.abs(L - R1 - R2)))


def decomposition_terms(setting: Setting, case: str, draws: int, inner: str = "EB", mu_fixed=None):
    """(MU, R1, R2, L) arrays for ``draws`` replications of block 0 onwards."""
    spec = setting.spec(case)
    Q, W = spec.Q, spec.W
    QW = Q - W @ np.linalg.solve(W.T @ np.linalg.solve(Q, W), W.T)
    G = W.T @ np.linalg.solve(Q, W)
    MUs, R1s, R2s, Ls = [], [], [], []
    for b, n in _blocks(draws, setting.config.block_size):
        U, E = setting.draw_block(b, setting.config.block_size)
        U, E = U[:n], E[:n]
        if mu_fixed is not None:
            MU = np.broadcast_to(np.asarray(mu_fixed, float), (n, setting.config.k))
        else:
            MU = setting.mu_from_normals(U, "case2star" if case == "case2star" else "case1")
        Y = setting.y_from_normals(MU, E)
        inner_est = Y if inner in ("y", "Direct") else setting.estimate(inner, case, Y)
        muC = constrain_batch(inner_est, Y, spec)
        diff = inner_est - MU
        gap = spec.target_value(Y) - MU @ W
        MUs.append(MU)
        R1s.append(np.einsum("ri,ij,rj->r", diff, QW, diff))
        R2s.append(np.einsum("ri,ij,rj->r", gap, np.linalg.inv(G), gap))
        Ls.append(weighted_loss(muC, MU, Q))
    return (np.concatenate(MUs), np.concatenate(R1s), np.concatenate(R2s), np.concatenate(Ls))


@dataclass(frozen=True)
class DeltaComparison:
    k: int
    delta_u: float
    stderr: float
    delta_apr: float
    replications: int

    @property
    def gap_per_area(self) -> float:
        return abs(self.delta_u - self.delta_apr) / self.k


def delta_u_vs_apr(config: SimConfig, setting: Setting | None = None) -> DeltaComparison:
    """Empirical R^U(CEB) - R^U(CM) (paired) next to its second-order approximation."""
    setting = setting or Setting(config)
    case = config.case
    diff = paired_difference(setting, ("CB", case), ("CM", case))
    apr = delta_apr(setting.model, setting.spec(case), config.lam)
    return DeltaComparison(config.k, diff.mean, diff.stderr, apr, diff.replications)


# ---------------------------------------------------------------------------
# risk table
# ---------------------------------------------------------------------------

RISK_TABLE_COLUMNS = (
    ("y", "Direct", "case1"),
    ("EB", "EB", "case1"),
    ("CB|Case1", "CB", "case1"),
    ("UC1|Case1", "UC1", "case1"),
    ("CB|Case2", "CB", "case2"),
    ("UC2|Case2", "UC2", "case2"),
    ("CB|Case2*", "CB", "case2star"),
    ("UC2|Case2*", "UC2", "case2star"),
)


@dataclass
class RiskRow:
    pattern: str
    q: str
    risks: dict = field(default_factory=dict)
    losses: dict = field(default_factory=dict, repr=False)
    trace_QD: float = 0.0

    def paired(self, a: str, b: str) -> RiskEstimate:
        return RiskEstimate.from_losses(self.losses[a] - self.losses[b], f"{a}-{b}")


def risk_row(config: SimConfig, columns=RISK_TABLE_COLUMNS, keep_losses: bool = True) -> RiskRow:
    setting = Setting(config)
    res = simulate_losses(setting, [(e, c) for _, e, c in columns])
    row = RiskRow(config.pattern, config.q,
                  trace_QD=float(np.sum(np.diag(setting.Q) * setting.model.d)))
    for name, e, c in columns:
        row.risks[name] = RiskEstimate.from_losses(res[e, c], name)
        if keep_losses:
            row.losses[name] = res[e, c]
    return row


def risk_table(seed: int = 0, replications: int = 10_000, patterns=tuple(PATTERNS),
               qs=Q_CHOICES, workers: int = 1, keep_losses: bool = False, **overrides):
    """Risk table as a list of RiskRow, ordered by Q then pattern."""
    rows = []
    for q in qs:
        for pat in patterns:
            cfg = SimConfig(pattern=pat, q=q, seed=seed, replications=replications,
                            workers=workers, **overrides)
            rows.append(risk_row(cfg, keep_losses=keep_losses))
    return rows
