import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fhbench.model import BenchmarkSpec, FayHerriotModel, FixedTarget, Observation  # noqa: E402
from oracles import random_spd  # noqa: E402


def relerr(A, B):
    A, B = np.asarray(A, float), np.asarray(B, float)
    return np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300)


def random_instance(rng, k=8, p=2, m=1, q="random", target="direct"):
    X = rng.standard_normal((k, p))
    d = rng.uniform(0.2, 2.0, k)
    W = rng.standard_normal((k, m))
    if q == "random":
        Q = random_spd(k, rng)
    elif q == "identity":
        Q = np.eye(k)
    else:
        Q = np.diag(1.0 / d)
    mu = X @ rng.uniform(1, 5, p) + rng.standard_normal(k)
    y = mu + np.sqrt(d) * rng.standard_normal(k)
    if target == "direct":
        spec = BenchmarkSpec(W, Q)
    else:
        spec = BenchmarkSpec(W, Q, FixedTarget(rng.standard_normal(m) + W.T @ mu))
    return FayHerriotModel(X, d), spec, Observation(y)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
