"""
Benchmarked estimates for one small-area data set
==================================================

Simulate 15 areas, fit the Fay-Herriot model and compare the direct,
EB, constrained-direct (CM), constrained-EB (CEB) and UC1 estimates.
"""

import numpy as np

from fhbench import (
    BenchmarkSpec,
    Observation,
    ceb_estimate,
    cm_estimate,
    eb_estimate,
    uc1_estimate,
)
from fhbench.montecarlo import SimConfig, Setting

# a pattern-(b) design: five groups of three areas with increasing variance
setting = Setting(SimConfig(pattern="b", q="identity", seed=1))
model = setting.model
rng = np.random.default_rng(2)
mu = setting.mean + rng.standard_normal(model.k)
y = mu + np.sqrt(model.d) * rng.standard_normal(model.k)
obs = Observation(y)

# benchmark: the d-inverse weighted total of the estimates must equal that of y
spec = BenchmarkSpec((1 / model.d)[:, None], np.eye(model.k))

eb = eb_estimate(model, obs, spec)
cm = cm_estimate(model, spec, obs)
ceb = ceb_estimate(model, spec, obs)
uc1 = uc1_estimate(model, spec, obs)
print(f"lambda_hat = {eb.fit.lambda_hat:.4f}   beta_hat = {np.round(eb.beta_hat, 4)}")

print(f"{'area':>4} {'d':>5} {'y':>8} {'EB':>8} {'CEB':>8} {'UC1':>8} {'mu':>8}")
for i in range(model.k):
    print(f"{i:4d} {model.d[i]:5.2f} {y[i]:8.3f} {eb.mu_hat[i]:8.3f} "
          f"{ceb.mu_hat[i]:8.3f} {uc1.mu_hat[i]:8.3f} {mu[i]:8.3f}")

# EB misses the benchmark, the constrained versions hit it
for res in (eb, cm, ceb, uc1):
    print(f"{res.method:>4}: W'mu_hat - W'y = {res.constraint_residual[0]: .2e}   "
          f"loss = {np.sum((res.mu_hat - mu) ** 2):.3f}")
