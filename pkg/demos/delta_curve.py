"""
Second-order risk difference over lambda
========================================

Tabulate Delta_APR(lambda) for constrained EB against the constrained
direct estimator and compare with a Monte Carlo estimate at lambda = 1.
"""

import numpy as np

from fhbench.conditions import delta_apr, nr_uncond
from fhbench.montecarlo import SimConfig, Setting, delta_u_vs_apr

config = SimConfig(pattern="d", q="identity", seed=1, replications=20_000)
setting = Setting(config)
spec = setting.spec("case1")

for lam in np.concatenate([[0.0], np.logspace(-2, 3, 11)]):
    val = delta_apr(setting.model, spec, lam)
    bar = "#" * int(min(60, abs(val) * 4))
    print(f"lambda {lam:9.3f}  Delta_APR {val:+9.4f}  {bar}")

v = nr_uncond(setting.model, spec)
print(f"lambda = 0 check: rhs - lhs = {v.rhs - v.lhs:+.4f} ({v.sign})")

cmp = delta_u_vs_apr(config)
print(f"MC Delta^U = {cmp.delta_u:+.4f} +- {cmp.stderr:.4f}   approx {cmp.delta_apr:+.4f}")
