"""
Unconditional risks by Monte Carlo
==================================

Simulate the eight settings with common random numbers and print a risk
table with standard errors. Reduce REPS for a quick look.
"""

import time

from fhbench.montecarlo import RISK_TABLE_COLUMNS, risk_table

REPS = 10_000

start = time.perf_counter()
rows = risk_table(seed=1, replications=REPS, workers=4, keep_losses=True)
names = [c[0] for c in RISK_TABLE_COLUMNS]

print(f"{'setting':>12} " + " ".join(f"{n:>11}" for n in names))
for row in rows:
    cells = " ".join(f"{row.risks[n].mean:6.2f}({row.risks[n].stderr:.2f})" for n in names)
    print(f"{row.q:>10}/{row.pattern} {cells}")

# paired comparisons share draws, so their stderr is much smaller
row = rows[0]
for a, b in (("EB", "y"), ("CB|Case1", "EB"), ("UC1|Case1", "CB|Case1")):
    diff = row.paired(a, b)
    print(f"{a} - {b}: {diff.mean:+.4f} +- {diff.stderr:.4f}")
print(f"elapsed {time.perf_counter() - start:.1f}s")
