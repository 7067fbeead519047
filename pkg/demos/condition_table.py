"""
Which improvement conditions hold?
==================================

Evaluate the SR, SR^U and NR^U checks for EB, CB, UC1 and UC2 over the
eight (d-pattern, Q) settings and lay them out as a sign grid next to the
reference signs.
"""

from fhbench.conditions import condition_table
from fhbench.reference_tables import VERDICTS

table = condition_table(seed=1)

print("setting        computed        reference")
print("               EB  CB  UC1 UC2")
for (q, pattern), report in table.items():
    signs = "".join(report.sign(est, cond) for est in ("EB", "CB", "UC1", "UC2")
                    for cond in ("SR", "SRU", "NRU"))
    ref = VERDICTS[q, pattern]
    grouped = " ".join(signs[i:i + 3] for i in range(0, 12, 3))
    ref_grouped = " ".join(ref[i:i + 3] for i in range(0, 12, 3))
    flag = "" if signs == ref else "   <- differs"
    print(f"{q:>9}/{pattern}    {grouped}   {ref_grouped}{flag}")

# margins show how close each verdict is
report = table["d-inverse", "b"]
for (est, cond), v in report.verdicts.items():
    print(f"{est:>4} {cond:>4}: lhs {v.lhs:8.3f}  rhs {v.rhs:8.3f}  margin {v.margin:+8.3f}")
