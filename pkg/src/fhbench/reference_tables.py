"""Reference values reported for the original simulation design (k = 15, lambda = 1).

``RISKS`` maps (q, pattern) to the eight risk-table columns.
``VERDICTS`` maps (q, pattern) to a 12-character string of '+'/'-' laid out as
EB(SR, SRU, NRU), CB(...), UC1(...), UC2(...).
"""

RISK_COLUMNS = ("y", "EB", "CB|Case1", "UC1|Case1", "CB|Case2", "UC2|Case2",
                "CB|Case2*", "UC2|Case2*")

RISKS = {
    ("identity", "a"): (6.00, 4.76, 4.84, 4.88, 9.24, 9.40, 4.48, 4.64),
    ("identity", "b"): (7.51, 5.53, 5.63, 5.70, 9.68, 9.90, 5.22, 5.45),
    ("identity", "c"): (11.05, 6.40, 6.45, 6.65, 7.22, 7.41, 6.15, 6.34),
    ("identity", "d"): (16.88, 6.60, 6.61, 7.26, 14.60, 19.92, 6.47, 11.79),
    ("d-inverse", "a"): (14.93, 11.92, 12.02, 12.28, 38.88, 39.14, 11.02, 11.28),
    ("d-inverse", "b"): (14.99, 11.49, 11.72, 11.87, 13.17, 13.31, 10.74, 10.89),
    ("d-inverse", "c"): (14.99, 10.90, 11.05, 11.76, 13.47, 14.17, 10.09, 10.80),
    ("d-inverse", "d"): (14.99, 10.57, 10.68, 12.07, 26.91, 28.30, 9.70, 11.09),
}

VERDICTS = {
    ("identity", "a"): "-++" "-++" "-++" "-++",
    ("identity", "b"): "-++" "-++" "-++" "-++",
    ("identity", "c"): "--+" "--+" "--+" "--+",
    ("identity", "d"): "--+" "--+" "--+" "--+",
    ("d-inverse", "a"): "+++" "-++" "+++" "+++",
    ("d-inverse", "b"): "-++" "-++" "+++" "+++",
    ("d-inverse", "c"): "--+" "--+" "+++" "+++",
    ("d-inverse", "d"): "--+" "--+" "+++" "+++",
}


def reference_verdict(q: str, pattern: str, estimator: str, condition: str) -> str:
    est = ("EB", "CB", "UC1", "UC2").index(estimator)
    cond = ("SR", "SRU", "NRU").index(condition)
    return VERDICTS[q, pattern][3 * est + cond]
