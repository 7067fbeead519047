"""Command-line front end.

Subcommands: ``estimate``, ``check``, ``simulate`` and ``risk-curve``.
Exit codes: 0 success, 2 input error, 3 model validation error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import conditions, montecarlo
from .canonical import build_blocks
from .estimators import (
    ceb_estimate,
    cm_estimate,
    eb_estimate,
    uc1_estimate,
    uc2_estimate,
)
from .model import (
    BenchmarkSpec,
    FayHerriotModel,
    FixedTarget,
    NumericalError,
    Observation,
    ValidationError,
    WeightedDirect,
    validate,
)
from .reference_tables import reference_verdict

EXIT_OK, EXIT_INPUT, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4


class InputError(ValueError):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# input parsing
# ---------------------------------------------------------------------------

def read_area_csv(path):
    """Parse ``area_id,y,d,x1..xp[,w1..wm]``; returns (ids, y, d, X, W or None)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InputError(f"{path}: empty file") from None
    for col in ("area_id", "y", "d"):
        if col not in header:
            raise InputError(f"{path}:1: missing required column '{col}'")
    xcols = _numbered(header, "x")
    wcols = _numbered(header, "w")
    if not xcols:
        raise InputError(f"{path}:1: need at least one covariate column x1")
    ids, rows = [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
        row = dict(zip(header, (f.strip() for f in rec)))
        vals = []
        for col in ["y", "d"] + xcols + wcols:
            try:
                v = float(row[col])
            except ValueError:
                raise InputError(f"{path}:{lineno}: column '{col}' is not a number: {row[col]!r}") from None
            if not np.isfinite(v):
                raise InputError(f"{path}:{lineno}: column '{col}' is not finite")
            vals.append(v)
        ids.append(row["area_id"])
        rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    A = np.array(rows)
    p = len(xcols)
    y, d, X = A[:, 0], A[:, 1], A[:, 2:2 + p]
    W = A[:, 2 + p:] if wcols else None
    return ids, y, d, X, W


def _numbered(header, prefix):
    cols = []
    i = 1
    while f"{prefix}{i}" in header:
        cols.append(f"{prefix}{i}")
        i += 1
    return cols


def read_spec_json(path, d, W_csv):
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    k = d.size
    q = raw.get("Q", "identity")
    if q == "identity":
        Q = np.eye(k)
    elif q == "d-inverse":
        Q = np.diag(1.0 / d)
    elif isinstance(q, list):
        Q = np.asarray(q, dtype=float)
    else:
        raise InputError(f"{path}: Q must be 'identity', 'd-inverse' or a matrix")

    if W_csv is not None:
        W = W_csv
    else:
        w = raw.get("W")
        if w == "d-inverse":
            W = (1.0 / d)[:, None]
        elif w == "ones":
            W = np.ones((k, 1))
        elif isinstance(w, list):
            W = np.asarray(w, dtype=float)
            if W.ndim == 1:
                W = W[:, None]
        else:
            raise InputError(f"{path}: no w1..wm columns in the CSV and no usable 'W' entry")

    t = raw.get("target", "direct")
    if t == "direct":
        target = WeightedDirect()
    elif isinstance(t, dict) and "t0" in t:
        target = FixedTarget(t["t0"])
    else:
        raise InputError(f"{path}: target must be 'direct' or {{\"t0\": [...]}}")
    return BenchmarkSpec(W, Q, target)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_estimate(args) -> int:
    ids, y, d, X, W = read_area_csv(args.input)
    if args.spec is None:
        raise InputError("estimate requires --spec")
    model = FayHerriotModel(X, d)
    obs = Observation(y)
    spec = read_spec_json(args.spec, d, W)
    validate(model, spec, obs).raise_if_invalid()

    results = {"direct": None, "eb": eb_estimate(model, obs, spec),
               "cm": cm_estimate(model, spec, obs), "ceb": ceb_estimate(model, spec, obs)}
    try:
        build_blocks(model, spec)
        if isinstance(spec.target, WeightedDirect):
            results["uc1"] = uc1_estimate(model, spec, obs)
        else:
            results["uc2"] = uc2_estimate(model, spec, obs)
    except ValidationError as exc:
        print(f"note: UC estimator skipped ({exc})", file=sys.stderr)

    cols = {"direct": y}
    cols.update({name: r.mu_hat for name, r in results.items() if r is not None})
    meta = {
        "lambda_hat": results["eb"].fit.lambda_hat,
        "beta_hat": results["eb"].beta_hat.tolist(),
        "constraint_residual": {
            name: (spec.W.T @ mu - spec.target_value(y)).tolist() for name, mu in cols.items()
        },
    }
    for name in ("uc1", "uc2"):
        if name in results:
            meta[f"lambda_hat_{name}"] = results[name].fit.lambda_hat

    out = _open_out(args.out)
    if args.format == "json":
        json.dump({"areas": ids, "estimates": {n: v.tolist() for n, v in cols.items()}, **meta},
                  out, indent=2)
        out.write("\n")
    else:
        out.write(f"# lambda_hat={fmt(meta['lambda_hat'])}\n")
        out.write("# beta_hat=" + ";".join(fmt(b) for b in meta["beta_hat"]) + "\n")
        for name, res in meta["constraint_residual"].items():
            out.write(f"# constraint_residual.{name}=" + ";".join(fmt(r) for r in res) + "\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["area_id", *cols])
        for i, a in enumerate(ids):
            w.writerow([a, *(fmt(v[i]) for v in cols.values())])
    _close_out(out)
    return EXIT_OK


def _selection(args):
    if args.all:
        return tuple(montecarlo.PATTERNS), montecarlo.Q_CHOICES
    if args.pattern is None or args.q is None:
        raise InputError("choose --pattern and --q, or --all")
    patterns = tuple(montecarlo.PATTERNS) if args.pattern == "all" else (args.pattern,)
    qs = montecarlo.Q_CHOICES if args.q == "all" else (args.q,)
    return patterns, qs


def cmd_check(args) -> int:
    patterns, qs = _selection(args)
    table = conditions.condition_table(seed=args.seed, patterns=patterns, qs=qs)
    rows = []
    for (q, pat), rep in table.items():
        for (est, cond), v in rep.verdicts.items():
            rows.append({"q": q, "pattern": pat, "estimator": est, "condition": cond,
                         "verdict": v.sign, "lhs": v.lhs, "rhs": v.rhs, "margin": v.margin,
                         "reference": reference_verdict(q, pat, est, cond)})
    _write_rows(args, rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    patterns, qs = _selection(args)
    columns = montecarlo.RISK_TABLE_COLUMNS
    if args.case:
        case = {"1": "case1", "2": "case2", "2star": "case2star"}[args.case]
        columns = tuple(c for c in columns if c[1] in ("Direct", "EB") or c[2] == case)
    rows = []
    for q in qs:
        for pat in patterns:
            cfg = montecarlo.SimConfig(pattern=pat, q=q, seed=args.seed,
                                       replications=args.reps, workers=args.workers)
            row = montecarlo.risk_row(cfg, columns, keep_losses=False)
            for name, r in row.risks.items():
                rows.append({"q": q, "pattern": pat, "column": name, "mean": r.mean,
                             "stderr": r.stderr, "replications": r.replications,
                             "trace_QD": row.trace_QD})
    _write_rows(args, rows)
    return EXIT_OK


def risk_curve_grid(n: int = 400) -> np.ndarray:
    return np.concatenate([[0.0], np.logspace(-4, 4, n - 1)])


def cmd_risk_curve(args) -> int:
    if not args.pattern or args.pattern == "all" or args.q in (None, "all"):
        raise InputError("risk-curve needs a single --pattern and --q")
    setting = montecarlo.Setting(montecarlo.SimConfig(pattern=args.pattern, q=args.q, seed=args.seed))
    use_QW = args.estimator == "CB"
    rows = [{"lambda": lam,
             "delta_apr": conditions.delta_apr(setting.model, setting.spec("case1"), lam, use_QW)}
            for lam in risk_curve_grid()]
    _write_rows(args, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _open_out(path):
    if path is None or path == "-":
        return sys.stdout
    return open(path, "w", newline="")


def _close_out(out):
    if out is not sys.stdout:
        out.close()


def _write_rows(args, rows):
    out = _open_out(args.out)
    if args.format == "json":
        json.dump(rows, out, indent=2)
        out.write("\n")
    else:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(rows[0].keys())
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r.values()])
    _close_out(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fhbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=0)

    def selectors(p):
        p.add_argument("--pattern", choices=("a", "b", "c", "d", "all"))
        p.add_argument("--q", choices=("identity", "d-inverse", "all"))
        p.add_argument("--all", action="store_true", help="every pattern and Q")

    p = sub.add_parser("estimate", help="run the estimators on an area-level CSV")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--spec", required=True, help="benchmark spec JSON")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("check", help="evaluate improvement conditions")
    common(p)
    selectors(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="Monte Carlo unconditional risks")
    common(p)
    selectors(p)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--case", choices=("1", "2", "2star"))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("risk-curve", help="second-order risk difference over lambda")
    common(p)
    selectors(p)
    p.add_argument("--estimator", choices=("CB", "EB"), default="CB")
    p.set_defaults(func=cmd_risk_curve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
