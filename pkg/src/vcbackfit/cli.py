"""Command line interface: ``vcbackfit {fit,predict,bandwidth,simulate}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings

from .bandwidth import select_bandwidths
from .errors import VcBackfitError
from .grid import Grid
from .kernel import KERNELS
from .pipeline import (FitArtifact, ModelSpec, SplitSpec, enumerate_roles, evaluate_roles,
                       fit_model, ingest, predict, read_csv, response_values, rspe,
                       split_rows)
from .simulate import PRESETS, PluginPolicy, PopulationPolicy, preset_studies


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--grid", type=int, default=101, help="number of grid nodes (odd)")
    p.add_argument("--order", type=int, default=1, help="local polynomial order")
    p.add_argument("--kernel", default="epanechnikov", choices=sorted(KERNELS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-11, help="backfitting convergence tolerance")
    p.add_argument("--max-iter", type=int, default=200)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="vcbackfit",
                                     description="Smooth backfitting for varying-coefficient models.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", parents=[common], help="fit a model to a CSV file")
    fit.add_argument("data", help="CSV file with a header row")
    fit.add_argument("--model", required=True, help="YAML/JSON model description")
    fit.add_argument("--out", help="where to write the fit artifact (JSON)")
    fit.add_argument("--bandwidth", type=_floats, help="comma-separated bandwidths (default: plug-in)")
    fit.add_argument("--test-fraction", type=float,
                     help="hold out this fraction of rows and report the test RSPE")
    fit.add_argument("--test-index", help="file of 0-based test row indices")
    fit.add_argument("--strata", help="grouping column for proportional test allocation")
    fit.add_argument("--enumerate-roles", metavar="COLS",
                     help="comma-separated candidate columns; fit every (x, z) pairing after "
                          "the model's first term and report test RSPE")

    pred = sub.add_parser("predict", parents=[common], help="predict from a fit artifact")
    pred.add_argument("artifact")
    pred.add_argument("data")
    pred.add_argument("--out", help="prediction CSV (default: stdout)")
    pred.add_argument("--strict", action="store_true", help="reject x outside the training range")

    bw = sub.add_parser("bandwidth", parents=[common], help="rule-of-thumb bandwidths")
    bw.add_argument("data")
    bw.add_argument("--model", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo study presets")
    sim.add_argument("--preset", required=True, choices=sorted(PRESETS))
    sim.add_argument("--reps", type=int, default=100)
    sim.add_argument("--sizes", type=lambda s: [int(v) for v in s.split(",")])
    sim.add_argument("--policy", choices=("population", "plugin"), default="population")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--rows", help="write machine-readable rows (JSON) here")
    return parser


def _split(args, nrows, table):
    split = SplitSpec(test_fraction=args.test_fraction or 0.2, strata=args.strata, seed=args.seed,
                      test_index_file=args.test_index)
    groups = table[args.strata] if args.strata else None
    return split, split_rows(nrows, split, groups)


def cmd_fit(args) -> int:
    table = read_csv(args.data)
    spec = ModelSpec.load(args.model)
    fit_kw = dict(h=args.bandwidth, order=args.order, kernel=args.kernel, grid_size=args.grid,
                  tol=args.tol, max_iter=args.max_iter)
    if args.enumerate_roles:
        cands = [c.strip() for c in args.enumerate_roles.split(",")]
        models = enumerate_roles(spec.response, spec.terms[0], cands, spec.transforms)
        split, _ = _split(args, table.nrows, table)
        fit_kw.pop("h")
        rows = evaluate_roles(table, models, split, **fit_kw)
        for r in rows:
            val = "N/A" if r["rspe"] is None else f"{r['rspe']:.4f}"
            print(f"{r['model']:>3}  {' + '.join(r['terms']):<48} {val:>8} {r['reason']}")
        return 0
    if args.test_fraction or args.test_index:
        _, (train_rows, test_rows) = _split(args, table.nrows, table)
        art = fit_model(table.take(train_rows), spec, **fit_kw)
        test = table.take(test_rows)
        yhat = predict(art, test)
        art.diagnostics["test_rspe"] = rspe(yhat, response_values(test, spec))
    else:
        art = fit_model(table, spec, **fit_kw)
    d = art.diagnostics
    print(f"converged={d['converged']} sweeps={d['iterations']} n={d['n']}")
    print("bandwidths: " + ", ".join(f"{h:.4f}" for h in art.bandwidths))
    for msg in d.get("bandwidth", []):
        print("note: " + msg)
    if "test_rspe" in d:
        print(f"test RSPE: {d['test_rspe']:.4f}")
    if args.out:
        art.save(args.out)
    return 0


def cmd_predict(args) -> int:
    art = FitArtifact.load(args.artifact)
    yhat = predict(art, read_csv(args.data), strict=args.strict)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["prediction"])
        for v in yhat:
            w.writerow([repr(float(v))])
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_bandwidth(args) -> int:
    spec = ModelSpec.load(args.model)
    data = ingest(read_csv(args.data), spec).data
    res = select_bandwidths(data, args.kernel, args.order)
    print(f"{'term':<28}{'c_opt':>10}{'h':>10}")
    for t, row in zip(spec.terms, res.as_rows()):
        print(f"{t.label:<28}{row['c_opt']:>10.4f}{row['h']:>10.4f}")
    for msg in res.diagnostics:
        print("note: " + msg)
    return 0


def cmd_simulate(args) -> int:
    policy = PopulationPolicy() if args.policy == "population" else PluginPolicy()
    reports = preset_studies(args.preset, args.reps, seed=args.seed, sizes=args.sizes,
                             bandwidth_policy=policy, kernel=args.kernel, order=args.order,
                             grid=Grid(args.grid), tol=args.tol, max_iter=args.max_iter,
                             workers=args.workers)
    rows = []
    for rep in reports:
        print(rep.to_text())
        print()
        rows += rep.to_rows()
    if args.rows:
        with open(args.rows, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "bandwidth": cmd_bandwidth,
            "simulate": cmd_simulate}


def _short_warning(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.formatwarning = _short_warning
    try:
        return COMMANDS[args.command](args)
    except (VcBackfitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
