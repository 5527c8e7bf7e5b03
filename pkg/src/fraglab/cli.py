"""Command-line entry point ``fraglab``.

Exit codes: 0 ok, 1 usage or configuration error, 2 numeric failure,
3 selftest failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys

import numpy as np

from fraglab import fragproc, harness, theory, urn
from fraglab.models import make_model, parse_params

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_SELFTEST = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _experiment_flags(p, default_model=None):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--model", default=default_model)
    p.add_argument("--param", help="model parameters, e.g. a=0.5,b=1")
    p.add_argument("--k", type=int)
    p.add_argument("--n-grid", help="start:stop:factor or a comma list")
    p.add_argument("--replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--policy", choices=["consecutive", "random_disjoint"])
    p.add_argument("--generator")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)


def _model_flags(p):
    p.add_argument("--model", required=True, help="dirichlet, betatype, ford or stable")
    p.add_argument("--param")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fraglab", description="Ancestor counts in fragmentation trees.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-stats", help="replicate N_n(k) on a tree model over an n-grid")
    _experiment_flags(p)
    p = sub.add_parser("urn", help="replicate occupancy counts of a Karlin urn")
    _experiment_flags(p, default_model="zipf")

    p = sub.add_parser("constants", help="regime and limit constants")
    p.add_argument("--model", required=True)
    p.add_argument("--param")
    p.add_argument("--k", type=int, default=2)

    p = sub.add_parser("area", help="Monte Carlo mean area E[A_k]")
    _model_flags(p)
    p.add_argument("--replicas", type=int, default=10000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--eps", type=float, default=fragproc.DEFAULT_EPS)

    p = sub.add_parser("gk", help="Monte Carlo g_k(x) and its small-x normalisation")
    _model_flags(p)
    p.add_argument("--x", default="1e-3,1e-6", help="comma list of points in (0, 1)")
    p.add_argument("--replicas", type=int, default=10000)
    p.add_argument("--eps", type=float, default=fragproc.DEFAULT_EPS)

    p = sub.add_parser("fit", help="scaling fit of a gen-stats CSV against theory")
    p.add_argument("csv")
    p.add_argument("--min-n", type=float, default=0)
    p.add_argument("--out")

    sub.add_parser("selftest", help="small-scale invariant suite (< 60 s)")
    return ap


def _emit(text, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _rows_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _config(args) -> harness.ExperimentConfig:
    items = harness.read_config_file(args.config) if args.config else {}
    for key in ("model", "param", "k", "n_grid", "replicas", "seed", "policy", "generator", "out", "workers"):
        value = getattr(args, key)
        if value is not None:
            items[key] = value
    return harness.ExperimentConfig.from_mapping(items)


def cmd_experiment(args, urn_only=False):
    cfg = _config(args)
    if urn_only and cfg.generator != "urn":
        raise UsageError(f"urn needs an urn law (zipf or geometric), got {cfg.model!r}")
    table = harness.run_experiment(
        cfg, progress=lambda n, s: print(f"n={n} done in {s:.1f}s", file=sys.stderr)
    )
    if not cfg.out:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


def cmd_constants(args):
    model = make_model(args.model, args.param)
    pred = theory.classify(model, args.k)
    print(f"model          {model.label()}")
    print(f"gamma          {model.gamma!r}")
    print(f"c_nu           {model.c_nu!r}")
    print(f"phi'(0+)       {theory.phi_prime0(model)!r}")
    print(f"regime         {pred.regime} (k={args.k})")
    norm = f"n^{pred.exponent:g}" + (" log n" if pred.log_correction else "")
    kind = "mean of the random limit" if pred.random_limit else "limit"
    print(f"N_n / {norm:<9} {kind} {pred.constant!r}")
    for r, c in enumerate(pred.multiplicity, 1):
        print(f"N_n,{r} / {norm:<7} {c!r}   ratio to N_n {pred.ratio_target(r)!r}")
    return EXIT_OK


def cmd_area(args):
    model = make_model(args.model, args.param)
    rng = harness.replica_rng(args.seed, 0, 0)
    est = fragproc.area_estimate(model, args.k, args.replicas, rng, tol=args.tol, eps=args.eps)
    target = theory.expected_area(model, args.k)
    z = (est.mean - target) / est.stderr if est.stderr > 0 else math.nan
    _emit(_rows_csv(["model", "k", "x", "estimate", "stderr", "theory_value", "z_score"],
                    [[model.label(), args.k, "", est.mean, est.stderr, target, z]]), args.out)
    return EXIT_OK


def cmd_gk(args):
    model = make_model(args.model, args.param)
    rows = []
    for i, x in enumerate(float(v) for v in args.x.split(",")):
        rng = harness.replica_rng(args.seed, i, 0)
        est = fragproc.gk_estimate(model, args.k, x, args.replicas, rng, eps=args.eps)
        _, mult, limit = fragproc.gk_normalisation(model, args.k, x)
        value, se = est.mean * mult, est.stderr * mult
        z = (value - limit) / se if se > 0 else math.nan
        rows.append([model.label(), args.k, x, value, se, limit, z])
    _emit(_rows_csv(["model", "k", "x", "estimate", "stderr", "theory_value", "z_score"], rows), args.out)
    return EXIT_OK


def cmd_fit(args):
    rows = [r for r in harness.read_csv(args.csv) if r["n"] >= args.min_n]
    if not rows:
        raise UsageError("no rows to fit")
    first = rows[0]
    cfg = harness.ExperimentConfig(first["model"], parse_params(first["params"]), k=int(first["k"]),
                                   n_grid=tuple(int(r["n"]) for r in rows))
    pred = cfg.prediction()
    fit = harness.fit_scaling(rows, pred)
    out = [["regime", fit.regime], ["exponent", fit.exponent], ["exponent_se", fit.exponent_se],
           ["predicted_exponent", fit.predicted_exponent], ["constant", fit.constant],
           ["constant_se", fit.constant_se], ["predicted_constant", fit.predicted_constant],
           ["rel_dev", fit.rel_dev], ["z_score", fit.z_score]]
    last = rows[-1]
    for r in range(1, harness.R_MAX + 1):
        out.append([f"ratio_Nr_{r}_at_n={int(last['n'])}", last[f"mean_Nr_{r}"] / last["mean_N"]])
        out.append([f"ratio_Nr_{r}_target", pred.ratio_target(r)])
    _emit(_rows_csv(["quantity", "value"], out), args.out)
    return EXIT_OK


def cmd_selftest(args):
    report = harness.selftest()
    for line in report.lines():
        print(line)
    print("selftest passed" if report.ok else "selftest FAILED")
    return EXIT_OK if report.ok else EXIT_SELFTEST


COMMANDS = {
    "gen-stats": cmd_experiment,
    "urn": lambda a: cmd_experiment(a, urn_only=True),
    "constants": cmd_constants,
    "area": cmd_area,
    "gk": cmd_gk,
    "fit": cmd_fit,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fraglab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (urn.TruncationError, theory.QuadratureError, harness.ExperimentError,
            ArithmeticError, RuntimeError) as exc:
        print(f"fraglab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"fraglab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
