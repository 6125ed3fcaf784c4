"""Command-line front end: ``tvtp simulate | fit | mc | mixing-check``.

Exit codes: 0 success, 1 mixing-check found bound violations, 2 input or
validation error, 3 numerical non-convergence, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .estimate import fit
from .exceptions import DomainError, EstimationError, NumericError, SizeError
from .io import InputError, RunConfig, read_csv, write_csv
from .mc import run_monte_carlo
from .mixing import random_mixing_check
from .simulate import simulate_dgp

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_INTERNAL = 4

logger = logging.getLogger("tvtp")


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("TVTP_THREADS")
        if env is None:
            return 1
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"TVTP_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise InputError("thread count must be >= 1")
    return n


def _fmt(v, width=12):
    return f"{'-':>{width}}" if v is None else f"{v:{width}.4f}"


def format_estimates(result) -> str:
    lines = [f"{'parameter':<10}{'estimate':>12}{'se_hessian':>12}{'se_sandwich':>12}{'t_vs_0':>12}"]
    for r in result.summary_rows():
        lines.append(
            f"{r['parameter']:<10}{_fmt(r['estimate'])}{_fmt(r['se_hessian'])}"
            f"{_fmt(r['se_sandwich'])}{_fmt(r['t_zero'])}"
        )
    lines.append(f"loglik = {result.loglik:.6f}  nobs = {result.nobs}  converged = {result.converged}")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    if args.out is None:
        raise InputError("simulate needs --out")
    cfg = RunConfig.load(args.config, "simulate")
    data = simulate_dgp(cfg.dgp_spec(seed=args.seed))
    write_csv(data, args.out)
    print(f"wrote {data.T + 1} rows to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.data is None:
        raise InputError("fit needs --data")
    cfg = RunConfig.load(args.config, "fit")
    data = read_csv(args.data)
    config = cfg.model_config(args.estimator)
    options = cfg.fit_options(n_jobs=_threads(args))
    try:
        result = fit(data, config, options)
    except EstimationError as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    print(format_estimates(result))
    out = Path(args.out) if args.out else Path(str(args.data) + ".fit.json")
    out.write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    if not result.converged:
        print(f"warning: optimizer did not converge ({result.message})", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_mc(args) -> int:
    if args.out is None:
        raise InputError("mc needs --out (output directory)")
    cfg = RunConfig.load(args.config, "mc")
    design = cfg.mc_design(seed=args.seed, n_workers=_threads(args))
    if args.estimator:
        design.estimators = (args.estimator,)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    def progress(done, total):
        if done == total or done % max(1, total // 20) == 0:
            logger.info("replications %d/%d", done, total)

    report = run_monte_carlo(design, progress=progress)
    report.to_csv(outdir / "report.csv")
    table = report.to_table()
    (outdir / "report.txt").write_text(table + "\n")
    _write_records(report.records, outdir / "replications.csv")
    print(table)
    return EXIT_OK


def _write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", "rho", "T", "rep", "converged", "ok", "relabeled", "parameter", "estimate",
                    "se_hessian", "se_sandwich"])
        for r in records:
            names = r.get("names") or []
            for j, name in enumerate(names):
                est = r["estimate"]
                se = r["se"]
                ses = r["se_sandwich"]
                w.writerow([
                    r["estimator"], r["rho"], r["T"], r["rep"], r["converged"], r["ok"], r["relabeled"], name,
                    "" if est is None else repr(float(est[j])),
                    "" if se is None else repr(float(se[j])),
                    "" if ses is None else repr(float(ses[j])),
                ])


def cmd_mixing_check(args) -> int:
    cfg = RunConfig.load(args.config, "mixing-check")
    m = cfg.values["mixing"]
    if m["n_instances"] < 1 or m["max_steps"] < 1:
        raise InputError("'mixing.n_instances' and 'mixing.max_steps' must be >= 1")
    report = random_mixing_check(
        n_instances=m["n_instances"],
        seed=m["seed"] if args.seed is None else args.seed,
        max_steps=m["max_steps"],
        config=cfg.model_config(args.estimator),
        tol=float(m["tol"]),
    )
    if args.out:
        keys = list(report.records[0].keys())
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            w.writerows(report.records)
    print(
        f"instances: {len(report.records)}  violations: {report.n_violations}  "
        f"max excess: {report.max_violation:.3e}  (full l1 distance above bound: {report.n_l1_violations})"
    )
    return EXIT_OK if report.ok else EXIT_VIOLATION


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "mc": cmd_mc,
    "mixing-check": cmd_mixing_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvtp", description="Covariate-driven Markov-switching AR toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--data", help="input CSV with columns t,y,z[,s_true]")
        p.add_argument("--out", help="output file (directory for mc)")
        p.add_argument("--threads", type=int, help="worker cap (default: $TVTP_THREADS or 1)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--estimator", choices=["partial", "joint"], help="override model.variant")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, DomainError, SizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - stable exit code for anything unexpected
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
