"""``stability-lab`` command line.

Exit codes: 0 success, 2 usage error, 3 runtime or estimation error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .bounds import (
    DEFAULT_DELTA,
    BoundError,
    BoundReport,
    data_constants,
    dt_stability_bound,
    gen_bound_dt,
    gen_bound_l2lr,
    gen_bound_lr,
    l2lr_stability_bound,
    lr_stability_bound,
)
from .dataset import DatasetError, EvalStrategy, generate_hastie, load_csv, write_csv
from .learners import DecisionTree, Knn, LearnerError, LogisticRegression, Stub, train
from .linalg import LinalgError, cross_entropy_hessian, smallest_eigenvalue
from .losses import LossKind, empirical_error
from .stability import (
    StabilityConfig,
    StabilityError,
    algorithm_name,
    estimate_stability,
    primary_parameter,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
DEFAULT_ITERATIONS = 500
# smallest eigenvalue at or below this is treated as singular
SINGULAR_TOL = 1e-10
# below this the LR bound is reported but flagged as ill-conditioned
ILL_CONDITIONED = 1e-3

RUNTIME_ERRORS = (DatasetError, LearnerError, LinalgError, BoundError, StabilityError)


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    D = generate_hastie(args.m, args.seed)
    try:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_csv(D, args.out)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


# --------------------------------------------------------------------------
# measure
# --------------------------------------------------------------------------


def _learner_from_args(args):
    name = args.learner
    if name == "tree":
        return DecisionTree(args.v)
    if name == "lr":
        return LogisticRegression(args.T, args.eta, 0.0, not args.no_bias)
    if name == "l2lr":
        if not args.lam > 0:
            raise UsageError("l2lr needs --lambda > 0")
        return LogisticRegression(args.T, args.eta, args.lam, not args.no_bias)
    if name == "knn":
        return Knn(args.k)
    return Stub(args.label)


def _stability_config(args) -> StabilityConfig:
    gamma = getattr(args, "gamma", 1.0)
    return StabilityConfig(
        B=args.B,
        trials=args.trials,
        strategy=EvalStrategy(args.strategy, args.oos_fraction),
        loss=LossKind(args.loss, gamma),
        seed=args.seed,
        aggregate_over_i=args.aggregate,
    )


def cmd_measure(args) -> int:
    stats = {"h": ("h",), "ph": ("ph",), "both": ("h", "ph")}[args.stat]
    try:
        learner = _learner_from_args(args)
        cfg = _stability_config(args)
    except (UsageError, LearnerError, DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        D = load_csv(args.data)
        report = estimate_stability(D, learner, cfg, stats)
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out)
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    doc = report.to_dict()
    doc["config"]["data"] = str(args.data)
    _write_text(out, _dump_json(doc))
    _write_text(csv_path, report.csv_summary())
    return EXIT_OK


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------


def _bounds_tree(args, D) -> BoundReport:
    if args.v is None:
        raise UsageError("--algo tree needs --v")
    inputs = {"v": args.v, "tau": args.tau, "delta": args.delta}
    if D is not None:
        model = train(D, DecisionTree(args.v), args.seed)
        inputs["effective_v"] = model.leaf_count
        m = D.m
        r_emp = args.remp if args.remp is not None else empirical_error(model, D, LossKind())
    else:
        if args.m is None or args.remp is None:
            raise UsageError("--algo tree without --data needs --m and --remp")
        m, r_emp = args.m, args.remp
    inputs.update(m=m, R_emp=r_emp)
    return BoundReport(
        "tree",
        dt_stability_bound(args.v),
        gen_bound_dt(r_emp, args.v, m, args.tau, args.delta),
        inputs,
    )


def _bounds_lr(args, D, regularized: bool) -> tuple[BoundReport, int]:
    if D is None:
        raise UsageError(f"--algo {args.algo} needs --data")
    lam = args.lam if regularized else 0.0
    if regularized and not lam > 0:
        raise UsageError("--algo l2lr needs --lambda > 0")
    config = LogisticRegression(args.T, args.eta, lam, not args.no_bias)
    model = train(D, config, args.seed)
    consts = data_constants(D, config.fit_bias)
    Q = consts["Q"]
    rho = args.rho if args.rho is not None else consts["rho"]
    r_emp = args.remp if args.remp is not None else empirical_error(model, D, LossKind())
    lambda_min = smallest_eigenvalue(cross_entropy_hessian(D, model.theta, lam))
    inputs = {
        "m": D.m,
        "lambda": lam,
        "lambda_min": lambda_min,
        "rho": rho,
        "tau": args.tau,
        "Q": Q,
        "delta": args.delta,
        "R_emp": r_emp,
        "T": args.T,
        "learning_rate": args.eta,
        "fit_bias": config.fit_bias,
        "theta": [float(t) for t in model.theta],
        "flags": [],
    }
    if regularized:
        report = BoundReport(
            "l2lr",
            l2lr_stability_bound(rho, args.tau, lam, D.m, Q),
            gen_bound_l2lr(r_emp, rho, args.tau, lam, D.m, args.delta),
            inputs,
        )
        return report, EXIT_OK
    if lambda_min <= SINGULAR_TOL:
        inputs["flags"].append("hessian_not_positive_definite")
        return BoundReport("lr", None, None, inputs), EXIT_RUNTIME
    if lambda_min < ILL_CONDITIONED:
        inputs["flags"].append("ill_conditioned_hessian")
    report = BoundReport(
        "lr",
        lr_stability_bound(rho, args.tau, D.m, lambda_min, Q),
        gen_bound_lr(r_emp, rho, args.tau, lambda_min, D.m, args.delta),
        inputs,
    )
    return report, EXIT_OK


def cmd_bounds(args) -> int:
    if not 0.0 < args.delta < 1.0:
        print("error: --delta must lie in (0, 1)", file=sys.stderr)
        return EXIT_USAGE
    try:
        D = load_csv(args.data) if args.data else None
        if args.algo == "tree":
            report, code = _bounds_tree(args, D), EXIT_OK
        else:
            report, code = _bounds_lr(args, D, args.algo == "l2lr")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    doc = report.to_dict()
    if args.data:
        doc["inputs"]["data"] = str(args.data)
    _write_text(Path(args.out), _dump_json(doc))
    if code == EXIT_RUNTIME:
        print(
            f"error: Hessian not positive definite at theta-hat "
            f"(lambda_min = {report.inputs['lambda_min']:.3e})",
            file=sys.stderr,
        )
    return code


# --------------------------------------------------------------------------
# table1
# --------------------------------------------------------------------------


@dataclass
class ExperimentGrid:
    m: int = 20
    data_seed: int = 0
    csv_path: str | None = None
    leaves: tuple = (8, 16, 64, 128, 256)
    lambdas: tuple = (0.01, 1.0, 2.0, 5.0, 10.0)
    iterations: tuple = (2, 10, 50, 200, 500)
    l2lr_iterations: int = DEFAULT_ITERATIONS
    learning_rate: float = 0.1
    stability: StabilityConfig = field(default_factory=StabilityConfig)

    def cells(self):
        for v in self.leaves:
            yield DecisionTree(v)
        for lam in self.lambdas:
            yield LogisticRegression(self.l2lr_iterations, self.learning_rate, lam)
        for T in self.iterations:
            yield LogisticRegression(T, self.learning_rate)

    def dataset(self):
        if self.csv_path:
            return load_csv(self.csv_path)
        return generate_hastie(self.m, self.data_seed)

    def to_dict(self) -> dict:
        return {
            "dataset": {"csv": self.csv_path}
            if self.csv_path
            else {"hastie": {"m": self.m, "seed": self.data_seed}},
            "leaves": list(self.leaves),
            "lambdas": list(self.lambdas),
            "iterations": list(self.iterations),
            "l2lr_iterations": self.l2lr_iterations,
            "learning_rate": self.learning_rate,
            "stability": self.stability.to_dict(),
        }


TABLE_COLUMNS = ["algorithm", "parameter_name", "parameter_value", "effective_value", "beta_h_hat", "beta_ph_hat"]


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _table_row(report) -> dict:
    name, value = report.config["parameter"]
    return {
        "algorithm": report.algorithm,
        "parameter_name": name,
        "parameter_value": value,
        "effective_value": _num(report.effective_value),
        "beta_h_hat": _num(report.beta_h_hat),
        "beta_ph_hat": _num(report.beta_ph_hat),
    }


def _markdown(rows: list[dict]) -> str:
    blocks = {alg: [r for r in rows if r["algorithm"] == alg] for alg in ("tree", "l2lr", "lr")}
    n = max((len(b) for b in blocks.values()), default=0)

    def cell(v, digits=4):
        return "" if v in ("", None) else f"{float(v):.{digits}f}"

    lines = [
        "| Decision tree | | | | L2-regularized LR | | | | LR | | | |",
        "| v | v_eff | β̂_h(m) | β̂_ph(m) | λ | λ₁ | β̂_h(m) | β̂_ph(m) | T | λ₁ | β̂_h(m) | β̂_ph(m) |",
        "|" + "---|" * 12,
    ]
    for j in range(n):
        parts = []
        for alg in ("tree", "l2lr", "lr"):
            b = blocks[alg]
            if j < len(b):
                r = b[j]
                eff = r["effective_value"]
                if alg != "tree" and eff:
                    eff = f"{float(eff):.3e}"
                else:
                    eff = cell(eff, 2)
                parts += [str(r["parameter_value"]), eff, cell(r["beta_h_hat"]), cell(r["beta_ph_hat"])]
            else:
                parts += [""] * 4
        lines.append("| " + " | ".join(parts) + " |")
    return "\n".join(lines) + "\n"


def _write_table(out_dir: Path, grid: ExperimentGrid, rows: list[dict], reports: list[dict]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "table1.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    _write_text(out_dir / "table1.md", _markdown(rows))
    _write_text(out_dir / "table1.json", _dump_json({"grid": grid.to_dict(), "cells": reports}))


def run_table1(grid: ExperimentGrid, out_dir, log=None, timings: dict | None = None) -> int:
    """Run every grid cell and write table1.{csv,md,json} under ``out_dir``.

    ``timings``, when given, receives wall-clock seconds per algorithm.
    """
    out_dir = Path(out_dir)
    rows, reports = [], []
    try:
        D = grid.dataset()
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    code = EXIT_OK
    for learner in grid.cells():
        start = time.perf_counter()
        try:
            report = estimate_stability(D, learner, grid.stability)
        except RUNTIME_ERRORS as exc:
            name, value = primary_parameter(learner)
            print(f"error: cell {algorithm_name(learner)} {name}={value} failed: {exc}", file=sys.stderr)
            code = EXIT_RUNTIME
            continue
        elapsed = time.perf_counter() - start
        if timings is not None:
            alg = algorithm_name(learner)
            timings[alg] = timings.get(alg, 0.0) + elapsed
        row = _table_row(report)
        rows.append(row)
        reports.append(report.to_dict())
        if log is not None:
            print(
                f"{row['algorithm']:>5} {row['parameter_name']}={row['parameter_value']}: "
                f"beta_h={float(row['beta_h_hat']):.4f} beta_ph={float(row['beta_ph_hat']):.4f} "
                f"({elapsed:.1f}s)",
                file=log,
            )
    _write_table(out_dir, grid, rows, reports)
    return code


def cmd_table1(args) -> int:
    cfg = StabilityConfig(
        B=args.B, trials=args.trials, seed=args.seed, strategy=EvalStrategy(args.strategy)
    )
    grid = ExperimentGrid(
        m=args.m,
        data_seed=args.seed,
        csv_path=args.data,
        l2lr_iterations=args.l2lr_T,
        stability=cfg,
    )
    return run_table1(grid, args.out_dir, log=sys.stderr)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_learner_flags(p):
    p.add_argument("--learner", choices=["tree", "lr", "l2lr", "knn", "stub"], required=True)
    p.add_argument("--v", "--max-leaves", dest="v", type=_positive_int, default=8, help="tree leaf cap")
    p.add_argument("--T", "--iterations", dest="T", type=int, default=DEFAULT_ITERATIONS, help="gradient steps")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="L2 penalty (l2lr)")
    p.add_argument("--eta", type=_positive_float, default=0.1, help="learning rate")
    p.add_argument("--no-bias", action="store_true", help="fit LR without an intercept column")
    p.add_argument("--k", type=_positive_int, default=1, help="neighbours (odd)")
    p.add_argument("--label", type=int, choices=[0, 1], default=1, help="stub constant label")


def _add_stability_flags(p):
    p.add_argument("--B", type=_positive_int, default=30)
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--strategy", choices=["ALL", "OOB", "OOS"], default="ALL")
    p.add_argument("--oos-fraction", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stability-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a Hastie dataset as CSV")
    g.add_argument("--m", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("measure", help="estimate hypothesis / pointwise hypothesis stability")
    m.add_argument("--data", required=True, help="CSV dataset")
    _add_learner_flags(m)
    m.add_argument("--stat", choices=["h", "ph", "both"], default="both")
    _add_stability_flags(m)
    m.add_argument("--loss", choices=["classification", "gamma", "cross_entropy"], default="classification")
    m.add_argument("--gamma", type=_positive_float, default=1.0)
    m.add_argument("--aggregate", choices=["max", "mean"], default="max")
    m.add_argument("--out", required=True, help="report JSON path")
    m.add_argument("--csv", help="summary CSV path (default: --out with .csv suffix)")
    m.set_defaults(func=cmd_measure)

    b = sub.add_parser("bounds", help="theoretical stability and generalization bounds")
    b.add_argument("--algo", choices=["tree", "l2lr", "lr"], required=True)
    b.add_argument("--data", help="CSV dataset (required for l2lr and lr)")
    b.add_argument("--v", type=_positive_int)
    b.add_argument("--m", type=_positive_int)
    b.add_argument("--remp", type=float, help="empirical error (computed from --data if omitted)")
    b.add_argument("--lambda", dest="lam", type=float, default=1.0)
    b.add_argument("--T", "--iterations", dest="T", type=int, default=DEFAULT_ITERATIONS)
    b.add_argument("--eta", type=_positive_float, default=0.1)
    b.add_argument("--no-bias", action="store_true")
    b.add_argument("--rho", type=_positive_float, help="override rho (default: Q)")
    b.add_argument("--tau", type=_positive_float, default=1.0)
    b.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True, help="report JSON path")
    b.set_defaults(func=cmd_bounds)

    t = sub.add_parser("table1", help="run the full decision tree / L2-LR / LR grid")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out-dir", default="table1_out")
    t.add_argument("--data", help="CSV dataset instead of a generated Hastie set")
    t.add_argument("--m", type=_positive_int, default=20)
    t.add_argument("--B", type=_positive_int, default=30)
    t.add_argument("--trials", type=_positive_int, default=10)
    t.add_argument("--strategy", choices=["ALL", "OOB", "OOS"], default="ALL")
    t.add_argument("--l2lr-T", dest="l2lr_T", type=int, default=DEFAULT_ITERATIONS)
    t.set_defaults(func=cmd_table1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
