"""Command-line driver.

Subcommands: check, teacher, data, train, fit, sweep, report, lemma.
All experiment settings live in the config file; the command line only
selects what to do and where to put files.  Exit codes: 0 success,
1 validation error (bad config, bad arguments), 2 runtime failure.
The NGDBENCH_WORKERS environment variable sets the sweep worker count.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .data import generate_dataset, save_dataset
from .linear import fit_estimator, save_estimator, tune
from .model import check_assumptions, save_teacher, save_weights
from .ngd import ChainDivergence, NgdConfig, run_chain, save_trace
from .lowerbound import build_bump_approx, save_approx_csv
from .risk import excess_risk_mc
from .sweep import (RESULTS_NAME, derive_seed, report, resolve_teacher,
                    run_sweep, save_report, student_width)

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors (validation, not runtime)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser():
    parser = _Parser(prog="ngdbench",
                     description="teacher-student regression benchmark: "
                                 "noisy gradient descent vs linear estimators")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment config file")
        return p

    add("check", "validate the config and the schedule assumptions")

    p = add("teacher", "sample the teacher network and write it to a file")
    p.add_argument("--out", required=True, help="output teacher file")

    p = add("data", "draw one training set and write it as CSV")
    p.add_argument("--out", required=True, help="output dataset CSV")
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--replicate", type=int, default=0, help="replicate index")

    p = add("train", "run one noisy-gradient-descent chain")
    p.add_argument("--out", required=True,
                   help="output weight-snapshot file (kept iterates)")
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--replicate", type=int, default=0, help="replicate index")
    p.add_argument("--trace", help="optional per-iterate trace CSV")

    p = add("fit", "cross-validate and fit one baseline estimator")
    p.add_argument("--out", required=True, help="output estimator file")
    p.add_argument("--estimator", required=True,
                   help="baseline kind (krr-rbf, krr-ntk, krr-rf, knn, nw)")
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--replicate", type=int, default=0, help="replicate index")

    p = add("sweep", "run or resume the full excess-risk sweep")
    p.add_argument("--out", help="output directory (default: output.dir)")
    p.add_argument("--workers", type=int,
                   help="worker processes (default: NGDBENCH_WORKERS or 1)")

    p = add("report", "fit rates from sweep records and write the report")
    p.add_argument("--records",
                   help=f"records CSV (default: <output.dir>/{RESULTS_NAME})")
    p.add_argument("--out", help="report directory (default: output.dir)")

    p = add("lemma", "build the bump ridge approximation and write its CSV")
    p.add_argument("--out", required=True, help="output CSV")
    return parser


def _cmd_check(cfg, args):
    rep = check_assumptions(cfg.schedule)
    print(cfg.to_text(), end="")
    print(rep)
    return 0 if rep.ok else 1


def _cmd_teacher(cfg, args):
    teacher = resolve_teacher(cfg)
    save_teacher(args.out, teacher)
    tail = teacher.tail_amplitude(student_width(cfg, max(cfg.sweep_n_values)))
    print(f"teacher: kind={teacher.kind} width={teacher.width} "
          f"radius={teacher.radius:g}")
    print(f"tail amplitude beyond the widest student: {tail:.3e}")
    print(f"wrote {args.out}")
    return 0


def _cmd_data(cfg, args):
    teacher = resolve_teacher(cfg)
    seed = derive_seed(cfg.sweep_base_seed, args.n, args.replicate, "data")
    data = generate_dataset(teacher, args.n, noise_bound=cfg.noise_bound,
                            noise_kind=cfg.noise_kind, seed=seed)
    save_dataset(args.out, data)
    print(f"wrote {args.out}: n={data.n} d={data.d} seed={seed}")
    return 0


def _cmd_train(cfg, args):
    teacher = resolve_teacher(cfg)
    base = cfg.sweep_base_seed
    data_seed = derive_seed(base, args.n, args.replicate, "data")
    data = generate_dataset(teacher, args.n, noise_bound=cfg.noise_bound,
                            noise_kind=cfg.noise_kind, seed=data_seed)
    ngd_cfg = NgdConfig.auto(cfg.schedule, args.n, cfg.noise_bound,
                             eta=cfg.ngd_eta, budget=cfg.ngd_budget,
                             seed=derive_seed(base, args.n, args.replicate,
                                              "ngd"))
    print(f"chain: width={ngd_cfg.width} beta={ngd_cfg.beta:g} "
          f"lam={ngd_cfg.lam:g} k_max={ngd_cfg.k_max} eta={ngd_cfg.eta:g}")
    result = run_chain(cfg.schedule, ngd_cfg, data)
    save_weights(args.out, cfg.schedule, result.kept,
                 extra={"kind": "kept-iterates",
                        "burn_in": ngd_cfg.burn_in,
                        "thinning": ngd_cfg.thinning})
    if args.trace:
        save_trace(args.trace, result)
    test_seed = derive_seed(base, args.n, args.replicate, "test")
    mc = excess_risk_mc(teacher, result.averaged_predictor(),
                        n_test=cfg.risk_n_test, seed=test_seed)
    print(f"final empirical risk: {result.risk_trace[-1]:.6g}")
    print(f"averaged-predictor excess risk: {mc.value:.6g} "
          f"(stderr {mc.stderr:.2g})")
    print(f"wrote {args.out}")
    return 0


def _cmd_fit(cfg, args):
    teacher = resolve_teacher(cfg)
    base = cfg.sweep_base_seed
    data_seed = derive_seed(base, args.n, args.replicate, "data")
    data = generate_dataset(teacher, args.n, noise_bound=cfg.noise_bound,
                            noise_kind=cfg.noise_kind, seed=data_seed)
    kind = args.estimator
    cv_seed = derive_seed(base, args.n, args.replicate, f"cv-{kind}")
    kernel_seed = derive_seed(base, args.n, args.replicate, f"kernel-{kind}")
    tuned = tune(kind, data, grid=cfg.grid_for(kind, data),
                 folds=min(cfg.tune_folds, args.n), seed=cv_seed,
                 config=cfg.schedule, kernel_seed=kernel_seed)
    est = fit_estimator(kind, data, tuned.params, config=cfg.schedule,
                        kernel_seed=kernel_seed)
    save_estimator(args.out, est)
    params = " ".join(f"{k}={v:g}" for k, v in sorted(tuned.params.items()))
    print(f"{kind}: chose {params} (cv score {tuned.score:.6g})")
    test_seed = derive_seed(base, args.n, args.replicate, "test")
    mc = excess_risk_mc(teacher, est, n_test=cfg.risk_n_test, seed=test_seed)
    print(f"excess risk: {mc.value:.6g} (stderr {mc.stderr:.2g})")
    print(f"wrote {args.out}")
    return 0


def _cmd_sweep(cfg, args):
    def progress(name, failed):
        status = f"FAILED ({failed})" if failed else "done"
        print(f"  {name}: {status}", flush=True)

    records = run_sweep(cfg, out_dir=args.out, workers=args.workers,
                        progress=progress)
    out = Path(args.out if args.out is not None else cfg.output_dir)
    print(f"{len(records)} records -> {out / RESULTS_NAME}")
    return 0


def _cmd_report(cfg, args):
    out = Path(args.out if args.out is not None else cfg.output_dir)
    records = args.records if args.records else out / RESULTS_NAME
    rep = report(records, cfg)
    save_report(out, rep)
    print(rep)
    return 0


def _cmd_lemma(cfg, args):
    approx = build_bump_approx(cfg.lemma)
    save_approx_csv(args.out, approx)
    rel = approx.reported_sup_error / approx.scale
    print(f"atoms: {approx.n_atoms}  tau: {approx.tau:.6g}")
    print(f"sup error: {approx.reported_sup_error:.3e} "
          f"(relative to bump amplitude: {rel:.3e})")
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "check": _cmd_check,
    "teacher": _cmd_teacher,
    "data": _cmd_data,
    "train": _cmd_train,
    "fit": _cmd_fit,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
    "lemma": _cmd_lemma,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ChainDivergence as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ArithmeticError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
