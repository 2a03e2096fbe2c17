"""Deterministic excess-risk sweeps over sample size and estimator.

A sweep is a grid of independent cells (estimator, n, replicate).  Every
random stream is seeded by a fixed hash of (base seed, n, replicate, tag),
so the complete output is a pure function of the configuration text: cells
may be computed in any order, by any number of workers, and the final
results.csv is rebuilt sorted from the per-cell files each time.  Existing
cell files are never recomputed, which makes interrupted sweeps resumable
at cell granularity.

Per cell, the training set is drawn fresh (tag "data") and every estimator
for the same (n, replicate) is scored on a shared test stream (tag "test")
so estimator comparisons are paired.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

from .config import parse_config
from .data import generate_dataset
from .linear import fit_estimator, tune
from .model import FLOAT_FMT, bump_teacher, sample_teacher
from .ngd import ChainDivergence, NgdConfig, run_chain
from .risk import (CSV_HEADER, RiskRecord, dominance_condition,
                   excess_risk_mc, linear_lower_exponents, load_records,
                   nn_upper_exponent, rate_fit, save_records)

__all__ = ["derive_seed", "resolve_teacher", "run_cell", "run_sweep",
           "SweepReport", "report", "save_report"]

RESULTS_NAME = "results.csv"
_FAILED_PREFIX = "# failed: "


def derive_seed(base_seed, n, replicate, tag):
    """Deterministic 64-bit seed for one random stream of one sweep cell.

    The encoding "base|n|replicate|tag" is injective because the first three
    parts are integers and tags never contain '|'; the hash is SHA-256, so
    distinct cells cannot collide in practice.
    """
    text = f"{base_seed}|{n}|{replicate}|{tag}"
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big")


def student_width(cfg, n):
    """Network width the auto rule assigns at sample size n."""
    return NgdConfig.auto(cfg.schedule, n, cfg.noise_bound,
                          eta=cfg.ngd_eta, budget=cfg.ngd_budget).width


def resolve_teacher(cfg):
    """Teacher network for a sweep: explicit width, or twice the widest
    student so truncation bias stays far below the measured risks."""
    width = cfg.teacher_width
    if width is None:
        width = 2 * student_width(cfg, max(cfg.sweep_n_values))
    if cfg.teacher_kind == "bump":
        return bump_teacher(cfg.schedule, width, radius=cfg.teacher_radius)
    return sample_teacher(cfg.schedule, width, radius=cfg.teacher_radius,
                          seed=cfg.teacher_seed)


def _estimators(cfg):
    return ("ngd",) + tuple(cfg.baselines)


def cell_name(estimator, n, replicate):
    return f"{estimator}-n{n:06d}-r{replicate:04d}.csv"


def _write_cell(path, records=None, failed=None):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        if failed is not None:
            fh.write(_FAILED_PREFIX + failed.replace("\n", " ") + "\n")
        fh.write(CSV_HEADER + "\n")
        for rec in sorted(records or [],
                          key=lambda r: (r.estimator, r.n, r.seed)):
            fh.write(rec.csv_row() + "\n")
    tmp.replace(path)


def load_cell(path):
    """Returns (records, failure message or None) for one cell file."""
    with open(path) as fh:
        first = fh.readline()
    if first.startswith(_FAILED_PREFIX):
        return [], first[len(_FAILED_PREFIX):].strip()
    return load_records(path), None


def run_cell(cfg, teacher, estimator, n, replicate):
    """Compute one sweep cell; returns (records, failure message or None).

    NGD cells train the sampler with the auto hyperparameter rules and
    score the kept-iterate average (tag "ngd"); the final iterate is scored
    too when sweep.include_last is set (tag "ngd-last").  Baseline cells
    cross-validate on the training set, refit, and score.  A diverged chain
    becomes a failed cell rather than an exception.
    """
    base = cfg.sweep_base_seed
    data_seed = derive_seed(base, n, replicate, "data")
    test_seed = derive_seed(base, n, replicate, "test")
    data = generate_dataset(teacher, n, noise_bound=cfg.noise_bound,
                            noise_kind=cfg.noise_kind, seed=data_seed)
    timing = cfg.output_timing == "wall"
    start = time.perf_counter()
    try:
        if estimator == "ngd":
            ngd_cfg = NgdConfig.auto(cfg.schedule, n, cfg.noise_bound,
                                     eta=cfg.ngd_eta, budget=cfg.ngd_budget,
                                     seed=derive_seed(base, n, replicate, "ngd"))
            result = run_chain(cfg.schedule, ngd_cfg, data)
            predictors = [("ngd", result.averaged_predictor())]
            if cfg.sweep_include_last:
                predictors.append(("ngd-last", result.last_predictor()))
        else:
            cv_seed = derive_seed(base, n, replicate, f"cv-{estimator}")
            kernel_seed = derive_seed(base, n, replicate, f"kernel-{estimator}")
            tuned = tune(estimator, data, grid=cfg.grid_for(estimator, data),
                         folds=min(cfg.tune_folds, n), seed=cv_seed,
                         config=cfg.schedule, kernel_seed=kernel_seed)
            est = fit_estimator(estimator, data, tuned.params,
                                config=cfg.schedule, kernel_seed=kernel_seed)
            predictors = [(estimator, est)]
    except ChainDivergence as exc:
        return [], f"{estimator} n={n} replicate={replicate}: {exc}"
    wall_ms = int(round((time.perf_counter() - start) * 1000)) if timing else 0
    records = []
    for tag, predictor in predictors:
        mc = excess_risk_mc(teacher, predictor,
                            n_test=cfg.risk_n_test, seed=test_seed)
        records.append(RiskRecord(estimator=tag, n=n, seed=data_seed,
                                  excess_risk=mc.value, stderr=mc.stderr,
                                  wall_ms=wall_ms))
    return records, None


def _cell_worker(cfg_text, estimator, n, replicate, cell_path):
    """Process-pool entry point: reconstruct the config, compute, persist."""
    cfg = parse_config(cfg_text)
    teacher = resolve_teacher(cfg)
    records, failed = run_cell(cfg, teacher, estimator, n, replicate)
    _write_cell(Path(cell_path), records, failed)
    return cell_path, failed


def worker_count(workers=None):
    """Explicit argument, else the NGDBENCH_WORKERS variable, else 1."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("NGDBENCH_WORKERS", "").strip()
    return max(1, int(env)) if env else 1


def run_sweep(cfg, out_dir=None, workers=None, progress=None):
    """Run (or resume) the sweep; returns the full sorted record list.

    Writes out_dir/cells/<cell>.csv per cell, the canonical sorted
    results.csv, and a copy of the canonical config text.  Already-present
    cell files (including failed ones) are kept as-is, so a completed sweep
    reruns with zero new computation and byte-identical results.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    cells = out / "cells"
    cells.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())

    tasks = [(est, n, rep)
             for n in cfg.sweep_n_values
             for rep in range(cfg.sweep_replicates)
             for est in _estimators(cfg)]
    pending = [(est, n, rep) for est, n, rep in tasks
               if not (cells / cell_name(est, n, rep)).exists()]

    nworkers = worker_count(workers)
    if pending and nworkers > 1:
        cfg_text = cfg.to_text()
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            futures = {
                pool.submit(_cell_worker, cfg_text, est, n, rep,
                            str(cells / cell_name(est, n, rep))): (est, n, rep)
                for est, n, rep in pending}
            for fut in as_completed(futures):
                path, failed = fut.result()
                if progress is not None:
                    progress(Path(path).name, failed)
    else:
        teacher = resolve_teacher(cfg) if pending else None
        for est, n, rep in pending:
            records, failed = run_cell(cfg, teacher, est, n, rep)
            _write_cell(cells / cell_name(est, n, rep), records, failed)
            if progress is not None:
                progress(cell_name(est, n, rep), failed)

    all_records = []
    failures = []
    for est, n, rep in tasks:
        records, failed = load_cell(cells / cell_name(est, n, rep))
        all_records.extend(records)
        if failed is not None:
            failures.append((cell_name(est, n, rep), failed))
    save_records(out / RESULTS_NAME, all_records)
    failed_path = out / "failed.txt"
    if failures:
        with open(failed_path, "w") as fh:
            for name, msg in sorted(failures):
                fh.write(f"{name}: {msg}\n")
    elif failed_path.exists():
        failed_path.unlink()
    return all_records


@dataclass(frozen=True)
class SweepReport:
    """Rate table plus the theoretical exponents for the configured class."""

    fits: tuple            # ((estimator, RateFit), ...) sorted by estimator
    nn_exponent: float
    lower_exponents: object   # LowerBoundExponents
    dominance: bool        # smoothness threshold for provable dominance
    verdict: str | None    # None when only one estimator is present

    def table_lines(self):
        lines = ["estimator        exponent   stderr     n-range"]
        for name, fit in self.fits:
            lines.append(f"{name:<16} {fit.exponent:>8.4f}  "
                         f"{fit.slope_stderr:>8.4f}   "
                         f"{fit.n_values[0]}..{fit.n_values[-1]}")
        return lines

    def __str__(self):
        lines = self.table_lines()
        lines.append(f"theoretical sampler exponent (q=0): "
                     f"{self.nn_exponent:.6g}")
        lines.append(str(self.lower_exponents))
        lines.append("smoothness threshold for provable dominance: "
                     + ("satisfied" if self.dominance else "not satisfied"))
        if self.verdict is not None:
            lines.append(self.verdict)
        return "\n".join(lines)


def report(records, cfg):
    """Build the rate-comparison report from sweep records.

    Every estimator present must cover at least three sample sizes.  The
    verdict compares the sampler's fitted decay exponent with each baseline
    (larger exponent = faster decay); it is omitted when the records hold a
    single estimator.
    """
    if isinstance(records, (str, Path)):
        records = load_records(records)
    if not records:
        raise ValueError("no records to report on")
    by_est = {}
    for rec in records:
        by_est.setdefault(rec.estimator, []).append(rec)
    fits = []
    for name in sorted(by_est):
        try:
            fits.append((name, rate_fit(by_est[name])))
        except ValueError as exc:
            raise ValueError(f"estimator {name!r}: {exc}") from None
    s = cfg.schedule
    nn_exp = nn_upper_exponent(s.alpha1, s.alpha2, s.gamma, q=0.0, s=s.s)
    lower = linear_lower_exponents(s.alpha1, s.alpha2, s.gamma, s.s, s.d)
    dom = dominance_condition(s.alpha1, s.d)
    verdict = None
    if len(fits) > 1:
        named = dict(fits)
        ngd_fit = named.get("ngd")
        if ngd_fit is None:
            verdict = "no sampler records: no dominance verdict"
        else:
            worse = [name for name, fit in fits
                     if name not in ("ngd", "ngd-last")
                     and ngd_fit.exponent <= fit.exponent]
            if worse:
                verdict = ("sampler does NOT dominate: slower or equal decay"
                           f" vs {', '.join(sorted(worse))}")
            else:
                verdict = "sampler dominates every baseline (faster decay)"
    return SweepReport(fits=tuple(fits), nn_exponent=nn_exp,
                       lower_exponents=lower, dominance=dom, verdict=verdict)


def save_report(out_dir, rep):
    """Write report.txt and one two-column log-log plot file per estimator."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(str(rep) + "\n")
    for name, fit in rep.fits:
        with open(out / f"rate-{name}.dat", "w") as fh:
            fh.write("# log_n log_median_excess_risk\n")
            for n, med in zip(fit.n_values, fit.medians):
                fh.write(f"{FLOAT_FMT % math.log(n)} "
                         f"{FLOAT_FMT % math.log(med)}\n")
