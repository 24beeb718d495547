"""Experiment orchestration: the lambda ablation sweep and the
overfitting probe.

Both experiments fan out into independent distillation cells (one per
(lambda, seed) combination), each writing to its own subdirectory, and
aggregate the per-cell final metrics afterwards.  Cells never share
mutable state, so they can run in parallel; aggregation sorts by the
configured grid order, which keeps every output file byte-reproducible
regardless of completion order.  A failed cell is recorded in
failed_cells.csv with its error and excluded from the means; it does
not abort the experiment.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from london.harness.config import RunConfig
from london.harness.training import read_csv, resolve_path, run_distill, write_csv

SUMMARY_HEADER = ("lambda", "mean_test_err", "std_test_err", "mean_train_err")
FAILED_HEADER = ("lambda", "seed", "error")
GAP_HEADER = ("seed", "gap_lambda0", "gap_lambda_star", "gap_difference")


def _absolute_inputs(cfg: RunConfig, out_dir) -> RunConfig:
    """Pin input paths to the top-level output dir before cells fan out."""
    return cfg.with_overrides(
        train_csv=os.path.abspath(resolve_path(cfg.train_csv, out_dir)),
        test_csv=os.path.abspath(resolve_path(cfg.test_csv, out_dir)),
        teacher_model=os.path.abspath(resolve_path(cfg.teacher_model, out_dir)),
    )


def _run_cell(task) -> tuple:
    """One distillation cell; returns (lam, seed, result-or-None, error-or-None)."""
    cfg, cell_dir = task
    try:
        result = run_distill(cfg, cell_dir, render=False)
        return cfg.lam, cfg.seed, result, None
    except Exception as exc:  # recorded, never fatal to the experiment
        return cfg.lam, cfg.seed, None, f"{type(exc).__name__}: {exc}"


def _run_cells(tasks, jobs: int) -> list:
    if jobs <= 1:
        return [_run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, tasks))


def run_sweep(cfg: RunConfig, out_dir, jobs: int = 1) -> dict:
    """Distill per (lambda, seed) cell over the grid; write the summary table.

    The summary has one row per lambda in grid order with the mean and
    population std of the final test error and the mean final train
    error across the seeds that completed.
    """
    os.makedirs(out_dir, exist_ok=True)
    base = _absolute_inputs(cfg, out_dir)
    seeds = [cfg.seed + s for s in range(cfg.sweep_seeds)]
    tasks = []
    for lam in cfg.lambda_grid:
        for seed in seeds:
            cell_dir = os.path.join(out_dir, f"lam_{lam:g}", f"seed_{seed}")
            tasks.append((base.with_overrides(lam=lam, seed=seed), cell_dir))
    outcomes = _run_cells(tasks, jobs)

    by_lam = {lam: [] for lam in cfg.lambda_grid}
    failures = []
    for lam, seed, result, error in outcomes:
        if error is None:
            by_lam[lam].append(result)
        else:
            failures.append((f"{lam:g}", seed, error))
    rows = []
    for lam in cfg.lambda_grid:
        cells = by_lam[lam]
        if cells:
            test_err = np.array([1.0 - c["final_test_acc"] for c in cells])
            train_err = np.array([1.0 - c["final_train_acc"] for c in cells])
            rows.append(
                (lam, float(test_err.mean()), float(test_err.std()), float(train_err.mean()))
            )
        else:
            rows.append((lam, float("nan"), float("nan"), float("nan")))
    summary_path = os.path.join(out_dir, "sweep_summary.csv")
    write_csv(summary_path, SUMMARY_HEADER, rows)
    failed_path = os.path.join(out_dir, "failed_cells.csv")
    write_csv(failed_path, FAILED_HEADER, failures)

    from london.harness import figures

    figure_path = os.path.join(out_dir, "sweep_summary.png")
    figures.sweep_figure(rows, figure_path)
    return {
        "summary": summary_path,
        "failed": failed_path,
        "figure": figure_path,
        "rows": rows,
        "failures": failures,
    }


def run_overfit_probe(cfg: RunConfig, out_dir, jobs: int = 1) -> dict:
    """Paired lambda = 0 vs lambda = cfg.lam runs over the probe seeds.

    Writes gap_report.csv (one row per seed plus a mean row, columns
    seed, gap_lambda0, gap_lambda_star, gap_difference where gap is
    final train_acc - test_acc) and overfit_curves.csv (per-epoch mean
    train/test accuracies for both arms, plot-ready).
    """
    os.makedirs(out_dir, exist_ok=True)
    base = _absolute_inputs(cfg, out_dir)
    seeds = [cfg.seed + s for s in range(cfg.sweep_seeds)]
    tasks = []
    for seed in seeds:
        for arm, lam in (("base", 0.0), ("reg", cfg.lam)):
            cell_dir = os.path.join(out_dir, f"{arm}_seed_{seed}")
            tasks.append((base.with_overrides(lam=lam, seed=seed), cell_dir))
    outcomes = _run_cells(tasks, jobs)
    for lam, seed, result, error in outcomes:
        if error is not None:
            raise RuntimeError(f"probe cell (lambda={lam:g}, seed={seed}) failed: {error}")

    def arm_metrics(arm):
        per_seed = {}
        for seed in seeds:
            metrics = os.path.join(out_dir, f"{arm}_seed_{seed}", "student_metrics.csv")
            _, rows = read_csv(metrics)
            per_seed[seed] = rows
        return per_seed

    base_rows = arm_metrics("base")
    reg_rows = arm_metrics("reg")

    gap_rows = []
    diffs = []
    for seed in seeds:
        b = base_rows[seed][-1]
        r = reg_rows[seed][-1]
        gap_b = b[5] - b[6]
        gap_r = r[5] - r[6]
        gap_rows.append((seed, gap_b, gap_r, gap_r - gap_b))
        diffs.append((gap_b, gap_r))
    mean_b = float(np.mean([d[0] for d in diffs]))
    mean_r = float(np.mean([d[1] for d in diffs]))
    gap_rows.append(("mean", mean_b, mean_r, mean_r - mean_b))
    report_path = os.path.join(out_dir, "gap_report.csv")
    write_csv(report_path, GAP_HEADER, gap_rows)

    n_epochs = len(base_rows[seeds[0]])
    curve_rows = []
    for e in range(n_epochs):
        curve_rows.append((
            int(base_rows[seeds[0]][e][0]),
            float(np.mean([base_rows[s][e][5] for s in seeds])),
            float(np.mean([base_rows[s][e][6] for s in seeds])),
            float(np.mean([reg_rows[s][e][5] for s in seeds])),
            float(np.mean([reg_rows[s][e][6] for s in seeds])),
        ))
    curves_path = os.path.join(out_dir, "overfit_curves.csv")
    curves_header = (
        "epoch", "train_acc_lambda0", "test_acc_lambda0",
        "train_acc_lambda_star", "test_acc_lambda_star",
    )
    write_csv(curves_path, curves_header, curve_rows)

    from london.harness import figures

    figure_path = os.path.join(out_dir, "overfit_curves.png")
    figures.overfit_figure(curve_rows, cfg.lam, figure_path)
    return {
        "report": report_path,
        "curves": curves_path,
        "figure": figure_path,
        "mean_gap_lambda0": mean_b,
        "mean_gap_lambda_star": mean_r,
        "gap_rows": gap_rows,
    }
