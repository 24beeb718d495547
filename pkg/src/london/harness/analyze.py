"""Spectral analysis of a saved model against a dataset.

Emits a per-block table (TM statistic, its square root, the exact
weight spectral norm for dense blocks, and the batch independence
score), two product upper bounds on the network's Lipschitz constant,
and the largest difference quotient sampled over random input pairs.

``upper_bound`` multiplies exact per-block weight spectral norms (times
each activation's Lipschitz constant), so it provably dominates every
difference quotient; the sampled ratio exceeding it is enforced as a
hard check, not just reported.  ``tm_upper_bound`` is the profile's
batch-statistic estimate of the same product; it only measures gain on
directions the batch spans, so on strongly correlated feature maps it
can dip below the sampled ratio and is reported for comparison, never
enforced.
"""

from __future__ import annotations

import os

import numpy as np

from london.harness.config import ConfigError, RunConfig, derive_seed
from london.harness.data import load_dataset
from london.harness.training import resolve_path, write_csv
from london.linalg import jacobi_top_eigenvalue, top_singular_pair
from london.lipschitz import build_tm, feature_independence_score, profile_network
from london.network import RESIDUAL, forward_collect, load_model

ANALYSIS_HEADER = (
    "block_index", "sn_tm", "sqrt_sn_tm", "sn_weight_exact", "independence_score",
)
SUMMARY_HEADER = (
    "upper_bound", "tm_upper_bound", "empirical_max_ratio", "batch_size",
    "blocks", "jacobi_max_rel_dev",
)


def run_analyze(cfg: RunConfig, out_dir, model_path=None, data_path=None,
                cross_check: bool = False) -> dict:
    """Analyze a model's spectral profile; write analysis CSVs and a figure.

    The batch is a seeded sample of batch_size dataset columns.  With
    ``cross_check`` the TM top eigenvalues are recomputed through the
    Jacobi oracle and the worst relative deviation from the power
    iteration is reported in the summary (blank otherwise).
    """
    os.makedirs(out_dir, exist_ok=True)
    model = load_model(resolve_path(model_path or cfg.teacher_model, out_dir))
    data = load_dataset(resolve_path(data_path or cfg.train_csv, out_dir), "analyze")
    if data.dim != model.widths[0]:
        raise ConfigError(
            f"dataset dim {data.dim} does not match model input width {model.widths[0]}"
        )
    rng = np.random.default_rng(derive_seed(cfg.seed, "analyze"))
    n = min(cfg.batch_size, data.count)
    idx = rng.choice(data.count, size=n, replace=False)
    batch = data.features[:, np.sort(idx)]

    pcfg = cfg.distill_config().power_config()
    profile = profile_network(model, batch, pcfg)
    _, maps = forward_collect(model, batch)

    rows = []
    jacobi_devs = []
    bound = 1.0
    for k, blk in enumerate(model.blocks, start=1):
        sn_tm = profile.per_block_sn[k - 1]
        if blk.kind == RESIDUAL:
            sn_weight = ""
            sa = top_singular_pair(
                blk.weight, pcfg.res_stop, pcfg.max_iters, pcfg.seed + k
            ).sigma1
            sb = top_singular_pair(
                blk.weight_b, pcfg.res_stop, pcfg.max_iters, pcfg.seed + k
            ).sigma1
            bound *= 1.0 + sb * sa * blk.activation.lipschitz_constant
        else:
            sn_weight = top_singular_pair(
                blk.weight, pcfg.res_stop, pcfg.max_iters, pcfg.seed + k
            ).sigma1
            bound *= sn_weight
            if k < model.depth:  # the final block emits raw logits
                bound *= blk.activation.lipschitz_constant
        score = feature_independence_score(maps[k - 1])
        rows.append((k, sn_tm, float(np.sqrt(sn_tm)), sn_weight, score))
        if cross_check:
            source = "residual" if blk.kind == RESIDUAL else "standard"
            tm = build_tm(maps[k - 1], maps[k], block_index=k, source=source)
            oracle = jacobi_top_eigenvalue(tm.data)
            scale = max(abs(oracle), 1e-12)
            jacobi_devs.append(abs(sn_tm - oracle) / scale)

    x = rng.standard_normal((data.dim, cfg.pairs_sample))
    y = rng.standard_normal((data.dim, cfg.pairs_sample))
    fx, _ = forward_collect(model, x)
    fy, _ = forward_collect(model, y)
    num = np.linalg.norm(fx - fy, axis=0)
    den = np.linalg.norm(x - y, axis=0)
    keep = den > 0
    empirical = float(np.max(num[keep] / den[keep])) if keep.any() else 0.0

    if empirical > bound * (1.0 + 1e-9):
        raise RuntimeError(
            f"Lipschitz bound violated: sampled ratio {empirical:.17g} exceeds "
            f"upper bound {bound:.17g}"
        )

    table_path = os.path.join(out_dir, "analysis.csv")
    write_csv(table_path, ANALYSIS_HEADER, rows)
    summary_path = os.path.join(out_dir, "analysis_summary.csv")
    dev = max(jacobi_devs) if jacobi_devs else ""
    write_csv(
        summary_path, SUMMARY_HEADER,
        [(bound, profile.upper_bound, empirical, n, model.depth, dev)],
    )

    from london.harness import figures

    figure_path = os.path.join(out_dir, "analysis.png")
    figures.profile_figure(rows, figure_path)
    return {
        "table": table_path,
        "summary": summary_path,
        "figure": figure_path,
        "upper_bound": float(bound),
        "tm_upper_bound": profile.upper_bound,
        "empirical_max_ratio": empirical,
        "rows": rows,
        "jacobi_max_rel_dev": dev,
    }
