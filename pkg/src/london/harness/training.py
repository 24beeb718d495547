"""Teacher training and distillation runs with per-epoch metrics.

Per-epoch metric rows are measured by a deterministic evaluation pass:
cross-entropy / soft-label losses on the full training set, spectral
profiles on a fixed evaluation batch (the first batch_size training
columns), and accuracies on the full train and test sets.  The distill
metrics file carries an epoch-0 row with the pre-update values, so two
runs that share a seed but differ in lambda start from identical ce/kd
entries.
"""

from __future__ import annotations

import os

import numpy as np

from london.distillation import (
    distill_step,
    loss_ce,
    loss_kd,
    loss_lip,
    pair_blocks,
)
from london.harness.config import ConfigError, RunConfig, derive_seed, resolve_path
from london.harness.data import Dataset, load_dataset
from london.lipschitz import profile_network
from london.network import (
    Network,
    base_gradients,
    build_network,
    classification_accuracy,
    forward_collect,
    load_model,
    save_model,
    sgd_update,
)

TEACHER_HEADER = ("epoch", "train_loss", "train_acc", "test_acc")


def format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple:
    """Read back a metrics CSV as (header, float-or-string rows)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        row = []
        for tok in ln.split(","):
            try:
                row.append(float(tok))
            except ValueError:
                row.append(tok)
        rows.append(row)
    return header, rows


def minibatch_indices(rng, count: int, batch_size: int):
    """Shuffled minibatch index arrays covering every sample once."""
    perm = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield perm[start : start + batch_size]


def evaluate_network(net: Network, ds: Dataset) -> tuple:
    logits, _ = forward_collect(net, ds.features)
    return loss_ce(logits, ds.labels), classification_accuracy(logits, ds.labels)


def train_teacher(cfg: RunConfig, train: Dataset, test: Dataset) -> tuple:
    """CE-only SGD training of the teacher; returns (net, metric rows)."""
    net = build_network(
        cfg.teacher_widths, "dense", cfg.activation, cfg.init_scale,
        derive_seed(cfg.seed, "teacher_init"),
    )
    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    buffers = None
    rows = []
    for epoch in range(1, cfg.teacher_epochs + 1):
        for idx in minibatch_indices(shuffle_rng, train.count, cfg.batch_size):
            grads = base_gradients(net, train.features[:, idx], train.labels[idx])
            buffers = sgd_update(
                net, grads, cfg.teacher_learning_rate, cfg.teacher_momentum, buffers
            )
        ce, acc = evaluate_network(net, train)
        _, test_acc = evaluate_network(net, test)
        rows.append((epoch, ce, acc, test_acc))
    return net, rows


def distill_header(paired: int) -> tuple:
    return (
        "epoch", "train_loss_total", "loss_ce", "loss_kd", "loss_lip",
        "train_acc", "test_acc",
        *[f"sn_teacher_{j + 1}" for j in range(paired)],
        *[f"sn_student_{j + 1}" for j in range(paired)],
    )


def distill(cfg: RunConfig, teacher: Network, train: Dataset, test: Dataset) -> tuple:
    """Distillation training loop; returns (student, header, metric rows)."""
    if teacher.widths[0] != cfg.dim or teacher.widths[-1] != cfg.classes:
        raise ConfigError(
            f"teacher model widths {teacher.widths} do not match "
            f"dim={cfg.dim}, classes={cfg.classes}"
        )
    dcfg = cfg.distill_config()
    student = build_network(
        cfg.student_widths, "dense", cfg.activation, cfg.init_scale,
        derive_seed(cfg.seed, "student_init"),
    )
    pairs = pair_blocks(student.depth, teacher.depth, cfg.block_pairing)
    eval_batch = train.features[:, : min(cfg.batch_size, train.count)]
    pcfg = dcfg.power_config()
    t_eval_logits, _ = forward_collect(teacher, train.features)
    t_eval_prof = profile_network(teacher, eval_batch, pcfg)

    def eval_row(epoch: int):
        s_logits, _ = forward_collect(student, train.features)
        ce = loss_ce(s_logits, train.labels)
        kd = cfg.kd_weight * loss_kd(s_logits, t_eval_logits, cfg.temperature)
        s_prof = profile_network(student, eval_batch, pcfg)
        t_sn = [t_eval_prof.per_block_sn[tj - 1] for _, tj in pairs]
        s_sn = [s_prof.per_block_sn[si - 1] for si, _ in pairs]
        lip, _ = loss_lip(t_sn, s_sn, cfg.beta) if pairs else (0.0, ())
        total = (cfg.lam / 2.0) * lip + kd + ce
        train_acc = classification_accuracy(s_logits, train.labels)
        _, test_acc = evaluate_network(student, test)
        return (epoch, total, ce, kd, lip, train_acc, test_acc, *t_sn, *s_sn)

    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    buffers = [
        [np.zeros_like(w) for w in blk.weight_list()] for blk in student.blocks
    ]
    rows = [eval_row(0)]
    for epoch in range(1, cfg.epochs + 1):
        for idx in minibatch_indices(shuffle_rng, train.count, cfg.batch_size):
            distill_step(
                student, teacher, train.features[:, idx], train.labels[idx],
                dcfg, buffers=buffers,
            )
        rows.append(eval_row(epoch))
    return student, distill_header(len(pairs)), rows


def load_split(cfg: RunConfig, out_dir) -> tuple:
    train = load_dataset(resolve_path(cfg.train_csv, out_dir), "train")
    test = load_dataset(resolve_path(cfg.test_csv, out_dir), "test")
    for ds in (train, test):
        if ds.dim != cfg.dim:
            raise ConfigError(
                f"{ds.split} dataset has dim {ds.dim}, config says {cfg.dim}"
            )
        if ds.labels.max() >= cfg.classes:
            raise ConfigError(
                f"{ds.split} dataset has label {ds.labels.max()} "
                f">= classes {cfg.classes}"
            )
    return train, test


def run_train_teacher(cfg: RunConfig, out_dir) -> dict:
    """Train the teacher; write teacher.model, metrics CSV, and a figure."""
    os.makedirs(out_dir, exist_ok=True)
    train, test = load_split(cfg, out_dir)
    net, rows = train_teacher(cfg, train, test)
    model_path = resolve_path(cfg.teacher_model, out_dir)
    save_model(net, model_path)
    metrics_path = os.path.join(out_dir, "teacher_metrics.csv")
    write_csv(metrics_path, TEACHER_HEADER, rows)
    from london.harness import figures

    figure_path = os.path.join(out_dir, "teacher_metrics.png")
    figures.teacher_curves(rows, figure_path)
    return {
        "model": model_path,
        "metrics": metrics_path,
        "figure": figure_path,
        "final_train_acc": rows[-1][2] if rows else None,
        "final_test_acc": rows[-1][3] if rows else None,
    }


def run_distill(cfg: RunConfig, out_dir, render: bool = True) -> dict:
    """Distill into a student; write student.model, metrics CSV, and a figure."""
    os.makedirs(out_dir, exist_ok=True)
    teacher = load_model(resolve_path(cfg.teacher_model, out_dir))
    train, test = load_split(cfg, out_dir)
    student, header, rows = distill(cfg, teacher, train, test)
    model_path = os.path.join(out_dir, "student.model")
    save_model(student, model_path)
    metrics_path = os.path.join(out_dir, "student_metrics.csv")
    write_csv(metrics_path, header, rows)
    result = {
        "model": model_path,
        "metrics": metrics_path,
        "final_train_acc": rows[-1][5],
        "final_test_acc": rows[-1][6],
    }
    if render:
        from london.harness import figures

        figure_path = os.path.join(out_dir, "student_metrics.png")
        figures.distill_curves(header, rows, figure_path)
        result["figure"] = figure_path
    return result
