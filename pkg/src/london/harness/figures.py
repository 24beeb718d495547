"""Static PNG renderings of the harness CSV outputs.

Every renderer draws from the already-computed metric rows, uses the
Agg backend, and writes with fixed size/dpi so reruns are reproducible.
The CSVs remain the primary artifacts; these are quick-look companions
saved next to them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

DPI = 120


def _save(fig, out_png) -> None:
    fig.savefig(out_png, dpi=DPI)
    plt.close(fig)


def teacher_curves(rows, out_png) -> None:
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    if rows:
        epochs = [r[0] for r in rows]
        ax_loss.plot(epochs, [r[1] for r in rows], label="train CE")
        ax_acc.plot(epochs, [r[2] for r in rows], label="train acc")
        ax_acc.plot(epochs, [r[3] for r in rows], label="test acc")
        ax_loss.legend()
        ax_acc.legend()
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    fig.suptitle("teacher training")
    fig.tight_layout()
    _save(fig, out_png)


def distill_curves(header, rows, out_png) -> None:
    paired = sum(1 for name in header if name.startswith("sn_teacher_"))
    fig, (ax_loss, ax_acc, ax_sn) = plt.subplots(1, 3, figsize=(13, 3.5))
    if rows:
        epochs = [r[0] for r in rows]
        for col, name in ((1, "total"), (2, "ce"), (3, "kd"), (4, "lip")):
            ax_loss.plot(epochs, [r[col] for r in rows], label=name)
        ax_acc.plot(epochs, [r[5] for r in rows], label="train acc")
        ax_acc.plot(epochs, [r[6] for r in rows], label="test acc")
        for j in range(paired):
            t_col = 7 + j
            s_col = 7 + paired + j
            (line,) = ax_sn.plot(epochs, [r[s_col] for r in rows], label=f"student {j + 1}")
            ax_sn.plot(
                epochs, [r[t_col] for r in rows],
                linestyle="--", color=line.get_color(), label=f"teacher {j + 1}",
            )
        ax_loss.set_yscale("log")
        ax_loss.legend(fontsize=8)
        ax_acc.legend(fontsize=8)
        ax_sn.legend(fontsize=8)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_sn.set_xlabel("epoch")
    ax_sn.set_ylabel("sigma1(TM)")
    fig.suptitle("distillation")
    fig.tight_layout()
    _save(fig, out_png)


def sweep_figure(rows, out_png) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    kept = [(i, r) for i, r in enumerate(rows) if r[1] == r[1]]  # drop NaN cells
    if kept:
        xs = [i for i, _ in kept]
        ax.errorbar(
            xs,
            [r[1] for _, r in kept],
            yerr=[r[2] for _, r in kept],
            marker="o", capsize=3, label="test err",
        )
        ax.plot(xs, [r[3] for _, r in kept], marker="s", label="train err")
        ax.legend()
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([f"{r[0]:g}" for r in rows])
    ax.set_xlabel("lambda")
    ax.set_ylabel("error")
    ax.set_title("lambda ablation sweep")
    fig.tight_layout()
    _save(fig, out_png)


def overfit_figure(curve_rows, lam_star, out_png) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    if curve_rows:
        epochs = [r[0] for r in curve_rows]
        ax.plot(epochs, [r[1] for r in curve_rows], label="train, lambda=0")
        ax.plot(epochs, [r[2] for r in curve_rows], label="test, lambda=0")
        ax.plot(epochs, [r[3] for r in curve_rows], label=f"train, lambda={lam_star:g}")
        ax.plot(epochs, [r[4] for r in curve_rows], label=f"test, lambda={lam_star:g}")
        ax.legend(fontsize=8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_title("overfitting probe")
    fig.tight_layout()
    _save(fig, out_png)


def profile_figure(rows, out_png) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    blocks = [r[0] for r in rows]
    width = 0.35
    ax.bar(
        [b - width / 2 for b in blocks], [r[2] for r in rows],
        width=width, label="sqrt sigma1(TM)",
    )
    dense = [(b, r[3]) for b, r in zip(blocks, rows) if r[3] != ""]
    if dense:
        ax.bar(
            [b + width / 2 for b, _ in dense], [v for _, v in dense],
            width=width, label="sigma1(W)",
        )
    ax.set_xticks(blocks)
    ax.set_xlabel("block")
    ax.set_ylabel("spectral norm")
    ax.set_title("per-block spectral profile")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, out_png)


def data_scatter(features, labels, out_png) -> None:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.scatter(features[0], features[1] if features.shape[0] > 1 else features[0],
               c=labels, s=8, cmap="tab10")
    ax.set_xlabel("f0")
    ax.set_ylabel("f1")
    ax.set_title("generated data (first two features)")
    fig.tight_layout()
    _save(fig, out_png)
