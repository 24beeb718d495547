"""Transmitting matrices, spectral profiles, and Lipschitz upper bounds.

A block's transmitting matrix (TM) is an N x N symmetric PSD matrix
built from the block's input ("front") and output ("latter") feature
maps for a batch of N samples.  Its top eigenvalue tracks the squared
spectral norm of the block's weight matrix without ever decomposing the
weights directly, which is what makes the statistic cheap to distill.

Construction: after paired column normalization, A = front^T · latter
and TM = A^T A.  When the front and latter feature dimensions differ
(rectangular blocks), front^T · latter is not defined; the TM falls
back to latter^T · latter, which equals A^T A exactly whenever the
front maps form a square orthogonal matrix and extends the statistic
to rectangular blocks (it is front^T (W^T W) front for latter = W·front).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from london.linalg import (
    COLUMN_NORM_EPS,
    PowerConfig,
    as_matrix,
    normalize_columns_paired,
    power_iteration,
    top_singular_pair,
)
from london.network import RESIDUAL, FeatureMapBatch, Network, forward_collect


@dataclass(frozen=True)
class TransmittingMatrix:
    block_index: int
    data: np.ndarray
    source: str = "standard"  # "standard" or "residual"

    @property
    def batch_size(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class LipschitzProfile:
    """Per-block sigma1(TM) statistics plus the network upper bound.

    ``per_block_sn`` holds the raw top eigenvalues of each block's TM
    (one per block, in network order).  ``upper_bound`` multiplies the
    per-block bound factors: sqrt(sigma1(TM)) for dense blocks and
    1 + sigma1(W_b)·sigma1(W_a) for residual blocks.
    """

    per_block_sn: tuple
    upper_bound: float
    batch_size: int


def _map_data(fm, name: str) -> np.ndarray:
    if isinstance(fm, FeatureMapBatch):
        return as_matrix(fm.data, name)
    return as_matrix(fm, name)


def build_tm(fm_front, fm_latter, eps: float = COLUMN_NORM_EPS,
             block_index: int = 0, source: str = "standard") -> TransmittingMatrix:
    """Transmitting matrix for one block from its boundary feature maps.

    Applies paired column normalization (both maps divided by the front
    column norms), then forms A = front^T · latter and returns A^T A.
    Rectangular blocks (front/latter feature dimensions differ) use the
    latter^T · latter fallback described in the module docstring.  The
    result is symmetric PSD of size N x N.
    """
    front = _map_data(fm_front, "fm_front")
    latter = _map_data(fm_latter, "fm_latter")
    if front.shape[1] != latter.shape[1]:
        raise ValueError(
            f"column counts differ: front has {front.shape[1]}, latter has {latter.shape[1]}"
        )
    front_n, latter_n = normalize_columns_paired(front, latter, eps)
    if front_n.shape[0] == latter_n.shape[0]:
        a = front_n.T @ latter_n
        tm = a.T @ a
    else:
        tm = latter_n.T @ latter_n
    tm = (tm + tm.T) / 2.0
    return TransmittingMatrix(block_index=block_index, data=tm, source=source)


def profile_network(net: Network, batch, cfg: PowerConfig = PowerConfig()) -> LipschitzProfile:
    """Per-block sigma1(TM) statistics and the network Lipschitz upper bound.

    Runs one forward pass, builds a TM per block from its boundary maps
    (front = maps[k-1], latter = maps[k]), and estimates each top
    eigenvalue by power iteration (block k uses seed cfg.seed + k, so
    the whole profile is reproducible).  Dense blocks contribute
    sqrt(sigma1(TM)) to the upper bound; residual blocks contribute
    1 + sigma1(W_b)·sigma1(W_a) from their branch weights, since the
    identity path caps the block's gain at 1 plus the branch gain.
    """
    _, maps = forward_collect(net, batch)
    per_block = []
    bound = 1.0
    for k, blk in enumerate(net.blocks, start=1):
        source = "residual" if blk.kind == RESIDUAL else "standard"
        tm = build_tm(maps[k - 1], maps[k], block_index=k, source=source)
        est = power_iteration(
            tm.data, res_stop=cfg.res_stop, max_iters=cfg.max_iters, seed=cfg.seed + k
        )
        sn = max(est.value, 0.0)
        per_block.append(sn)
        if blk.kind == RESIDUAL:
            sa = top_singular_pair(
                blk.weight, cfg.res_stop, cfg.max_iters, cfg.seed + k
            ).sigma1
            sb = top_singular_pair(
                blk.weight_b, cfg.res_stop, cfg.max_iters, cfg.seed + k
            ).sigma1
            bound *= 1.0 + sb * sa * blk.activation.lipschitz_constant
        else:
            bound *= np.sqrt(sn)
    return LipschitzProfile(
        per_block_sn=tuple(per_block),
        upper_bound=float(bound),
        batch_size=maps[0].batch_size,
    )


def feature_independence_score(fm) -> float:
    """Max absolute off-diagonal of the normalized feature-map Gram matrix.

    0 means the batch columns are mutually orthogonal, the regime where
    the TM statistic is exact; values near 1 flag strongly correlated
    samples for which the statistic is only an approximation.
    """
    data = _map_data(fm, "fm")
    unit, _ = normalize_columns_paired(data, data)
    gram = unit.T @ unit
    n = gram.shape[0]
    if n == 1:
        return 0.0
    off = gram - np.diag(np.diag(gram))
    return float(np.max(np.abs(off)))
