"""Minimal dense / residual-dense networks with manual backpropagation.

Blocks carry no biases, so every block is a linear map followed by a
pointwise activation (the final block emits raw logits).  Residual
blocks compute x + W_b·act(W_a·x) with both inner matrices square.
Feature maps are captured post-activation at every block boundary,
columns are samples.

Model files are line-oriented text (header ``LONDON-MODEL v1``) with
weights printed to 17 significant digits so that save/load round-trips
reproduce bit-identical doubles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from london.linalg import as_matrix

DENSE = "dense"
RESIDUAL = "residual_dense"
MODEL_HEADER = "LONDON-MODEL v1"

_ACTIVATION_KINDS = ("relu", "leaky_relu", "tanh", "sigmoid", "identity")


class ModelFormatError(ValueError):
    """Raised when a model file cannot be parsed; names the offending line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Activation:
    """Pointwise activation with its exact Lipschitz constant."""

    kind: str
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in _ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind: {self.kind!r}")
        if self.kind == "leaky_relu" and self.slope <= 0:
            raise ValueError("leaky_relu slope must be positive")

    @property
    def lipschitz_constant(self) -> float:
        if self.kind == "sigmoid":
            return 0.25
        if self.kind == "leaky_relu":
            return max(1.0, self.slope)
        return 1.0

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, z, self.slope * z)
        if self.kind == "tanh":
            return np.tanh(z)
        if self.kind == "sigmoid":
            # split by sign so exp never sees a large positive argument
            out = np.empty_like(z)
            pos = z >= 0.0
            out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
            ez = np.exp(z[~pos])
            out[~pos] = ez / (1.0 + ez)
            return out
        return z

    def derivative(self, z: np.ndarray) -> np.ndarray:
        """Pointwise derivative evaluated at pre-activation values."""
        if self.kind == "relu":
            return (z > 0.0).astype(np.float64)
        if self.kind == "leaky_relu":
            return np.where(z > 0.0, 1.0, self.slope)
        if self.kind == "tanh":
            return 1.0 - np.tanh(z) ** 2
        if self.kind == "sigmoid":
            s = self.apply(z)
            return s * (1.0 - s)
        return np.ones_like(z)

    def spec(self) -> str:
        """Serialization token, e.g. ``relu`` or ``leaky_relu:0.1``."""
        if self.kind == "leaky_relu":
            return f"leaky_relu:{self.slope:.17g}"
        return self.kind


def parse_activation(token: str) -> Activation:
    if token.startswith("leaky_relu:"):
        return Activation("leaky_relu", slope=float(token.split(":", 1)[1]))
    return Activation(token)


@dataclass
class Block:
    """One network block.

    Dense blocks hold a single ``weight`` of shape d_out x d_in and
    apply ``activation`` after it (skipped for the final block).
    Residual blocks hold square ``weight`` (W_a) and ``weight_b`` (W_b)
    and compute x + W_b·act(W_a·x); no outer activation.
    """

    kind: str
    weight: np.ndarray
    activation: Activation
    weight_b: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (DENSE, RESIDUAL):
            raise ValueError(f"unknown block kind: {self.kind!r}")
        if self.kind == RESIDUAL:
            d = self.weight.shape[0]
            if self.weight.shape != (d, d) or self.weight_b is None or self.weight_b.shape != (d, d):
                raise ValueError("residual_dense requires two square matrices of equal size")

    @property
    def in_width(self) -> int:
        return self.weight.shape[1]

    @property
    def out_width(self) -> int:
        return self.weight.shape[1] if self.kind == RESIDUAL else self.weight.shape[0]

    def weight_list(self) -> list:
        """All trainable matrices of this block, in update order."""
        if self.kind == RESIDUAL:
            return [self.weight, self.weight_b]
        return [self.weight]


@dataclass
class Network:
    blocks: list

    def __post_init__(self):
        prev = None
        for i, b in enumerate(self.blocks):
            if prev is not None and b.in_width != prev:
                raise ValueError(
                    f"block {i + 1} expects input width {b.in_width}, got {prev}"
                )
            prev = b.out_width

    @property
    def widths(self) -> list:
        return [self.blocks[0].in_width] + [b.out_width for b in self.blocks]

    @property
    def depth(self) -> int:
        return len(self.blocks)

    def copy(self) -> "Network":
        out = []
        for b in self.blocks:
            wb = None if b.weight_b is None else b.weight_b.copy()
            out.append(Block(b.kind, b.weight.copy(), b.activation, wb))
        return Network(out)


@dataclass
class FeatureMapBatch:
    """Activations at one block boundary; columns are samples."""

    block_index: int
    data: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.data.shape[1]


def build_network(
    widths,
    block_kinds,
    activation: Activation,
    init_scale: float = 1.0,
    seed: int = 0,
) -> Network:
    """Seeded Gaussian-initialized network; entries scaled by init_scale/sqrt(d_in).

    ``block_kinds`` may be a single kind applied to every block or one
    kind per block.  Residual blocks are only legal where the widths on
    both sides agree.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ValueError("widths must list at least input and output dimensions")
    if any(w < 1 for w in widths):
        raise ValueError("widths must be positive")
    if init_scale <= 0:
        raise ValueError("init_scale must be positive")
    n_blocks = len(widths) - 1
    if isinstance(block_kinds, str):
        block_kinds = [block_kinds] * n_blocks
    if len(block_kinds) != n_blocks:
        raise ValueError(
            f"need {n_blocks} block kinds for {len(widths)} widths, got {len(block_kinds)}"
        )
    rng = np.random.default_rng(seed)
    blocks = []
    for k in range(n_blocks):
        d_in, d_out = widths[k], widths[k + 1]
        scale = init_scale / np.sqrt(d_in)
        if block_kinds[k] == RESIDUAL:
            if d_in != d_out:
                raise ValueError(
                    f"residual block {k + 1} requires equal widths, got {d_in} -> {d_out}"
                )
            w_a = rng.standard_normal((d_in, d_in)) * scale
            w_b = rng.standard_normal((d_in, d_in)) * scale
            blocks.append(Block(RESIDUAL, w_a, activation, w_b))
        elif block_kinds[k] == DENSE:
            w = rng.standard_normal((d_out, d_in)) * scale
            blocks.append(Block(DENSE, w, activation))
        else:
            raise ValueError(f"unknown block kind: {block_kinds[k]!r}")
    return Network(blocks)


def _forward_trace(net: Network, batch: np.ndarray):
    """Forward pass keeping everything backprop needs.

    Returns (outputs, trace) where outputs[k] is the post-block map for
    boundary k (outputs[0] = input) and trace[k] caches the block's
    intermediate arrays.
    """
    x = as_matrix(batch, "batch")
    if x.shape[0] != net.blocks[0].in_width:
        raise ValueError(
            f"batch has {x.shape[0]} rows, network expects {net.blocks[0].in_width}"
        )
    outputs = [x]
    trace = []
    last = net.depth - 1
    for k, blk in enumerate(net.blocks):
        if blk.kind == RESIDUAL:
            z = blk.weight @ x
            h = blk.activation.apply(z)
            x = x + blk.weight_b @ h
            trace.append((z, h))
        else:
            z = blk.weight @ x
            if k == last:
                x = z
                trace.append((z, None))
            else:
                x = blk.activation.apply(z)
                trace.append((z, None))
        outputs.append(x)
    return outputs, trace


def forward_collect(net: Network, batch) -> tuple:
    """Run the network on a batch and capture all block-boundary maps.

    Returns (logits, maps) with maps[k] the FeatureMapBatch at boundary
    k for k = 0 .. L; maps[L].data is the logits (final block emits raw
    scores, no activation).
    """
    outputs, _ = _forward_trace(net, batch)
    maps = [FeatureMapBatch(k, m) for k, m in enumerate(outputs)]
    return outputs[-1], maps


def log_softmax_columns(logits: np.ndarray) -> np.ndarray:
    """Column-wise log-softmax with log-sum-exp stabilization."""
    shifted = logits - np.max(logits, axis=0, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=0, keepdims=True))


def softmax_columns(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax_columns(logits))


def _check_labels(labels, n_classes: int, n_samples: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"labels must be a length-{n_samples} vector")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(
            f"label out of range: values must lie in [0, {n_classes})"
        )
    return y.astype(np.intp)


def base_gradients(
    net: Network,
    batch,
    labels,
    teacher_logits=None,
    temperature: float = 1.0,
    kd_weight: float = 0.0,
) -> list:
    """Exact gradients of L_CE + kd_weight·L_KD for every weight matrix.

    L_CE is mean softmax cross-entropy against ``labels``; L_KD is the
    T^2-scaled KL divergence between temperature-softened teacher and
    student softmaxes, mean over the batch.  Returns one list of arrays
    per block, matching Block.weight_list() order.
    """
    outputs, trace = _forward_trace(net, batch)
    logits = outputs[-1]
    n_classes, n = logits.shape
    y = _check_labels(labels, n_classes, n)

    probs = softmax_columns(logits)
    grad_logits = probs.copy()
    grad_logits[y, np.arange(n)] -= 1.0
    grad_logits /= n

    if kd_weight != 0.0:
        if teacher_logits is None:
            raise ValueError("teacher_logits required when kd_weight is nonzero")
        t_logits = as_matrix(teacher_logits, "teacher_logits")
        if t_logits.shape != logits.shape:
            raise ValueError(
                f"teacher_logits shape {t_logits.shape} != student logits {logits.shape}"
            )
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        p_t = softmax_columns(t_logits / temperature)
        p_s = softmax_columns(logits / temperature)
        grad_logits = grad_logits + kd_weight * (temperature / n) * (p_s - p_t)

    grads = []
    g = grad_logits
    last = net.depth - 1
    for k in range(last, -1, -1):
        blk = net.blocks[k]
        x = outputs[k]
        z, h = trace[k]
        if blk.kind == RESIDUAL:
            g_wb = g @ h.T
            g_h = blk.weight_b.T @ g
            g_z = g_h * blk.activation.derivative(z)
            g_wa = g_z @ x.T
            g = g + blk.weight.T @ g_z
            grads.append([g_wa, g_wb])
        else:
            if k != last:
                g = g * blk.activation.derivative(z)
            grads.append([g @ x.T])
            g = blk.weight.T @ g
    grads.reverse()
    return grads


def sgd_update(net: Network, grads: list, learning_rate: float, momentum: float = 0.0, buffers=None):
    """One in-place SGD step; returns the (possibly new) momentum buffers.

    buf <- momentum·buf + grad; W <- W − learning_rate·buf.  Pass the
    returned buffers back in on the next call to continue the momentum
    recursion.
    """
    if buffers is None:
        buffers = [
            [np.zeros_like(w) for w in blk.weight_list()] for blk in net.blocks
        ]
    for blk, g_list, b_list in zip(net.blocks, grads, buffers):
        for w, g, buf in zip(blk.weight_list(), g_list, b_list):
            if momentum != 0.0:
                buf *= momentum
                buf += g
            else:
                buf[...] = g
            w -= learning_rate * buf
    return buffers


def classification_accuracy(logits, labels) -> float:
    """Fraction of columns whose argmax matches the label."""
    logits = np.asarray(logits)
    y = np.asarray(labels)
    return float(np.mean(np.argmax(logits, axis=0) == y))


def _format_row(row) -> str:
    return " ".join(f"{v:.17g}" for v in row)


def save_model(net: Network, path) -> None:
    """Write the line-oriented text format; 17 significant digits per weight."""
    lines = [MODEL_HEADER]
    for k, blk in enumerate(net.blocks, start=1):
        if blk.kind == RESIDUAL:
            d = blk.weight.shape[0]
            lines.append(f"block {k} {RESIDUAL} {blk.activation.spec()} {2 * d} {d}")
            for row in blk.weight:
                lines.append(_format_row(row))
            for row in blk.weight_b:
                lines.append(_format_row(row))
        else:
            rows, cols = blk.weight.shape
            lines.append(f"block {k} {DENSE} {blk.activation.spec()} {rows} {cols}")
            for row in blk.weight:
                lines.append(_format_row(row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> Network:
    """Parse a model file; raises ModelFormatError naming the offending line."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ModelFormatError(0, f"cannot read model file: {exc}") from None
    if not lines or lines[0] != MODEL_HEADER:
        raise ModelFormatError(1, f"expected header {MODEL_HEADER!r}")
    blocks = []
    i = 1
    expected_index = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) != 6 or parts[0] != "block":
            raise ModelFormatError(i + 1, f"expected block header, got {lines[i]!r}")
        try:
            k = int(parts[1])
            kind = parts[2]
            act = parse_activation(parts[3])
            rows = int(parts[4])
            cols = int(parts[5])
        except ValueError as exc:
            raise ModelFormatError(i + 1, f"bad block header: {exc}") from None
        if k != expected_index:
            raise ModelFormatError(i + 1, f"expected block {expected_index}, got {k}")
        if kind not in (DENSE, RESIDUAL):
            raise ModelFormatError(i + 1, f"unknown block kind {kind!r}")
        if rows < 1 or cols < 1:
            raise ModelFormatError(i + 1, "rows and cols must be positive")
        if kind == RESIDUAL and rows != 2 * cols:
            raise ModelFormatError(
                i + 1, f"residual block needs rows = 2*cols, got {rows}x{cols}"
            )
        data = np.empty((rows, cols))
        for r in range(rows):
            line_no = i + 2 + r
            if i + 1 + r >= len(lines):
                raise ModelFormatError(line_no, "unexpected end of file inside block")
            fields = lines[i + 1 + r].split()
            if len(fields) != cols:
                raise ModelFormatError(
                    line_no, f"expected {cols} values, got {len(fields)}"
                )
            try:
                data[r] = [float(v) for v in fields]
            except ValueError:
                raise ModelFormatError(line_no, "non-numeric weight value") from None
        if not np.isfinite(data).all():
            raise ModelFormatError(i + 2, "non-finite weight value in block")
        if kind == RESIDUAL:
            blocks.append(Block(RESIDUAL, data[:cols], act, data[cols:]))
        else:
            blocks.append(Block(DENSE, data, act))
        i += 1 + rows
        expected_index += 1
    if not blocks:
        raise ModelFormatError(2, "model has no blocks")
    try:
        return Network(blocks)
    except ValueError as exc:
        raise ModelFormatError(2, f"inconsistent block shapes: {exc}") from None
