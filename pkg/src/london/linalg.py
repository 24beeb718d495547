"""Dense matrix utilities: dominant-eigenpair estimation and test oracles.

Everything here works on plain 2-D float64 numpy arrays.  The central
routine is :func:`power_iteration`, a multiply-and-normalize loop for
symmetric PSD matrices that the rest of the package uses to estimate
spectral statistics.  :func:`jacobi_top_eigenvalue` is a deliberately
independent oracle (cyclic Jacobi rotations, no shared code with the
power iteration) used for cross-checks in tests and in the analyzer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_RES_STOP = 1e-6
DEFAULT_MAX_ITERS = 1000
SYMMETRY_TOL = 1e-9
COLUMN_NORM_EPS = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a non-empty 2-D float64 array with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


def require_symmetric(a, tol: float = SYMMETRY_TOL, name: str = "matrix") -> np.ndarray:
    """Check squareness and symmetry within ``tol``; return (M + M^T)/2.

    Symmetrizing after the check irons out rounding-level asymmetry so
    downstream iterations see an exactly symmetric operator.
    """
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    skew = np.max(np.abs(m - m.T))
    if skew > tol:
        raise ValueError(
            f"{name} is not symmetric: max |M - M^T| = {skew:.3e} exceeds {tol:.1e}"
        )
    return (m + m.T) / 2.0


@dataclass(frozen=True)
class PowerConfig:
    """Settings for the power-iteration loop."""

    res_stop: float = DEFAULT_RES_STOP
    max_iters: int = DEFAULT_MAX_ITERS
    seed: int = 0

    def __post_init__(self):
        if self.res_stop <= 0:
            raise ValueError("res_stop must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")


@dataclass(frozen=True)
class SpectralEstimate:
    """Result of a power-iteration run.

    ``value`` is the cross Rayleigh quotient v_{i+1}^T M v_i at the final
    step; ``converged`` is true iff the iterate displacement fell below
    the configured stop threshold before the iteration cap.
    """

    value: float
    iterations: int
    final_residual: float
    converged: bool


@dataclass(frozen=True)
class SingularTriple:
    """Top singular value of a matrix with unit left/right vectors."""

    sigma1: float
    u1: np.ndarray
    v1: np.ndarray


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so its first nonzero component is positive."""
    nz = np.flatnonzero(v)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def _start_vector(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.uniform(-1.0, 1.0, n)
    norm = np.linalg.norm(v)
    while norm == 0.0:  # astronomically unlikely; retry on the same stream
        v = rng.uniform(-1.0, 1.0, n)
        norm = np.linalg.norm(v)
    return v / norm


def _power_iterate(tm, res_stop, max_iters, seed, record=None):
    """Core loop shared by power_iteration and top_singular_pair.

    Returns (value, vector, iterations, final_residual, converged).
    ``record``, when a list, receives the self Rayleigh quotient
    v_i^T M v_i of every visited iterate.
    """
    n = tm.shape[0]
    v = _start_vector(n, seed)
    iterations = 0
    residual = math.inf
    value = 0.0
    while iterations < max_iters:
        w = tm @ v
        if record is not None:
            record.append(float(v @ w))
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # v landed in the nullspace of the whole operator direction;
            # by contract the estimate is 0 and counts as converged.
            return 0.0, v, iterations, 0.0, True
        v_next = w / norm_w
        value = float(v_next @ w)
        residual = float(np.linalg.norm(v_next - v))
        v = v_next
        iterations += 1
        if residual < res_stop:
            break
    return value, v, iterations, residual, residual < res_stop


def power_iteration(
    tm,
    res_stop: float = DEFAULT_RES_STOP,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int = 0,
) -> SpectralEstimate:
    """Estimate the top eigenvalue of a symmetric PSD matrix.

    Iterates v <- M v / ||M v||_2 from a seeded uniform random unit
    vector until the displacement ||v_{i+1} - v_i||_2 drops below
    ``res_stop`` or ``max_iters`` is reached, then reports the cross
    Rayleigh quotient v_{i+1}^T M v_i.

    Raises ValueError for non-square or asymmetric input.  A zero
    operator direction (M v = 0) yields value 0.0, converged.
    """
    cfg = PowerConfig(res_stop=res_stop, max_iters=max_iters, seed=seed)
    m = require_symmetric(tm, name="tm")
    value, _, iterations, residual, converged = _power_iterate(
        m, cfg.res_stop, cfg.max_iters, cfg.seed
    )
    return SpectralEstimate(
        value=value,
        iterations=iterations,
        final_residual=residual,
        converged=converged,
    )


def jacobi_top_eigenvalue(sym, tol: float = 1e-12, max_sweeps: int = 100) -> float:
    """Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps annihilate every off-diagonal pair in turn until the
    off-diagonal Frobenius norm falls below ``tol`` (or below the
    rounding floor n*eps*||A||_F for badly scaled input, whichever is
    larger).  Independent of the power-iteration code path on purpose:
    this is the verification oracle.
    """
    a = require_symmetric(sym, name="sym").copy()
    n = a.shape[0]
    if n == 1:
        return float(a[0, 0])
    floor = n * np.finfo(np.float64).eps * np.linalg.norm(a)
    stop = max(tol, floor)
    for _ in range(max_sweeps):
        od = a.copy()
        np.fill_diagonal(od, 0.0)
        off = float(np.linalg.norm(od))
        if off < stop:
            return float(np.max(np.diag(a)))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta**2 would overflow
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (
                        abs(theta) + math.sqrt(theta * theta + 1.0)
                    )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.array([[c, s], [-s, c]])
                a[[p, q], :] = rot.T @ a[[p, q], :]
                a[:, [p, q]] = a[:, [p, q]] @ rot
                a[p, q] = a[q, p] = 0.0
    raise ArithmeticError(f"Jacobi sweep limit ({max_sweeps}) reached before convergence")


def top_singular_pair(
    w,
    res_stop: float = DEFAULT_RES_STOP,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int = 0,
) -> SingularTriple:
    """Top singular value and unit singular vectors of a real matrix.

    Runs the power iteration on W^T W for sigma1^2 and the right vector
    v1, then takes u1 = W v1 / ||W v1||_2.  v1 is sign-normalized so its
    first nonzero component is positive; u1 inherits the consistent sign,
    keeping sigma1 = u1^T W v1 >= 0.

    A zero matrix (or a degenerate zero direction) falls back to the
    first canonical basis vectors with sigma1 = 0.
    """
    mat = as_matrix(w, name="w")
    rows, cols = mat.shape

    def canonical(k):
        e = np.zeros(k)
        e[0] = 1.0
        return e

    if not mat.any():
        return SingularTriple(0.0, canonical(rows), canonical(cols))
    gram = mat.T @ mat
    gram = (gram + gram.T) / 2.0
    value, v, _, _, _ = _power_iterate(gram, res_stop, max_iters, seed)
    v1 = _canonical_sign(v)
    wv = mat @ v1
    norm_wv = np.linalg.norm(wv)
    if norm_wv == 0.0:
        return SingularTriple(0.0, canonical(rows), v1)
    return SingularTriple(math.sqrt(max(value, 0.0)), wv / norm_wv, v1)


def normalize_columns_paired(fm_prev, fm_next, eps: float = COLUMN_NORM_EPS):
    """Rescale paired feature-map columns by the front column norms.

    Column j of both matrices is divided by max(||fm_prev[:, j]||_2, eps),
    so a linear relation fm_next = W fm_prev survives the rescaling.
    Returns the two rescaled matrices.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    prev = as_matrix(fm_prev, "fm_prev")
    nxt = as_matrix(fm_next, "fm_next")
    if prev.shape[1] != nxt.shape[1]:
        raise ValueError(
            f"column counts differ: fm_prev has {prev.shape[1]}, fm_next has {nxt.shape[1]}"
        )
    scale = np.maximum(np.linalg.norm(prev, axis=0), eps)
    return prev / scale, nxt / scale


def random_orthogonal(n: int, seed: int) -> np.ndarray:
    """Seeded random n-by-n orthogonal matrix (Householder QR of a Gaussian).

    Column signs are fixed so the R factor has a non-negative diagonal,
    which makes the result unique and reproducible for a given seed.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    q = q * np.where(d < 0, -1.0, 1.0)
    return q
