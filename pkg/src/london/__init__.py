"""Lipschitz-profile knowledge distillation for small dense networks.

The package has four library layers plus an experiment harness:

- :mod:`london.linalg`: power iteration, a Jacobi eigenvalue oracle, and
  matrix helpers shared by everything else.
- :mod:`london.network`: minimal dense/residual networks with manual
  forward and backward passes.
- :mod:`london.lipschitz`: transmitting matrices and per-block spectral
  profiles of a network.
- :mod:`london.distillation`: the composite distillation loss and its
  spectrally regularized training step.
- :mod:`london.harness`: configs, datasets, training loops, sweeps, and
  the ``london`` command-line interface.
"""

from london.linalg import (
    PowerConfig,
    SingularTriple,
    SpectralEstimate,
    jacobi_top_eigenvalue,
    normalize_columns_paired,
    power_iteration,
    random_orthogonal,
    top_singular_pair,
)

__all__ = [
    "PowerConfig",
    "SingularTriple",
    "SpectralEstimate",
    "jacobi_top_eigenvalue",
    "normalize_columns_paired",
    "power_iteration",
    "random_orthogonal",
    "top_singular_pair",
]

__version__ = "0.1.0"
