"""Batch Bayesian optimization via pseudo-observation conditioning.

Surrogates that support efficient conditioning (GP with rank-one
Cholesky updates, multiquadric RBF interpolants) produce diverse
batches under constant-liar / believer / fantasy strategies; parametric
reference surrogates (network ensemble, random forest) are included to
demonstrate the degenerate alternative.  The package also ships the
fixed-start structural diversity diagnostic, local-penalization and
random baselines, and a reproducible experiment harness.
"""

__version__ = "0.1.0"
