"""Adaptive Gaussian RBF collocation for stiff linear PDEs.

The solver approximates a PDE solution as a weighted sum of Gaussian
kernels, fits the weights by linear least squares on collocation points,
and tunes the kernel placement distribution with Bayesian optimization.
"""

__version__ = "0.1.0"
