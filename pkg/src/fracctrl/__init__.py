"""Regularized feedback control for fractional evolution equations.

Synthesizes feedback controls for Caputo fractional-order systems with
non-instantaneous impulses and state-dependent delay on spectrally
truncated generators, and runs the regularization sweep that exhibits
approximate controllability.
"""

__version__ = "0.1.0"
