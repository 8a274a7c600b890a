"""Normalizing flows on circles, tori and spheres.

Provides circle diffeomorphism families (Mobius, circular spline,
non-compact projection, Fourier), autoregressive flows on products of
circles and intervals, recursive and exponential-map flows on spheres,
a built-in reverse-mode tape for training, KL training against analytic
targets and importance-sampling evaluation.
"""

from .engine import ENGINE, Tape, Var

__all__ = ["Tape", "Var", "ENGINE"]
__version__ = "0.1.0"
