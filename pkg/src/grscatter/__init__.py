"""Givone-Roesser colligations, formal kernels, Agler decompositions and multievolution scattering."""

__version__ = "0.1.0"
