"""Spectral islands of periodic Schroedinger operators in weak, slowly varying magnetic fields.

Pipeline: plane-wave Bloch bands, Wannier functions, magnetic hoppings,
Peierls-substituted effective matrices and their spectral analysis.
"""

__version__ = "0.1.0"
