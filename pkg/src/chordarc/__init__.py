"""Numerical toolkit for Besov energies, conformal pullbacks and chord-arc curves."""

__version__ = "0.1.0"
