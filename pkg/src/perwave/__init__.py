"""Multifront and periodic pulse solutions of periodic-coefficient evolution
systems, with Floquet and Evans-function spectral stability analysis."""

__version__ = "0.1.0"
