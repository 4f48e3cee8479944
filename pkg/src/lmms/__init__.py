"""Finite bounded Lorentzian metric measure spaces and their distances."""

__version__ = "0.1.0"
