"""Finite-window toolkit for shifts on Z^d: pattern counts, entropy bounds, quasi-tilings and approximations."""

__version__ = "0.1.0"
