"""Leveled lattice FHE and quantum homomorphic evaluation on top of it."""

__version__ = "0.1.0"
