"""Generalized branching random walks: simulation, tail recursions and Lyapunov checks."""

__version__ = "0.1.0"
