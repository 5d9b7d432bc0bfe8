"""Ergodic averages of Markov operators on finite-dimensional tracial algebras."""

__version__ = "0.1.0"
