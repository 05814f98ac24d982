"""Exact Gibbs samplers for truncated bosonic Fock spaces."""

__version__ = "0.1.0"
