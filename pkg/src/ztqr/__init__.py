"""Zero-trust QKD key relay over additively homomorphic BFV encryption."""

__version__ = "0.1.0"
