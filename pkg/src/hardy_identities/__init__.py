"""Verify Hardy-norm identities sum |a_n|^2 = G_V(a) for conformal maps onto planar domains."""

__version__ = "0.1.0"
