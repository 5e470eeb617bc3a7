"""Periodic demand estimation for cyclic tactical service network design."""

__version__ = "0.1.0"
