"""Stochastic earned-value project control toolkit."""

__version__ = "0.1.0"
