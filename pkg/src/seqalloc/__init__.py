"""Multi-period resource allocation under correlated stochastic demand."""

__version__ = "0.1.0"
