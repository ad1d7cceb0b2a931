"""Citation-driven patent retrieval benchmark engine."""

__version__ = "0.1.0"
