"""Closed-system rapid-quench annealing simulator and dynamic-coefficient toolkit."""

__version__ = "0.1.0"
