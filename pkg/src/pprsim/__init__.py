"""Exact channel simulation, private representation and one-shot network coding."""
__version__ = "0.1.0"
