"""Logic Explained Networks: concept-based networks with extractable logic rules."""

__version__ = "0.1.0"
