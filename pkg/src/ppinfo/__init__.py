"""Unit-checked information theory for finite point processes."""

__version__ = "0.1.0"
