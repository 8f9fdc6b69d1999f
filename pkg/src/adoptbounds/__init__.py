"""Principal-stratification bounds for encouragement-design trials."""

__version__ = "0.1.0"
