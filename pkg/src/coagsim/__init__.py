"""Zero-temperature interacting Brownian particles in one dimension."""

__version__ = "0.1.0"
