"""T-matrix synthesis and characteristic modes for multi-structure scatterers."""

__version__ = "0.1.0"
