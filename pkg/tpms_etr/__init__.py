"""TPMS ETR - effective threshold/density range analysis and extension for TPMS lattices."""

__version__ = "1.0.0"
