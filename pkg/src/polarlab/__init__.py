"""Polarization analysis for channels transformed by arbitrary binary operations."""
__version__ = "0.1.0"
