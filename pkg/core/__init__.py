"""Core package for configuration, logging, errors and file formats."""

__version__ = "0.4.0"
