"""Command-line package for the mining pipeline."""
