"""Services package for the mining pipeline."""
