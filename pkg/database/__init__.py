"""Database package for the run ledger."""
