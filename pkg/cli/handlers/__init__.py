"""Subcommand handlers, one module per group."""

from cli.handlers import data, evaluation, model

__all__ = ["data", "evaluation", "model"]
