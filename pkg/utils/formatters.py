"""Text formatting for formulas, models and scores."""

from fractions import Fraction
from typing import Optional

from services.formula import And, Formula, conj, conjuncts
from services.formula_syntax import format_formula
from services.sat import Solver


def display_formula(formula: Formula, solver: Optional[Solver] = None) -> str:
    """
    Render a formula with redundant top-level conjuncts removed.

    Args:
        formula: Formula to render
        solver: Solver used for the implication checks

    Returns:
        Formula text; the stored formula is left untouched
    """
    if not isinstance(formula, And) or solver is None:
        return format_formula(formula)
    kept = list(conjuncts(formula))
    index = 0
    while index < len(kept):
        rest = kept[:index] + kept[index + 1:]
        if rest and solver.implies(conj(rest), kept[index]):
            del kept[index]
        else:
            index += 1
    return format_formula(conj(kept))


def format_fraction(value: Optional[Fraction]) -> str:
    """
    Format a rational as a decimal with four places.

    Args:
        value: Rational or None

    Returns:
        Formatted string like "0.8750", or "n/a"
    """
    if value is None:
        return "n/a"
    return f"{float(value):.4f}"


def format_score(score) -> str:
    """One-line summary of a score."""
    return (
        f"precision={format_fraction(score.precision)} "
        f"recall={format_fraction(score.recall)} "
        f"f1={format_fraction(score.f1)} "
        f"acc={format_fraction(score.acc)}"
    )


def format_seconds(seconds: float) -> str:
    if seconds < 1:
        return f"{seconds * 1000:.0f} ms"
    return f"{seconds:.2f} s"
