"""Base exception shared by every stage."""

from typing import Optional


class SpecMineError(Exception):
    """Data or configuration error; the CLI maps it to exit code 1."""

    def __init__(self, message: str, stage: Optional[str] = None, location: Optional[str] = None):
        super().__init__(message)
        self.stage = stage
        self.location = location

    def describe(self) -> str:
        """Render the diagnostic with stage and location when known."""
        parts = []
        if self.stage:
            parts.append(f"[{self.stage}]")
        if self.location:
            parts.append(f"{self.location}:")
        parts.append(str(self))
        return " ".join(parts)


class InvariantBroken(SpecMineError):
    """An internal consistency check failed; indicates a defect, not bad input."""
