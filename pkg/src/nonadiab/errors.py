"""Shared exception types with CLI exit-code mapping."""

from __future__ import annotations

__all__ = ["ConfigError", "NumericalAbort"]


class ConfigError(ValueError):
    """Invalid run description; maps to exit code 2."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalAbort(RuntimeError):
    """Propagation produced non-finite values or hit a guard; exit code 3."""

    def __init__(self, message: str, trajectory: int | None = None, step: int | None = None):
        self.trajectory = trajectory
        self.step = step
        parts = [message]
        if trajectory is not None:
            parts.append(f"trajectory {trajectory}")
        if step is not None:
            parts.append(f"step {step}")
        super().__init__("; ".join(parts))
