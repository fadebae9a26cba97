"""Exceptions shared by the model builders and evaluators."""

from __future__ import annotations


class SolveFailed(RuntimeError):
    """A solve ended without a usable solution; ``outcome`` holds the solver report."""

    def __init__(self, message: str, outcome=None):
        super().__init__(message)
        self.outcome = outcome
