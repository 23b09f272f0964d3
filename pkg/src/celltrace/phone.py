"""Phone number canonicalization shared by the trace engine and the registry."""

from __future__ import annotations

import re

_NUMBER_RE = re.compile(r"^\+?[0-9]{8,15}$")
_SEPARATORS = re.compile(r"[\s\-().]")


class InvalidNumberError(ValueError):
    """Raised when a string cannot be read as a subscriber number."""


def canonical_number(raw: str) -> str:
    """Normalize a subscriber number to its canonical form.

    Separators (spaces, hyphens, dots, parentheses) are stripped; what remains
    must be 8-15 digits with an optional leading plus, which is preserved.
    """
    if not isinstance(raw, str):
        raise InvalidNumberError(f"number must be a string, got {type(raw).__name__}")
    cleaned = _SEPARATORS.sub("", raw.strip())
    if not _NUMBER_RE.match(cleaned):
        raise InvalidNumberError(f"not a valid subscriber number: {raw!r}")
    return cleaned
