"""Errors shared by the comparison tables."""

from __future__ import annotations


class KeyMismatchError(KeyError):
    """Two result sets being compared do not cover the same keys."""

    def __init__(self, missing_a, missing_b, what: str = "key"):
        self.missing_a = sorted(missing_a, key=repr)
        self.missing_b = sorted(missing_b, key=repr)
        parts = []
        if self.missing_a:
            parts.append(f"{what}s absent from first run: {self.missing_a}")
        if self.missing_b:
            parts.append(f"{what}s absent from second run: {self.missing_b}")
        super().__init__("; ".join(parts))

    def __str__(self):
        return self.args[0]


def require_same_keys(a, b, what: str = "key") -> None:
    a, b = set(a), set(b)
    if a != b:
        raise KeyMismatchError(b - a, a - b, what)
