"""Verification records and the exceptions that carry them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Certificate:
    """Machine-checkable record that a property held (or failed) to a stated
    horizon and tolerance.

    ``details`` must hold JSON-serializable values only.
    """

    kind: str
    passed: bool
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def __getitem__(self, key: str) -> Any:
        return self.details[key]

    def get(self, key: str, default=None):
        return self.details.get(key, default)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "pass": self.passed}
        out.update(self.details)
        return out

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kwargs)


class DynamicsError(Exception):
    """Base class for verified failures; ``certificate`` holds the diagnostic."""

    def __init__(self, message: str, certificate: Certificate | None = None):
        super().__init__(message)
        self.certificate = certificate


class PseudoOrbitError(DynamicsError):
    pass


class ShadowingError(DynamicsError):
    pass


class WitnessError(DynamicsError):
    pass


class SeparationError(DynamicsError):
    pass


class RefutationError(DynamicsError):
    pass


class StabilizationError(DynamicsError):
    pass


class GridTooLargeError(DynamicsError):
    pass
