"""Shared contract between the broker and behavior mechanisms.

A mechanism is invoked with a behavior name, parameters, and a (possibly
empty) map of labeled content inputs. It either returns a result, or names
the labels of its required structoid schema it still needs; the caller
resolves those labels, fetches the content, and invokes again.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union


class MechanismError(Exception):
    """Raised by a mechanism to signal a fault (bad input, unusable content)."""


@dataclass(frozen=True)
class Content:
    """One labeled input: raw bytes, declared MIME, and the source URL."""

    body: bytes
    mime: str
    url: str | None = None


@dataclass(frozen=True)
class BehaviorResult:
    mime: str
    body: bytes


@dataclass(frozen=True)
class NeedsInput:
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))


@dataclass(frozen=True)
class Result:
    result: BehaviorResult


InvokeReply = Union[NeedsInput, Result]

Inputs = Mapping[str, Content]


@dataclass(frozen=True)
class SandboxLimits:
    """Resource limits applied to mechanism execution."""

    timeout_secs: float = 10.0
    max_output_bytes: int = 16 * 1024 * 1024


def mime_matches(declared: str, actual: str) -> bool:
    """True when an actual MIME satisfies a declared one ('image/*' allowed)."""
    if declared == actual:
        return True
    if declared.endswith("/*"):
        return actual.startswith(declared[:-1])
    return False
