"""The closed universe of recognizable action classes.

Twelve medical-related actions, each identified by a stable code
(A041..A049, A103..A105) and a human-readable name. Everything that
parses labels from files or the wire goes through ``label_from_code``
so that unknown codes are rejected at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass


class UnknownLabel(ValueError):
    """Raised when a label code or name is outside the 12-class universe."""


@dataclass(frozen=True, order=True)
class ActionLabel:
    code: str
    name: str


LABELS: tuple[ActionLabel, ...] = (
    ActionLabel("A041", "sneeze/cough"),
    ActionLabel("A042", "staggering"),
    ActionLabel("A043", "falling down"),
    ActionLabel("A044", "headache"),
    ActionLabel("A045", "chest pain"),
    ActionLabel("A046", "back pain"),
    ActionLabel("A047", "neck pain"),
    ActionLabel("A048", "nausea/vomiting"),
    ActionLabel("A049", "fan self"),
    ActionLabel("A103", "yawn"),
    ActionLabel("A104", "stretch oneself"),
    ActionLabel("A105", "blow nose"),
)

_BY_CODE = {lab.code: lab for lab in LABELS}
_BY_NAME = {lab.name: lab for lab in LABELS}


def label_from_code(code: str) -> ActionLabel:
    """Look up a label by code, e.g. ``"A043"``. Raises UnknownLabel."""
    try:
        return _BY_CODE[code]
    except KeyError:
        raise UnknownLabel(f"unknown action label code: {code!r}") from None


def label_from_name(name: str) -> ActionLabel:
    """Look up a label by class name, e.g. ``"falling down"``."""
    try:
        return _BY_NAME[name]
    except KeyError:
        raise UnknownLabel(f"unknown action class name: {name!r}") from None
