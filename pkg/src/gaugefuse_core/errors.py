from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import ClassVar

from gaugefuse_core.origin import NOWHERE, Origin


@dataclass
class GaugefuseError(Exception):
    message: str
    origin: Origin = NOWHERE
    hint: str | None = None
    code: str | None = None

    exit_code: ClassVar[int] = 3

    def __post_init__(self) -> None:
        if self.code is None:
            module = _caller_module()
            self.code = _infer_error_code(module, self.message, self.exit_code)

    def __str__(self) -> str:
        out = f"{self.origin.format()}: error[{self.code}]: {one_line(self.message)}"
        if self.hint:
            out += f"\n  hint: {one_line(self.hint)}"
        return out


class ConfigError(GaugefuseError):
    exit_code: ClassVar[int] = 2


class DataFormatError(GaugefuseError):
    exit_code: ClassVar[int] = 3


class ContractViolation(GaugefuseError):
    exit_code: ClassVar[int] = 4


class GridRangeError(ContractViolation):
    pass


class InternalError(GaugefuseError):
    """An unexpected failure surfaced at the CLI boundary."""

    exit_code: ClassVar[int] = 1


def one_line(text: str) -> str:
    return " ".join(part.strip() for part in text.splitlines() if part.strip())


def _caller_module() -> str:
    frame = sys._getframe(2)
    while frame is not None:
        module = frame.f_globals.get("__name__", "")
        if module != __name__ and not module.startswith("dataclasses"):
            return str(module)
        frame = frame.f_back
    return ""


_STAGES: tuple[tuple[str, int], ...] = (
    ("gaugefuse_core.grid", 1),
    ("gaugefuse_ingest", 2),
    ("gaugefuse_fusion", 3),
    ("gaugefuse_window", 4),
    ("gaugefuse_verify", 5),
    ("gaugefuse_baseline", 6),
    ("gaugefuse_cli", 7),
)

# (stage, keyword) -> detail digits; first match wins
_DETAILS: dict[int, tuple[tuple[str, int], ...]] = {
    1: (("out of range", 1), ("invalid grid", 2), ("snap", 3)),
    2: (
        ("header", 1),
        ("payload", 2),
        ("non-finite", 3),
        ("unit", 4),
        ("channel", 5),
        ("mixed stations", 6),
        ("outside the time axis", 7),
        ("magic", 8),
    ),
    3: (("time axis", 1), ("overlap", 2), ("version", 3)),
    4: (("unsorted", 1), ("shape", 2), ("magic", 3), ("truncated", 4), ("fractions", 5)),
    5: (("shape", 1), ("negative", 2), ("non-finite", 3), ("weight", 4), ("leads", 5)),
    6: (("empty training", 1), ("shape", 2)),
    7: (("not found", 1), ("must be", 2), ("missing", 3), ("gap", 4), ("overlap", 5)),
}


def _infer_error_code(module: str, message: str, exit_code: int) -> str:
    lower = message.lower()
    stage = 0
    for prefix, number in _STAGES:
        if module.startswith(prefix):
            stage = number
            break
    detail = 0
    for keyword, number in _DETAILS.get(stage, ()):
        if keyword in lower:
            detail = number
            break
    return f"GF{exit_code}{stage}{detail:02d}"
