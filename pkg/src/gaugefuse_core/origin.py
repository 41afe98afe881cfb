from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Origin:
    source: str
    line: int | None = None

    def format(self) -> str:
        if self.line is None:
            return self.source
        return f"{self.source}:{self.line}"


NOWHERE = Origin("<input>")
