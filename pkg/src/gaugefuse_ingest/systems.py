from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from gaugefuse_core.errors import ConfigError

# Rio de Janeiro local time (UTC-3, no DST since 2019)
DEFAULT_TZ_OFFSET_MINUTES = -180


@dataclass(frozen=True)
class StationSystem:
    """A network of gauges sharing a reporting cadence.

    ``code`` is the one-letter tag used in dataset version labels (``ERA5+SIA``).
    """

    name: str
    code: str
    native_resolution: int
    timezone_offset: int = DEFAULT_TZ_OFFSET_MINUTES

    def __post_init__(self) -> None:
        if self.native_resolution <= 0 or 60 % self.native_resolution != 0:
            raise ConfigError(
                f"system '{self.name}': native resolution must divide 60 minutes, "
                f"got {self.native_resolution}"
            )
        if len(self.code) != 1 or not self.code.isalpha() or not self.code.isupper():
            raise ConfigError(f"system '{self.name}': code must be one uppercase letter")

    @property
    def readings_per_hour(self) -> int:
        return 60 // self.native_resolution


SIRENES = StationSystem("Sirenes", "S", 15)
INMET = StationSystem("INMET", "I", 60)
ALERTARIO = StationSystem("AlertaRio", "A", 15)

BUILTIN_SYSTEMS: tuple[StationSystem, ...] = (SIRENES, INMET, ALERTARIO)


class SystemRegistry:
    """Known station systems, in label order (built-ins first)."""

    def __init__(self, systems: Iterable[StationSystem] = BUILTIN_SYSTEMS) -> None:
        self._by_name: dict[str, StationSystem] = {}
        self._by_code: dict[str, StationSystem] = {}
        for system in systems:
            self.register(system)

    def register(self, system: StationSystem) -> None:
        if system.name in self._by_name:
            raise ConfigError(f"duplicate station system '{system.name}'")
        if system.code in self._by_code:
            raise ConfigError(
                f"system code '{system.code}' already used by '{self._by_code[system.code].name}'"
            )
        self._by_name[system.name] = system
        self._by_code[system.code] = system

    def by_name(self, name: str) -> StationSystem:
        try:
            return self._by_name[name]
        except KeyError:
            known = ", ".join(self._by_name)
            raise ConfigError(f"unknown station system '{name}'", hint=f"known: {known}") from None

    def by_code(self, code: str) -> StationSystem:
        try:
            return self._by_code[code]
        except KeyError:
            raise ConfigError(f"unknown station system code '{code}'") from None

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self._by_name.values())

    def __len__(self) -> int:
        return len(self._by_name)


DEFAULT_REGISTRY = SystemRegistry()
