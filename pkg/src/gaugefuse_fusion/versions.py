from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum
from itertools import combinations

from gaugefuse_core.errors import ConfigError
from gaugefuse_ingest.systems import DEFAULT_REGISTRY, StationSystem, SystemRegistry


class BackgroundRole(StrEnum):
    REANALYSIS = "ERA5"
    NWP = "GFS"


@dataclass(frozen=True)
class DatasetVersion:
    """Which station systems are fused over which background (``ERA5+SIA``, ``GFS+A``)."""

    enabled_systems: tuple[StationSystem, ...]
    background: BackgroundRole = BackgroundRole.REANALYSIS

    @property
    def label(self) -> str:
        codes = "".join(system.code for system in self.enabled_systems)
        return f"{self.background.value}+{codes}" if codes else self.background.value

    @property
    def is_background_only(self) -> bool:
        return not self.enabled_systems

    def system_names(self) -> list[str]:
        return [system.name for system in self.enabled_systems]

    def with_background(self, background: BackgroundRole) -> DatasetVersion:
        return DatasetVersion(self.enabled_systems, background)

    def __str__(self) -> str:
        return self.label

    @classmethod
    def of(
        cls,
        systems: list[StationSystem] | tuple[StationSystem, ...] | frozenset[StationSystem],
        background: BackgroundRole = BackgroundRole.REANALYSIS,
        registry: SystemRegistry = DEFAULT_REGISTRY,
    ) -> DatasetVersion:
        chosen = set(systems)
        ordered = tuple(system for system in registry if system in chosen)
        if len(ordered) != len(chosen):
            raise ConfigError("dataset version names a system missing from the registry")
        return cls(ordered, background)

    @classmethod
    def parse(cls, label: str, registry: SystemRegistry = DEFAULT_REGISTRY) -> DatasetVersion:
        head, sep, codes = label.strip().partition("+")
        try:
            background = BackgroundRole(head)
        except ValueError:
            raise ConfigError(
                f"unknown dataset version '{label}'",
                hint="expected ERA5[+codes] or GFS[+codes], e.g. ERA5+SIA",
            ) from None
        if sep and not codes:
            raise ConfigError(f"dataset version '{label}' has an empty system list")
        if len(set(codes)) != len(codes):
            raise ConfigError(f"dataset version '{label}' repeats a system code")
        return cls.of([registry.by_code(code) for code in codes], background, registry)


def training_versions(registry: SystemRegistry = DEFAULT_REGISTRY) -> list[DatasetVersion]:
    """Every subset of the registered systems over the reanalysis, smallest first."""
    systems = list(registry)
    out: list[DatasetVersion] = []
    for size in range(len(systems) + 1):
        for subset in combinations(systems, size):
            out.append(DatasetVersion(tuple(subset)))
    return out


ALL_TRAINING_VERSIONS: tuple[DatasetVersion, ...] = tuple(training_versions())
