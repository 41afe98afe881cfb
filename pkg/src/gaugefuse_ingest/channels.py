from __future__ import annotations

from dataclasses import dataclass

PRECIP = "precip"
LEVELS_HPA: tuple[int, ...] = (1000, 700, 200)
LEVEL_VARIABLES: tuple[str, ...] = (
    "temperature",
    "relative_humidity",
    "u_wind",
    "v_wind",
    "wind_speed",
    "vertical_velocity",
)


@dataclass(frozen=True)
class ChannelKey:
    name: str
    level_hpa: int | None = None

    @property
    def label(self) -> str:
        if self.level_hpa is None:
            return self.name
        return f"{self.name}@{self.level_hpa}hPa"


CANONICAL_CHANNELS: tuple[ChannelKey, ...] = (ChannelKey(PRECIP),) + tuple(
    ChannelKey(variable, level) for level in LEVELS_HPA for variable in LEVEL_VARIABLES
)
N_CHANNELS = len(CANONICAL_CHANNELS)
PRECIP_CHANNEL = 0

# declared unit -> factor to mm/h (hourly accumulations)
PRECIP_UNIT_FACTORS: dict[str, float] = {
    "m": 1000.0,
    "m/h": 1000.0,
    "mm": 1.0,
    "mm/h": 1.0,
}


def channel_labels() -> list[str]:
    return [key.label for key in CANONICAL_CHANNELS]
