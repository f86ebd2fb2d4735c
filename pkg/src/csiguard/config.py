"""Scenario configuration: dataclasses, the flat key-value file format, hashing.

Config files are UTF-8 text, one ``key = value`` pair per line, ``#``
comments, with dotted prefixes for the nested sections
(``channel.num_paths``, ``grid.pilot_spec``, ``search.refine_tol``, ...).
Command-line flags override file values; the effective configuration is
hashed (sha256 over its canonical serialization) so result files can name
the exact setup that produced them.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelProfile, make_profile
from .errors import ConfigError
from .estimator import PhaseSearchConfig
from .observation import PilotGrid

__all__ = [
    "ChannelConfig",
    "GridConfig",
    "ScenarioConfig",
    "parse_config_text",
    "config_from_mapping",
    "format_config",
    "config_hash",
]

KNOWN_DETECTORS = ("kalman", "magnitude_diff")


@dataclass(frozen=True)
class ChannelConfig:
    num_paths: int = 8
    pdp_decay: float = 0.5
    model: str = "ar1-jakes"

    def __post_init__(self) -> None:
        if self.model != "ar1-jakes":
            raise ConfigError(
                f"channel.model {self.model!r} is not available (only 'ar1-jakes')"
            )


@dataclass(frozen=True)
class GridConfig:
    dft_size: int = 128
    pilot_spec: str = "ieee80211n-40mhz"


@dataclass(frozen=True)
class ScenarioConfig:
    snr_db: float = 10.0
    normalized_doppler: float = 1e-4
    num_steps: int = 2000
    num_trials: int = 200
    nominal_false_alarm: float = 0.1
    seed: int = 12345
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    search: PhaseSearchConfig = field(default_factory=PhaseSearchConfig)
    detectors: tuple[str, ...] = ("kalman",)
    max_slope: float | None = None  # None: 2*pi*4/dft_size

    def __post_init__(self) -> None:
        if self.num_steps < 2:
            raise ConfigError("num_steps must be >= 2")
        if self.num_trials < 1:
            raise ConfigError("num_trials must be >= 1")
        if not (0.0 < self.nominal_false_alarm < 1.0):
            raise ConfigError("p_fa must lie in (0, 1)")
        if not self.detectors:
            raise ConfigError("at least one detector must be enabled")
        for name in self.detectors:
            if name not in KNOWN_DETECTORS:
                raise ConfigError(f"unknown detector {name!r}")

    def resolved_max_slope(self) -> float:
        if self.max_slope is not None:
            return self.max_slope
        return 2.0 * np.pi * 4.0 / self.grid.dft_size

    def channel_profile(self) -> ChannelProfile:
        return make_profile(
            self.channel.num_paths, self.normalized_doppler, self.channel.pdp_decay
        )

    def pilot_grid(self) -> PilotGrid:
        return PilotGrid(
            dft_size=self.grid.dft_size,
            pilot_indices=resolve_pilot_spec(self.grid.pilot_spec, self.grid.dft_size),
        )


def resolve_pilot_spec(spec: str, dft_size: int) -> tuple[int, ...]:
    """Expand a pilot specification into sorted subcarrier indices.

    Accepted forms:
      - ``ieee80211n-40mhz``: the 114 occupied subcarriers of a 40 MHz
        802.11n symbol (logical indices +-2..+-58), requires dft_size 128;
      - ``all``: every subcarrier 0..M-1;
      - ``first:N``: subcarriers 0..N-1;
      - explicit ranges, e.g. ``2-58,70-126`` or ``0,3,7``.
    """
    spec = spec.strip()
    if spec == "ieee80211n-40mhz":
        if dft_size != 128:
            raise ConfigError("pilot_spec 'ieee80211n-40mhz' requires grid.dft_size=128")
        return tuple(range(2, 59)) + tuple(range(70, 127))
    if spec == "all":
        return tuple(range(dft_size))
    if spec.startswith("first:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad pilot_spec {spec!r}") from exc
        if not (1 <= n <= dft_size):
            raise ConfigError(f"pilot_spec {spec!r} out of range for dft_size={dft_size}")
        return tuple(range(n))
    indices: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                indices.extend(range(int(lo), int(hi) + 1))
            else:
                indices.append(int(part))
        except ValueError as exc:
            raise ConfigError(f"bad pilot_spec fragment {part!r}") from exc
    if not indices or sorted(set(indices)) != indices:
        raise ConfigError(f"pilot_spec {spec!r} must list strictly increasing indices")
    if indices[0] < 0 or indices[-1] >= dft_size:
        raise ConfigError(f"pilot_spec {spec!r} out of range for dft_size={dft_size}")
    return tuple(indices)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines into a flat mapping; '#' starts a comment."""
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def _parse(key: str, value: str, kind):
    try:
        if kind is bool:
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r}") from exc


def config_from_mapping(
    mapping: dict[str, str], base: ScenarioConfig | None = None
) -> ScenarioConfig:
    """Apply a flat key-value mapping on top of a base configuration."""
    cfg = base if base is not None else ScenarioConfig()
    channel = cfg.channel
    grid = cfg.grid
    search = cfg.search
    top: dict = {}
    for key, value in mapping.items():
        if key == "snr_db":
            top["snr_db"] = _parse(key, value, float)
        elif key == "doppler":
            top["normalized_doppler"] = _parse(key, value, float)
        elif key == "num_steps":
            top["num_steps"] = _parse(key, value, int)
        elif key == "num_trials":
            top["num_trials"] = _parse(key, value, int)
        elif key == "p_fa":
            top["nominal_false_alarm"] = _parse(key, value, float)
        elif key == "seed":
            top["seed"] = _parse(key, value, int)
        elif key == "detectors":
            names = tuple(n.strip() for n in value.split(",") if n.strip())
            top["detectors"] = names
        elif key == "phase.max_slope":
            top["max_slope"] = _parse(key, value, float)
        elif key == "channel.num_paths":
            channel = replace(channel, num_paths=_parse(key, value, int))
        elif key == "channel.pdp_decay":
            channel = replace(channel, pdp_decay=_parse(key, value, float))
        elif key == "channel.model":
            channel = replace(channel, model=value)
        elif key == "grid.dft_size":
            grid = replace(grid, dft_size=_parse(key, value, int))
        elif key == "grid.pilot_spec":
            grid = replace(grid, pilot_spec=value)
        elif key == "search.slope_points":
            search = replace(search, slope_grid_points=_parse(key, value, int))
        elif key == "search.offset_points":
            search = replace(search, offset_grid_points=_parse(key, value, int))
        elif key == "search.refine_iters":
            search = replace(search, refine_iterations=_parse(key, value, int))
        elif key == "search.refine_tol":
            search = replace(search, refine_tolerance=_parse(key, value, float))
        elif key == "search.slope_bound":
            search = replace(search, slope_search_bound=_parse(key, value, float))
        elif key == "search.objective":
            search = replace(search, objective=value)
        elif key == "search.include_log_det":
            search = replace(search, include_log_det=_parse(key, value, bool))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return replace(cfg, channel=channel, grid=grid, search=search, **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def format_config(cfg: ScenarioConfig) -> str:
    """Canonical serialization (sorted keys); parses back to an equal config."""
    lines = {
        "snr_db": repr(cfg.snr_db),
        "doppler": repr(cfg.normalized_doppler),
        "num_steps": str(cfg.num_steps),
        "num_trials": str(cfg.num_trials),
        "p_fa": repr(cfg.nominal_false_alarm),
        "seed": str(cfg.seed),
        "detectors": ",".join(cfg.detectors),
        "phase.max_slope": repr(cfg.resolved_max_slope()),
        "channel.num_paths": str(cfg.channel.num_paths),
        "channel.pdp_decay": repr(cfg.channel.pdp_decay),
        "channel.model": cfg.channel.model,
        "grid.dft_size": str(cfg.grid.dft_size),
        "grid.pilot_spec": cfg.grid.pilot_spec,
        "search.slope_points": str(cfg.search.slope_grid_points),
        "search.offset_points": str(cfg.search.offset_grid_points),
        "search.refine_iters": str(cfg.search.refine_iterations),
        "search.refine_tol": repr(cfg.search.refine_tolerance),
        "search.slope_bound": repr(cfg.search.slope_search_bound),
        "search.objective": cfg.search.objective,
        "search.include_log_det": str(cfg.search.include_log_det).lower(),
    }
    return "".join(f"{k} = {v}\n" for k, v in sorted(lines.items()))


def config_hash(cfg: ScenarioConfig) -> str:
    """Short hex digest identifying the effective configuration."""
    return hashlib.sha256(format_config(cfg).encode("utf-8")).hexdigest()[:12]
