"""Pipeline configuration with the published default parameter set."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass
class Config:
    """All tunables; defaults are the reference parameter set.

    File form is line-oriented ``key=value`` using the field names below;
    unknown keys are rejected so typos fail loudly.
    """

    image_size_m: float = 120.0            # S, top-view image physical size
    image_resolution_m: float = 0.16       # r, meters per pixel
    keyframe_count: int = 21               # K, accumulated keyframes per window
    keyframe_position_threshold_m: float = 5.0   # D^p
    keyframe_heading_threshold_deg: float = 10.0  # D^h
    descriptor_outer_radius_m: float = 40.0      # R^o, consistent region outer
    descriptor_inner_radius_m: float = 10.0      # R^i, discrepant region radius
    symmetry_threshold: float = 0.1              # tau^s, on summary vector norm
    pattern_ring_count: int = 8                  # N^r
    pattern_base_cell_count: int = 8             # N^b
    matching_threshold_bits: int = 50            # tau^h, Hamming gate
    harris_window_px: int = 5
    harris_k: float = 0.04
    harris_threshold_rel: float = 0.01
    morph_kernel_radius_px: int = 0        # 0 -> derived: ceil(1.5 m / r)

    def __post_init__(self):
        if self.morph_kernel_radius_px == 0:
            self.morph_kernel_radius_px = math.ceil(1.5 / self.image_resolution_m)
        self.validate()

    def validate(self) -> None:
        pos = [
            ("image_size_m", self.image_size_m),
            ("image_resolution_m", self.image_resolution_m),
            ("descriptor_outer_radius_m", self.descriptor_outer_radius_m),
            ("descriptor_inner_radius_m", self.descriptor_inner_radius_m),
            ("keyframe_position_threshold_m", self.keyframe_position_threshold_m),
            ("keyframe_heading_threshold_deg", self.keyframe_heading_threshold_deg),
        ]
        for name, val in pos:
            if not (val > 0):
                raise ConfigError(f"{name} must be positive, got {val}")
        for name, val in [("keyframe_count", self.keyframe_count),
                          ("pattern_ring_count", self.pattern_ring_count),
                          ("pattern_base_cell_count", self.pattern_base_cell_count),
                          ("harris_window_px", self.harris_window_px),
                          ("morph_kernel_radius_px", self.morph_kernel_radius_px)]:
            if val < 1:
                raise ConfigError(f"{name} must be >= 1, got {val}")
        need = 2.0 * (self.descriptor_outer_radius_m + self.descriptor_inner_radius_m)
        if self.image_size_m < need:
            raise ConfigError(
                "constraint violated: image_size_m >= 2 * (descriptor_outer_radius_m"
                f" + descriptor_inner_radius_m); {self.image_size_m} < {need}"
            )
        if self.matching_threshold_bits < 0:
            raise ConfigError("matching_threshold_bits must be >= 0")

    # -- derived --

    @property
    def side_px(self) -> int:
        return int(round(self.image_size_m / self.image_resolution_m))

    @property
    def keyframe_heading_threshold_rad(self) -> float:
        return math.radians(self.keyframe_heading_threshold_deg)

    @property
    def q_bits(self) -> int:
        return (self.pattern_base_cell_count * self.pattern_ring_count
                * (self.pattern_ring_count + 1) // 2)

    def fingerprint(self):
        from .matchdb import Fingerprint

        return Fingerprint(
            self.image_size_m, self.image_resolution_m,
            self.descriptor_outer_radius_m, self.descriptor_inner_radius_m,
            self.pattern_ring_count, self.pattern_base_cell_count,
            self.symmetry_threshold,
        )


def load_config(path: str, overrides: dict | None = None) -> Config:
    """Read a key=value config file; later keys win; '#' starts a comment."""
    raw: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, ln in enumerate(f, 1):
            ln = ln.split("#", 1)[0].strip()
            if not ln:
                continue
            if "=" not in ln:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {ln!r}")
            k, v = (t.strip() for t in ln.split("=", 1))
            raw[k] = v
    if overrides:
        raw.update({k: str(v) for k, v in overrides.items()})
    return config_from_strings(raw)


def config_from_strings(raw: dict[str, str]) -> Config:
    types = {f.name: f.type for f in fields(Config)}
    kwargs = {}
    for k, v in raw.items():
        if k not in types:
            raise ConfigError(f"unknown config key {k!r}")
        kwargs[k] = int(v) if types[k] == "int" else float(v)
    return Config(**kwargs)


def dump_config(cfg: Config) -> str:
    return "".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in fields(Config))
