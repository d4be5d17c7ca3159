"""Pipeline configuration with strict, lossless JSON round-tripping."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geometry import ScannerConfig
from .stitching import StitchParams


@dataclass(frozen=True)
class MaskParams:
    normal_deg: float = 10.0
    infill_radius: int = 40
    light_from: str = "right"


@dataclass(frozen=True)
class StitchSection:
    grid_rows: int = 2
    grid_cols: int = 2
    overlap: float = 0.3
    jitter: int = 0
    search_window: int = 12
    color_weight: float = 0.5
    height_weight: float = 0.5
    blend_sigma: float = 16.0
    min_overlap: float = 0.1
    flat_contrast: float = 0.2

    def params(self) -> StitchParams:
        return StitchParams(self.search_window, self.color_weight, self.height_weight, self.blend_sigma,
                            self.min_overlap, self.flat_contrast)


@dataclass(frozen=True)
class FabricationParams:
    dpi: int = 450
    layer_thickness_um: float = 10.0
    gloss_curve: str | None = None  # CSV path; None uses the built-in synthetic curve
    z_limit_mm: float = 5.0


@dataclass(frozen=True)
class SimulationParams:
    width: int = 512
    height: int = 256
    pixel_pitch_um: float | None = None
    noise_sigma: float = 0.0
    vignette: float = 0.25
    scene: dict | None = None  # scene description; None uses the default scene
    rotation_size: int = 192  # side of the square scene scanned at four orientations


_SECTIONS = {
    "scanner": ScannerConfig,
    "mask": MaskParams,
    "stitch": StitchSection,
    "fabrication": FabricationParams,
    "simulation": SimulationParams,
}


@dataclass(frozen=True)
class PipelineConfig:
    scanner: ScannerConfig = field(default_factory=ScannerConfig)
    mask: MaskParams = field(default_factory=MaskParams)
    stitch: StitchSection = field(default_factory=StitchSection)
    fabrication: FabricationParams = field(default_factory=FabricationParams)
    simulation: SimulationParams = field(default_factory=SimulationParams)
    seed: int = 0

    def to_dict(self) -> dict:
        out = {"seed": self.seed}
        for name in _SECTIONS:
            sec = getattr(self, name)
            out[name] = sec.to_dict() if hasattr(sec, "to_dict") else dataclasses.asdict(sec)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(_SECTIONS) - {"seed"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for name, typ in _SECTIONS.items():
            if name not in data:
                continue
            sec = data[name]
            if not isinstance(sec, dict):
                raise ConfigError(f"section '{name}' must be an object")
            if typ is ScannerConfig:
                try:
                    kwargs[name] = ScannerConfig.from_dict(sec)
                except (KeyError, TypeError, ValueError) as exc:
                    raise ConfigError(f"scanner: {exc}") from None
                continue
            allowed = {f.name for f in dataclasses.fields(typ)}
            bad = set(sec) - allowed
            if bad:
                raise ConfigError(f"unknown keys in '{name}': {sorted(bad)}")
            kwargs[name] = typ(**sec)
        if "seed" in data:
            if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
                raise ConfigError("seed must be an integer")
            kwargs["seed"] = data["seed"]
        return cls(**kwargs)

    def with_seed(self, seed: int | None) -> "PipelineConfig":
        return self if seed is None else dataclasses.replace(self, seed=int(seed))

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return PipelineConfig.from_dict(data)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
