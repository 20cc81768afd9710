"""TOML configuration: one table per pipeline stage.

Schema (all keys optional, defaults shown):

    [preprocess]
    dilation_radius = 2          # pixels, mask dilation disk
    closing_radius = 5           # pixels, mask closing disk
    clamp_limit = 30.0           # radians
    fill_tolerance = 1e-6        # relative Laplacian residual
    fill_max_iters = 0           # 0 = automatic (10 * (w + h))
    input_format = "interpolated"  # or "holes" | "wrapped"

    [patch]
    size = 224                   # pixels, must equal the backbone input
    stride = 112                 # 0 = size / 2

    [model]
    metric = "wnlml"             # maha | wmaha | nlml | wnlml
    reduced_dim = 100            # channels kept from the concatenated embedding
    epsilon = 0.01               # covariance regularizer
    selection_seed = 1024        # seed of the random channel selection

    [weights]
    layers = [0.0, 1.0, 5.0]     # per-backbone-layer distance weights

    [synth]                      # scene template for the synth command
    width = 64
    height = 64
    pixel_size = 100.0
    wavelength = 0.0555
    noise_std = 0.0              # white pixel noise, radians
    center_jitter = 0.25         # epicenter jitter, fraction of image size
    train_fraction = 0.5         # normals assigned to the train split

    [synth.atmosphere]
    amplitude = 3.0
    spectral_exponent = 2.6666666666666665

    [synth.incoherence]
    coverage_fraction = 0.2
    blob_scale = 8.0

    [synth.deformation]          # omit the table for atmosphere-only scenes
    depth = 2000.0
    strength = 160000.0
    los_unit_vector = [0.38, -0.09, 0.92]   # normalized on load
    # source_x / source_y default to the image center

Unknown keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .embed import PatchConfig
from .gaussians import METRICS, LayerWeights
from .preprocess import PreprocessConfig
from .synth import AtmosphereSpec, DeformationSpec, IncoherenceSpec, SceneSpec


class ConfigError(Exception):
    """Malformed or contradictory configuration file."""


@dataclass(frozen=True)
class ModelConfig:
    metric: str = "wnlml"
    reduced_dim: int = 100
    epsilon: float = 0.01
    selection_seed: int = 1024

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.reduced_dim < 1:
            raise ConfigError("reduced_dim must be >= 1")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")


@dataclass(frozen=True)
class SynthConfig:
    scene: SceneSpec
    center_jitter: float = 0.25
    train_fraction: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.center_jitter <= 0.5):
            raise ConfigError("center_jitter must lie in [0, 0.5]")
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class AppConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    patch: PatchConfig = field(default_factory=PatchConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LayerWeights = field(default_factory=LayerWeights)
    synth: SynthConfig | None = None


def _take(table: dict, context: str, allowed: dict) -> dict:
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(f"[{context}]: unknown keys {sorted(unknown)}")
    out = {}
    for key, caster in allowed.items():
        if key in table:
            out[key] = caster(table[key])
    return out


def _parse_synth(table: dict) -> SynthConfig:
    scalar = _take(
        {k: v for k, v in table.items() if not isinstance(v, dict)},
        "synth",
        {
            "width": int,
            "height": int,
            "pixel_size": float,
            "wavelength": float,
            "noise_std": float,
            "center_jitter": float,
            "train_fraction": float,
        },
    )
    width = scalar.get("width", 64)
    height = scalar.get("height", 64)

    atmosphere = AtmosphereSpec(
        **_take(table.get("atmosphere", {}), "synth.atmosphere",
                {"amplitude": float, "spectral_exponent": float})
    )
    incoherence = IncoherenceSpec(
        **_take(table.get("incoherence", {}), "synth.incoherence",
                {"coverage_fraction": float, "blob_scale": float})
    )
    deformation = None
    if "deformation" in table:
        d = _take(
            table["deformation"],
            "synth.deformation",
            {
                "source_x": float,
                "source_y": float,
                "depth": float,
                "strength": float,
                "los_unit_vector": lambda v: tuple(float(x) for x in v),
            },
        )
        d.setdefault("source_x", width / 2.0)
        d.setdefault("source_y", height / 2.0)
        if "los_unit_vector" in d:
            los = np.asarray(d["los_unit_vector"], dtype=np.float64)
            norm = float(np.linalg.norm(los))
            if norm == 0:
                raise ConfigError("[synth.deformation]: los_unit_vector must be nonzero")
            d["los_unit_vector"] = tuple(los / norm)
        if "depth" not in d or "strength" not in d:
            raise ConfigError("[synth.deformation]: depth and strength are required")
        deformation = DeformationSpec(**d)

    unknown_tables = {k for k, v in table.items() if isinstance(v, dict)} - {
        "atmosphere",
        "incoherence",
        "deformation",
    }
    if unknown_tables:
        raise ConfigError(f"[synth]: unknown sub-tables {sorted(unknown_tables)}")

    scene = SceneSpec(
        width=width,
        height=height,
        pixel_size=scalar.get("pixel_size", 100.0),
        deformation=deformation,
        atmosphere=atmosphere,
        incoherence=incoherence,
        noise_std=scalar.get("noise_std", 0.0),
        wavelength=scalar.get("wavelength", 0.0555),
    )
    return SynthConfig(
        scene=scene,
        center_jitter=scalar.get("center_jitter", 0.25),
        train_fraction=scalar.get("train_fraction", 0.5),
    )


def parse_config(data: dict) -> AppConfig:
    unknown = set(data) - {"preprocess", "patch", "model", "weights", "synth"}
    if unknown:
        raise ConfigError(f"unknown top-level tables {sorted(unknown)}")
    try:
        preprocess = PreprocessConfig(
            **_take(
                data.get("preprocess", {}),
                "preprocess",
                {
                    "dilation_radius": int,
                    "closing_radius": int,
                    "clamp_limit": float,
                    "fill_tolerance": float,
                    "fill_max_iters": int,
                    "input_format": str,
                },
            )
        )
        patch = PatchConfig(
            **_take(data.get("patch", {}), "patch", {"size": int, "stride": int})
        )
        model = ModelConfig(
            **_take(
                data.get("model", {}),
                "model",
                {"metric": str, "reduced_dim": int, "epsilon": float, "selection_seed": int},
            )
        )
        weights_table = _take(data.get("weights", {}), "weights", {"layers": tuple})
        weights = LayerWeights(tuple(float(v) for v in weights_table.get("layers", (0.0, 1.0, 5.0))))
        synth = _parse_synth(data["synth"]) if "synth" in data else None
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return AppConfig(preprocess=preprocess, patch=patch, model=model, weights=weights, synth=synth)


def load_config(path) -> AppConfig:
    """Parse a TOML configuration file into an :class:`AppConfig`."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    return parse_config(data)
