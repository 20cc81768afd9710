"""Synthetic interferogram generation for testing and benchmarking.

Scenes are built from three independent ingredients:

* a point pressure source in an elastic half-space (closed-form surface
  displacement, projected onto the line of sight and converted to two-way
  phase via ``4 * pi / wavelength``),
* a correlated atmospheric phase screen synthesized in the Fourier domain
  with a power-law spectrum,
* an incoherence mask made by thresholding a smooth random field at the
  quantile matching the requested coverage.

All randomness flows through the counter-based Philox generator seeded from
``SceneSpec.rng_seed``, so scenes are reproducible bit-for-bit across
platforms for a fixed NumPy major version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .raster import Interferogram

SENTINEL1_WAVELENGTH = 0.0555  # meters, C-band

# typical Sentinel-1 viewing geometry, normalized to unit length
DEFAULT_LOS = tuple(
    np.asarray([0.38, -0.09, 0.92]) / np.linalg.norm([0.38, -0.09, 0.92])
)

LABEL_NORMAL = "normal"
LABEL_DEFORMATION = "deformation"


@dataclass(frozen=True)
class DeformationSpec:
    """Point pressure source under the scene.

    ``strength`` scales the displacement field (units m^3-equivalent);
    ``source_x``/``source_y`` are epicenter pixel coordinates, ``depth`` is in
    meters, and ``los_unit_vector`` is the unit line-of-sight direction the
    3-D displacement is projected onto.
    """

    source_x: float
    source_y: float
    depth: float
    strength: float
    los_unit_vector: tuple = DEFAULT_LOS

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError("source depth must be > 0")
        los = np.asarray(self.los_unit_vector, dtype=np.float64)
        if los.shape != (3,):
            raise ValueError("los_unit_vector must have 3 components")
        if abs(float(np.linalg.norm(los)) - 1.0) > 1e-9:
            raise ValueError("los_unit_vector must have unit norm (within 1e-9)")


@dataclass(frozen=True)
class AtmosphereSpec:
    """Turbulent phase screen: std in radians, power-law spectral exponent."""

    amplitude: float = 0.0
    spectral_exponent: float = 8.0 / 3.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("atmosphere amplitude must be >= 0")


@dataclass(frozen=True)
class IncoherenceSpec:
    """Missing-data blobs: target missing fraction and blob length scale."""

    coverage_fraction: float = 0.0
    blob_scale: float = 8.0

    def __post_init__(self):
        if not (0.0 <= self.coverage_fraction < 1.0):
            raise ValueError("coverage_fraction must lie in [0, 1)")
        if self.blob_scale <= 0:
            raise ValueError("blob_scale must be > 0")


@dataclass(frozen=True)
class SceneSpec:
    """Complete description of one synthetic scene.

    ``noise_std`` adds white pixel-scale phase noise (radians), emulating
    the decorrelation noise of real interferograms; 0 disables it.
    """

    width: int
    height: int
    pixel_size: float = 100.0
    deformation: DeformationSpec | None = None
    atmosphere: AtmosphereSpec = field(default_factory=AtmosphereSpec)
    incoherence: IncoherenceSpec = field(default_factory=IncoherenceSpec)
    noise_std: float = 0.0
    rng_seed: int = 0
    wavelength: float = SENTINEL1_WAVELENGTH

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be positive")
        if self.pixel_size <= 0 or self.wavelength <= 0:
            raise ValueError("pixel_size and wavelength must be > 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    def to_metadata(self) -> dict:
        """Flatten the spec into string key/value pairs for raster metadata."""
        md = {
            "synth:width": str(self.width),
            "synth:height": str(self.height),
            "synth:pixel_size": repr(self.pixel_size),
            "synth:seed": str(self.rng_seed),
            "synth:wavelength": repr(self.wavelength),
            "synth:atmosphere_amplitude": repr(self.atmosphere.amplitude),
            "synth:spectral_exponent": repr(self.atmosphere.spectral_exponent),
            "synth:coverage_fraction": repr(self.incoherence.coverage_fraction),
            "synth:blob_scale": repr(self.incoherence.blob_scale),
            "synth:noise_std": repr(self.noise_std),
        }
        d = self.deformation
        if d is not None:
            md.update(
                {
                    "synth:source_x": repr(d.source_x),
                    "synth:source_y": repr(d.source_y),
                    "synth:depth": repr(d.depth),
                    "synth:strength": repr(d.strength),
                    "synth:los": ",".join(repr(v) for v in d.los_unit_vector),
                }
            )
        return md


def scene_streams(seed: int) -> tuple:
    """The named random streams of a scene: (atmosphere, coherence mask, noise)."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(ss)) for ss in children)


def point_source_los(spec: SceneSpec) -> np.ndarray:
    """Line-of-sight phase (radians) of the point source, as a dense grid.

    At radial distance r from the epicenter and source depth d the surface
    displacement is ``u_z = K * d / (r^2 + d^2)^1.5`` vertically and
    ``u_r = K * r / (r^2 + d^2)^1.5`` radially, with K the source strength.
    The 3-D displacement is projected onto the line of sight and converted
    to phase with the two-way factor ``4 * pi / wavelength``.
    """
    d = spec.deformation
    if d is None:
        raise ValueError("scene spec has no deformation source")
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    dx = (xx - d.source_x) * spec.pixel_size
    dy = (yy - d.source_y) * spec.pixel_size
    r2 = dx * dx + dy * dy
    denom = np.power(r2 + d.depth * d.depth, 1.5)
    uz = d.strength * d.depth / denom
    ur_over_r = d.strength / denom  # u_r / r, finite at r = 0
    ux = ur_over_r * dx
    uy = ur_over_r * dy
    lx, ly, lz = d.los_unit_vector
    los_disp = ux * lx + uy * ly + uz * lz
    return los_disp * (4.0 * math.pi / spec.wavelength)


def _power_law_field(shape: tuple, exponent: float, rng: np.random.Generator) -> np.ndarray:
    """White noise shaped by an isotropic |k|^(-exponent) power spectrum."""
    h, w = shape
    noise = rng.standard_normal((h, w))
    spectrum = np.fft.fft2(noise)
    ky = np.fft.fftfreq(h)[:, None]
    kx = np.fft.fftfreq(w)[None, :]
    k = np.hypot(ky, kx)
    with np.errstate(divide="ignore"):
        amp = np.power(k, -exponent / 2.0)
    amp[0, 0] = 0.0  # kill the DC mode: field is zero-mean by construction
    return np.fft.ifft2(spectrum * amp).real


def synth_atmosphere(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Correlated zero-mean phase screen rescaled to the requested std."""
    amp = spec.atmosphere.amplitude
    if amp == 0.0:
        return np.zeros((spec.height, spec.width))
    field = _power_law_field((spec.height, spec.width), spec.atmosphere.spectral_exponent, rng)
    field = field - field.mean()
    sd = field.std()
    if sd == 0.0:
        return np.zeros_like(field)
    return field * (amp / sd)


def synth_coherence_mask(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Boolean missing-data mask with approximately the requested coverage.

    A smooth random field (white noise through a Gaussian low-pass with the
    blob length scale) is thresholded at the quantile matching the coverage
    fraction, so the realized missing fraction tracks the target closely.
    """
    frac = spec.incoherence.coverage_fraction
    if frac == 0.0:
        return np.zeros((spec.height, spec.width), dtype=bool)
    noise = rng.standard_normal((spec.height, spec.width))
    spectrum = np.fft.fft2(noise)
    ky = np.fft.fftfreq(spec.height)[:, None]
    kx = np.fft.fftfreq(spec.width)[None, :]
    k = np.hypot(ky, kx)
    lowpass = np.exp(-2.0 * (math.pi * spec.incoherence.blob_scale * k) ** 2)
    smooth = np.fft.ifft2(spectrum * lowpass).real
    threshold = np.quantile(smooth, frac)
    return smooth < threshold


def generate_scene(spec: SceneSpec) -> tuple[Interferogram, str]:
    """Render a scene: deformation + atmosphere + noise, incoherent pixels masked.

    Returns the interferogram and its label (``"deformation"`` when a source
    with positive strength is present, else ``"normal"``).  The flattened
    spec is recorded in the raster metadata.
    """
    atmos_rng, mask_rng, noise_rng = scene_streams(spec.rng_seed)
    values = np.zeros((spec.height, spec.width))
    if spec.deformation is not None:
        values = values + point_source_los(spec)
    values = values + synth_atmosphere(spec, atmos_rng)
    if spec.noise_std > 0:
        values = values + noise_rng.normal(0.0, spec.noise_std, size=values.shape)
    missing = synth_coherence_mask(spec, mask_rng)
    label = (
        LABEL_DEFORMATION
        if spec.deformation is not None and spec.deformation.strength > 0
        else LABEL_NORMAL
    )
    ifg = Interferogram.from_parts(values.astype(np.float32), missing, metadata=spec.to_metadata())
    return ifg, label


def corpus_specs(
    base: SceneSpec,
    count_normal: int,
    count_anomaly: int,
    seed: int,
    center_jitter: float = 0.25,
) -> list[tuple[SceneSpec, str]]:
    """Per-scene specs for a labeled corpus, with jittered epicenters.

    Normal scenes drop the deformation source; anomaly scenes keep it but
    move the epicenter uniformly within ``center_jitter`` of the image size
    around the base position (so a detector cannot memorize one location).
    Scene seeds derive from ``seed`` and the scene index.
    """
    if count_anomaly > 0 and base.deformation is None:
        raise ValueError("anomaly scenes requested but base spec has no deformation source")
    out: list[tuple[SceneSpec, str]] = []
    jitter_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xA5])))
    for i in range(count_normal + count_anomaly):
        scene_seed = int(np.random.SeedSequence([seed, i]).generate_state(1, dtype=np.uint64)[0])
        if i < count_normal:
            sp = replace(base, deformation=None, rng_seed=scene_seed)
            out.append((sp, LABEL_NORMAL))
        else:
            d = base.deformation
            jx = float(jitter_rng.uniform(-center_jitter, center_jitter)) * base.width
            jy = float(jitter_rng.uniform(-center_jitter, center_jitter)) * base.height
            moved = replace(d, source_x=d.source_x + jx, source_y=d.source_y + jy)
            sp = replace(base, deformation=moved, rng_seed=scene_seed)
            out.append((sp, LABEL_DEFORMATION))
    return out
