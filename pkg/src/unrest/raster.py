"""Raster data types, file I/O and phase wrapping.

An interferogram is a single-band grid of line-of-sight phase values in
radians.  Missing pixels (incoherent areas, water, layover) are carried both
as NaN in the value grid and as an explicit boolean mask, so downstream
numerical code can rely on the mask and never test for NaN itself.

Two on-disk formats are supported:

``raw-f32``
    Magic ``IFG1``, then width and height as little-endian uint32, then
    ``width * height`` little-endian IEEE-754 float32 values in row-major
    order (row 0 at the top).  NaN encodes a missing pixel.

``geotiff-float32``
    Single-band 32-bit float TIFF.  Georeferencing tags are kept as opaque
    metadata strings; all computation is grid-local.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RAW_MAGIC = b"IFG1"
FORMATS = ("raw-f32", "geotiff-float32")

_TWO_PI = 2.0 * math.pi


class RasterError(Exception):
    """Raised for unreadable, malformed or unsupported raster files."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Interferogram:
    """Single-band phase raster with an explicit missing-data mask.

    ``values`` is a float64 (height, width) grid in radians; every pixel
    flagged in ``missing`` holds NaN, and every finite pixel is unflagged.
    Instances are immutable (the arrays are marked read-only) and safe to
    share across threads.  On disk the raw-f32 format quantizes to float32;
    values read from files are therefore exactly representable and round-trip
    bit-identically.
    """

    values: np.ndarray
    missing: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        missing = np.asarray(self.missing, dtype=bool)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"values must be a non-empty 2-D grid, got shape {values.shape}")
        if missing.shape != values.shape:
            raise ValueError(
                f"missing mask shape {missing.shape} does not match values shape {values.shape}"
            )
        nan = np.isnan(values)
        if not np.array_equal(nan, missing):
            raise ValueError("missing mask must flag exactly the NaN pixels")
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "missing", _freeze(missing))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_values(cls, values, metadata: dict | None = None) -> "Interferogram":
        """Build from a value grid alone; NaN pixels become the missing mask."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values=values, missing=np.isnan(values), metadata=dict(metadata or {}))

    @classmethod
    def from_parts(cls, values, missing, metadata: dict | None = None) -> "Interferogram":
        """Build from a value grid and mask; masked pixels are set to NaN."""
        values = np.array(values, dtype=np.float64, copy=True)
        missing = np.asarray(missing, dtype=bool)
        values[missing] = np.nan
        return cls(values=values, missing=missing, metadata=dict(metadata or {}))

    def with_values(self, values) -> "Interferogram":
        """Copy of this interferogram with a new value grid (mask from NaN)."""
        return Interferogram.from_values(values, metadata=self.metadata)


def read_raster(path, format: str = "raw-f32") -> Interferogram:
    """Read an interferogram from ``path`` in the given format.

    NaN pixels are marked missing.  Embedded tags (TIFF description,
    geo tags) are carried in ``metadata``.
    """
    path = Path(path)
    if format == "raw-f32":
        return _read_raw(path)
    if format == "geotiff-float32":
        return _read_geotiff(path)
    raise RasterError(f"unsupported raster format {format!r}")


def write_raster(ifg: Interferogram, path, format: str = "raw-f32") -> None:
    """Write ``ifg`` to ``path``; missing pixels are serialized as NaN.

    For ``raw-f32`` the write is the exact inverse of :func:`read_raster`.
    """
    path = Path(path)
    if format == "raw-f32":
        _write_raw(ifg, path)
    elif format == "geotiff-float32":
        _write_geotiff(ifg, path)
    else:
        raise RasterError(f"unsupported raster format {format!r}")


def _read_raw(path: Path) -> Interferogram:
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise RasterError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != RAW_MAGIC:
        raise RasterError(f"{path}: not a raw-f32 interferogram (bad magic)")
    width, height = struct.unpack_from("<II", blob, 4)
    if width == 0 or height == 0:
        raise RasterError(f"{path}: zero dimension in header ({width}x{height})")
    expected = 12 + 4 * width * height
    if len(blob) != expected:
        raise RasterError(
            f"{path}: size mismatch, header says {width}x{height} "
            f"({expected} bytes) but file has {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f4", count=width * height, offset=12)
    values = values.reshape(height, width).astype(np.float64)
    return Interferogram.from_values(values, metadata={"source": str(path)})


def _write_raw(ifg: Interferogram, path: Path) -> None:
    header = RAW_MAGIC + struct.pack("<II", ifg.width, ifg.height)
    body = ifg.values.astype("<f4").tobytes()
    try:
        path.write_bytes(header + body)
    except OSError as exc:
        raise RasterError(f"cannot write {path}: {exc}") from exc


def _read_geotiff(path: Path) -> Interferogram:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            if img.mode not in ("F", "I;32F"):
                raise RasterError(
                    f"{path}: unsupported pixel type {img.mode!r}, expected 32-bit float band"
                )
            values = np.asarray(img, dtype=np.float64)
            metadata = {"source": str(path)}
            tags = getattr(img, "tag_v2", None)
            if tags is not None:
                for tag_id, value in tags.items():
                    # keep georeferencing and description tags as opaque strings
                    if tag_id in (270, 33550, 33922, 34264, 34735, 34736, 34737, 42112, 42113):
                        metadata[f"tiff:{tag_id}"] = str(value)
    except UnidentifiedImageError as exc:
        raise RasterError(f"{path}: not a readable TIFF: {exc}") from exc
    except OSError as exc:
        raise RasterError(f"cannot read {path}: {exc}") from exc
    if values.ndim != 2:
        raise RasterError(f"{path}: expected a single-band raster, got shape {values.shape}")
    return Interferogram.from_values(values, metadata=metadata)


def _write_geotiff(ifg: Interferogram, path: Path) -> None:
    from PIL import Image

    img = Image.fromarray(np.asarray(ifg.values, dtype=np.float32), mode="F")
    try:
        img.save(path, format="TIFF")
    except OSError as exc:
        raise RasterError(f"cannot write {path}: {exc}") from exc


_PI64 = np.float64(math.pi)
_WRAP_HI64 = np.nextafter(_PI64, 0.0)


def wrap_values(values: np.ndarray) -> np.ndarray:
    """Wrap phase values into [-pi, pi); NaN passes through.

    The result is congruent to the input modulo 2*pi.  Values already in
    range are returned bit-identical, which makes the operation exactly
    idempotent; rounding at the +/-pi seam is clamped back into the
    half-open interval.
    """
    v = np.asarray(values, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        in_range = (v >= -_PI64) & (v < _PI64)
        k = np.floor((v + _PI64) / _TWO_PI)
        w = np.clip(v - _TWO_PI * k, -_PI64, _WRAP_HI64)
        w = np.where(in_range, v, w)
    return w


def wrap_phase(ifg: Interferogram) -> Interferogram:
    """Wrap an unwrapped interferogram into [-pi, pi) per pixel.

    Missing pixels pass through.  Pixels already in range keep their exact
    bits, so wrapping twice equals wrapping once.
    """
    return ifg.with_values(wrap_values(ifg.values))
