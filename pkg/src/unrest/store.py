"""Binary container for fitted models.

Layout: magic ``PDM1``, a little-endian uint32 header length, a UTF-8 JSON
header (version, dimensions, metric, weights, threshold, channel selection,
fingerprint, pipeline config), the raw little-endian float64 arrays (means,
precisions, log-determinants, in that order), and a trailing CRC-32 of all
preceding bytes.  Serialization is canonical (sorted JSON keys), so equal
models produce identical files.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .embed import ChannelSelection
from .gaussians import FittedModel, LayerWeights, PositionGaussians

MAGIC = b"PDM1"
VERSION = 1


class StoreError(Exception):
    """Unreadable, corrupt or incompatible model file."""


def _header_dict(model: FittedModel) -> dict:
    g = model.gaussians
    return {
        "version": VERSION,
        "grid": list(g.grid_shape),
        "dim": g.dim,
        "epsilon": g.epsilon,
        "metric": model.metric,
        "layer_weights": list(model.layer_weights.weights),
        "threshold": model.threshold,
        "score_offset": model.score_offset,
        "fingerprint": model.fingerprint,
        "selection": {
            "indices": list(model.selection.indices),
            "total": model.selection.total,
            "seed": model.selection.seed,
            "layer_channels": list(model.selection.layer_channels),
        },
        "config": model.config,
        "arrays": [
            {"name": "mean", "shape": list(g.mean.shape)},
            {"name": "precision", "shape": list(g.precision.shape)},
            {"name": "logdet", "shape": list(g.logdet.shape)},
        ],
    }


def serialize_model(model: FittedModel) -> bytes:
    header = json.dumps(_header_dict(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    g = model.gaussians
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    for arr in (g.mean, g.precision, g.logdet):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def save_model(model: FittedModel, path) -> None:
    """Atomically write the model container (temp file + rename)."""
    path = Path(path)
    blob = serialize_model(model)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def load_model(path, expect_fingerprint: str | None = None) -> FittedModel:
    """Read and verify a model container.

    Checks magic, CRC-32 and version before reconstructing anything, so a
    truncated or corrupted file never yields a partial model.  When
    ``expect_fingerprint`` is given it must match the stored one.
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise StoreError(f"cannot read model {path}: {exc}") from exc
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise StoreError(f"{path}: not a model container (bad magic)")
    body, crc_bytes = blob[:-4], blob[-4:]
    if struct.unpack("<I", crc_bytes)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
        raise StoreError(f"{path}: checksum mismatch (truncated or corrupted file)")
    header_len = struct.unpack_from("<I", body, 4)[0]
    if 8 + header_len > len(body):
        raise StoreError(f"{path}: header length exceeds file size")
    try:
        header = json.loads(body[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StoreError(f"{path}: malformed header: {exc}") from exc
    if header.get("version") != VERSION:
        raise StoreError(
            f"{path}: unsupported container version {header.get('version')!r}, "
            f"expected {VERSION}"
        )

    offset = 8 + header_len
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(body):
            raise StoreError(f"{path}: array {spec['name']!r} extends past end of file")
        arrays[spec["name"]] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(body):
        raise StoreError(f"{path}: trailing bytes after arrays")

    gaussians = PositionGaussians(
        mean=arrays["mean"],
        precision=arrays["precision"],
        logdet=arrays["logdet"],
        epsilon=float(header["epsilon"]),
    )
    sel = header["selection"]
    selection = ChannelSelection(
        indices=tuple(sel["indices"]),
        total=int(sel["total"]),
        seed=int(sel["seed"]),
        layer_channels=tuple(sel["layer_channels"]),
    )
    model = FittedModel(
        gaussians=gaussians,
        selection=selection,
        layer_weights=LayerWeights(tuple(header["layer_weights"])),
        metric=header["metric"],
        threshold=header["threshold"],
        fingerprint=header["fingerprint"],
        score_offset=float(header.get("score_offset", 0.0)),
        config=header.get("config", {}),
    )
    if expect_fingerprint is not None and model.fingerprint != expect_fingerprint:
        raise StoreError(
            f"{path}: model fingerprint {model.fingerprint[:12]}... does not match "
            f"the current pipeline configuration {expect_fingerprint[:12]}..."
        )
    return model
