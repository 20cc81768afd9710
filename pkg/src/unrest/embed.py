"""Patch extraction and per-position embedding of preprocessed grids.

The image is covered by overlapping square patches; each patch runs through
the backbone, the three feature maps are aligned to the finest one by
nearest-neighbor upsampling and concatenated, and a fixed random subset of
channels is kept.  Per-patch embedding grids are placed on one image-level
lattice (cell size = the backbone's finest stride, in pixels); overlapping
contributions are averaged position-wise in patch order, which keeps the
result deterministic.

The per-patch grids are retained alongside the averaged lattice: model
fitting consumes the average, while scoring re-scores each patch and blends
them back with a spatial window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import BackboneHandle


class EmbedError(Exception):
    """Configuration or shape problem during embedding."""


@dataclass(frozen=True)
class PatchConfig:
    """Patch size and stride in pixels; stride 0 means half the size."""

    size: int = 224
    stride: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("patch size must be >= 1")
        eff = self.effective_stride
        if not (0 < eff <= self.size):
            raise ValueError(f"stride must lie in (0, size], got {eff}")

    @property
    def effective_stride(self) -> int:
        return self.stride if self.stride > 0 else max(1, self.size // 2)


@dataclass(frozen=True)
class ChannelSelection:
    """Sorted unique channel indices kept from the concatenated embedding.

    ``layer_channels`` records the per-layer channel counts of the full
    embedding so every kept channel can be traced back to its source layer
    (needed to expand per-layer weights to a per-channel diagonal).
    """

    indices: tuple
    total: int
    seed: int
    layer_channels: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx) or list(idx) != sorted(idx):
            raise ValueError("channel indices must be unique and sorted")
        if idx and (idx[0] < 0 or idx[-1] >= self.total):
            raise ValueError("channel indices out of range")
        if sum(self.layer_channels) != self.total:
            raise ValueError("layer_channels must sum to the total channel count")
        object.__setattr__(self, "indices", idx)

    @property
    def dim(self) -> int:
        return len(self.indices)

    def layer_of_kept(self) -> np.ndarray:
        """Source-layer index (0-based) of each kept channel."""
        bounds = np.cumsum(self.layer_channels)
        return np.searchsorted(bounds, np.asarray(self.indices), side="right")


def sample_channel_selection(
    total: int, keep: int, seed: int, layer_channels: tuple
) -> ChannelSelection:
    """Uniform sample of ``keep`` of ``total`` channels, deterministic in seed."""
    if keep > total:
        raise ValueError(f"cannot keep {keep} of {total} channels")
    if keep < 1:
        raise ValueError("must keep at least one channel")
    rng = np.random.Generator(np.random.Philox(seed))
    indices = np.sort(rng.permutation(total)[:keep])
    return ChannelSelection(
        indices=tuple(int(i) for i in indices),
        total=total,
        seed=seed,
        layer_channels=tuple(layer_channels),
    )


@dataclass
class EmbeddingMap:
    """Embeddings of one image on the backbone-aligned lattice.

    ``lattice`` is (H', W', k) with overlapping patches averaged; cell
    ``(i, j)`` covers source pixels ``[i*cell, (i+1)*cell) x [j*cell,
    (j+1)*cell)`` (clipped to ``image_shape``).  ``patch_grids`` is
    (P, h_c, w_c, k): the pre-average embedding of every patch, with
    ``patch_origins`` giving the pixel origin of each.
    """

    lattice: np.ndarray
    cell: int
    image_shape: tuple
    patch_size: int
    patch_origins: list
    patch_grids: np.ndarray
    fingerprint: str | None = None


def axis_origins(dim: int, size: int, stride: int) -> list:
    """Patch origins along one axis: stride steps plus a clamped tail."""
    if dim <= size:
        return [0]
    origins = list(range(0, dim - size + 1, stride))
    if origins[-1] + size < dim:
        origins.append(dim - size)
    return origins


def extract_patches(grid: np.ndarray, cfg: PatchConfig) -> list:
    """Overlapping (patch, (oy, ox)) covering the grid.

    Grids smaller than the patch size are replicate-padded on the bottom and
    right edges first.
    """
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise EmbedError(f"expected a non-empty 2-D grid, got shape {grid.shape}")
    s = cfg.size
    pad_h = max(0, s - grid.shape[0])
    pad_w = max(0, s - grid.shape[1])
    if pad_h or pad_w:
        grid = np.pad(grid, ((0, pad_h), (0, pad_w)), mode="edge")
    stride = cfg.effective_stride
    out = []
    for oy in axis_origins(grid.shape[0], s, stride):
        for ox in axis_origins(grid.shape[1], s, stride):
            out.append((grid[oy : oy + s, ox : ox + s], (oy, ox)))
    return out


def backbone_features(patches: np.ndarray, handle: BackboneHandle) -> list:
    """Three NCHW feature maps for a batch of patches (see BackboneHandle)."""
    return handle.features(patches)


def align_concat(features: list) -> np.ndarray:
    """Upsample deeper maps to the finest resolution and stack channels.

    Nearest-neighbor upsampling: position (i, j) of a coarser map's
    contribution equals its value at (i // factor, j // factor).  Accepts
    NCHW maps from one batch; returns (N, total_channels, h, w).
    """
    maps = [np.asarray(m) for m in features]
    h0, w0 = maps[0].shape[2], maps[0].shape[3]
    aligned = []
    for m in maps:
        fh, fw = h0 // m.shape[2], w0 // m.shape[3]
        if m.shape[2] * fh != h0 or m.shape[3] * fw != w0:
            raise EmbedError(
                f"feature map {m.shape[2:]} is not an integer factor of the finest {h0, w0}"
            )
        if fh > 1 or fw > 1:
            m = np.repeat(np.repeat(m, fh, axis=2), fw, axis=3)
        aligned.append(m)
    return np.concatenate(aligned, axis=1)


def embed_image(
    grid: np.ndarray,
    cfg: PatchConfig,
    handle: BackboneHandle,
    sel: ChannelSelection,
    batch_size: int = 16,
) -> EmbeddingMap:
    """Embed a dense grid: patches -> backbone -> align -> select -> average.

    The grid is replicate-padded on the bottom/right so that every patch
    origin lands on the embedding lattice (origins must be multiples of the
    finest backbone stride, which requires the patch stride to be one too).
    """
    grid = np.asarray(grid, dtype=np.float32)
    if np.isnan(grid).any():
        raise EmbedError("embedding requires a dense grid (preprocess first)")
    if cfg.size != handle.input_size:
        raise EmbedError(
            f"patch size {cfg.size} does not match backbone input {handle.input_size}"
        )
    cell = handle.finest_stride
    stride = cfg.effective_stride
    if stride % cell != 0:
        raise EmbedError(
            f"patch stride {stride} must be a multiple of the finest feature stride {cell}"
        )
    if sel.total != handle.total_channels or sel.layer_channels != handle.layer_channels:
        raise EmbedError("channel selection does not match this backbone")

    image_shape = grid.shape
    h1 = max(grid.shape[0], cfg.size)
    w1 = max(grid.shape[1], cfg.size)
    pad_h = (cell - (h1 - cfg.size) % cell) % cell
    pad_w = (cell - (w1 - cfg.size) % cell) % cell
    padded = np.pad(
        grid,
        ((0, h1 + pad_h - grid.shape[0]), (0, w1 + pad_w - grid.shape[1])),
        mode="edge",
    )

    patches = extract_patches(padded, cfg)
    origins = [origin for _, origin in patches]
    stack = np.stack([p for p, _ in patches])

    kept = np.asarray(sel.indices)
    reduced = []
    for start in range(0, len(stack), batch_size):
        feats = handle.features(stack[start : start + batch_size])
        emb = align_concat(feats)[:, kept, :, :]
        reduced.append(np.transpose(emb, (0, 2, 3, 1)).astype(np.float32))
    patch_grids = np.concatenate(reduced, axis=0)

    lat_h, lat_w = padded.shape[0] // cell, padded.shape[1] // cell
    acc = np.zeros((lat_h, lat_w, sel.dim), dtype=np.float64)
    count = np.zeros((lat_h, lat_w, 1), dtype=np.float64)
    hc = cfg.size // cell
    for p, (oy, ox) in enumerate(origins):
        cy, cx = oy // cell, ox // cell
        acc[cy : cy + hc, cx : cx + hc] += patch_grids[p]
        count[cy : cy + hc, cx : cx + hc] += 1.0
    if not (count > 0).all():
        raise EmbedError("patch coverage left empty lattice positions")
    lattice = (acc / count).astype(np.float32)

    return EmbeddingMap(
        lattice=lattice,
        cell=cell,
        image_shape=image_shape,
        patch_size=cfg.size,
        patch_origins=origins,
        patch_grids=patch_grids,
    )
