"""Preprocessing: mask refinement, hole filling, normalization, delay correction.

Raw interferograms are sparse (incoherent pixels) and have an unbounded value
range; convolutional feature extractors want dense inputs in [-1, 1].  The
pipeline here:

1. optionally subtracts a caller-supplied atmospheric delay map,
2. grows the missing-data mask with morphological dilation + closing,
3. fills the masked region by solving the discrete Laplace equation with
   Dirichlet data taken from the unmasked neighbors,
4. subtracts the image mean, clamps to +/-clamp_limit radians and rescales
   to [-1, 1].

Delay maps are plain per-pixel phase corrections in radians; converting
zenith delays in meters to phase is the producer's responsibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from .raster import Interferogram, wrap_phase


class PreprocessError(Exception):
    """Raised when an interferogram cannot be made dense."""


INPUT_FORMATS = ("interpolated", "holes", "wrapped")


@dataclass(frozen=True)
class PreprocessConfig:
    """Tunables for mask growth, hole filling and normalization.

    ``fill_max_iters`` <= 0 means the automatic default of ``10 * (w + h)``.
    ``input_format`` selects how the pipeline treats the phase field:
    ``interpolated`` (Laplacian fill, the default), ``holes`` (no fill,
    masked pixels zeroed after normalization) or ``wrapped`` (phase wrapped
    to [-pi, pi) first, holes zeroed).
    """

    dilation_radius: int = 2
    closing_radius: int = 5
    clamp_limit: float = 30.0
    fill_tolerance: float = 1e-6
    fill_max_iters: int = 0
    input_format: str = "interpolated"

    def __post_init__(self):
        if self.dilation_radius < 0 or self.closing_radius < 0:
            raise ValueError("structuring element radii must be >= 0")
        if self.clamp_limit <= 0:
            raise ValueError("clamp_limit must be > 0")
        if self.fill_tolerance <= 0:
            raise ValueError("fill_tolerance must be > 0")
        if self.input_format not in INPUT_FORMATS:
            raise ValueError(f"input_format must be one of {INPUT_FORMATS}")


def disk(radius: int) -> np.ndarray:
    """Boolean disk structuring element: offsets with dx^2 + dy^2 <= r^2."""
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= r * r


def build_missing_mask(ifg: Interferogram, cfg: PreprocessConfig) -> np.ndarray:
    """Grow the missing mask: dilation by a disk, then closing by a disk.

    Dilation treats out-of-grid pixels as present (False); the erosion half
    of the closing treats them as missing (True), so border regions are not
    spuriously eroded.  The result always contains the input mask.
    """
    mask = ifg.missing
    if not mask.any():
        return np.zeros_like(mask)
    dilated = ndimage.binary_dilation(mask, structure=disk(cfg.dilation_radius))
    closed = ndimage.binary_erosion(
        ndimage.binary_dilation(dilated, structure=disk(cfg.closing_radius)),
        structure=disk(cfg.closing_radius),
        border_value=1,
    )
    return closed


def _nearest_known_values(known_rows, known_cols, known_vals, rows, cols):
    """Value of the Euclidean-nearest known pixel for each query pixel.

    Exact ties are broken by row-major order of the known pixel.
    """
    tree = cKDTree(np.column_stack([known_rows, known_cols]))
    queries = np.column_stack([rows, cols])
    order = known_rows.astype(np.int64) * (known_cols.max() + 1) + known_cols
    out = np.empty(len(rows), dtype=np.float64)
    for qi, q in enumerate(queries):
        k = min(8, len(known_vals))
        while True:
            dist, idx = tree.query(q, k=k)
            dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
            if k >= len(known_vals) or dist[-1] > dist[0] + 1e-9:
                break
            k = min(k * 2, len(known_vals))
        ties = idx[dist <= dist[0] + 1e-9]
        out[qi] = known_vals[ties[np.argmin(order[ties])]]
    return out


def region_fill(ifg: Interferogram, mask: np.ndarray, cfg: PreprocessConfig | None = None) -> np.ndarray:
    """Fill masked pixels by solving the discrete Laplace equation.

    Each masked pixel satisfies the 5-point stencil
    ``4 u(i,j) - u(i-1,j) - u(i+1,j) - u(i,j-1) - u(i,j+1) = 0`` with
    Dirichlet data from unmasked neighbors (border pixels use the reduced
    stencil over their in-grid neighbors).  Unmasked pixels are returned
    bit-identical.  Masked components with no known neighbor at all are
    filled with the value of the nearest known pixel.

    The sparse system is solved by conjugate gradients; non-convergence
    beyond ``cfg.fill_tolerance`` (relative to the Dirichlet value range)
    raises :class:`PreprocessError`.

    Returns a dense float64 grid.
    """
    cfg = cfg or PreprocessConfig()
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != ifg.values.shape:
        raise ValueError("mask shape does not match interferogram")
    if not (mask | ~ifg.missing).all():
        raise ValueError("mask must cover every missing pixel")
    h, w = mask.shape
    out = ifg.values.astype(np.float64)
    if not mask.any():
        return out
    if mask.all():
        raise PreprocessError("cannot fill a fully-masked image")

    known = ~mask
    # split off components without any known 4-neighbor (degenerate case);
    # they get nearest-known values instead of Dirichlet data
    four = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
    labels, nlab = ndimage.label(mask, structure=four)
    has_known_neighbor = ndimage.binary_dilation(known, structure=four) & mask
    solvable = np.zeros_like(mask)
    degenerate = np.zeros_like(mask)
    for lab in range(1, nlab + 1):
        comp = labels == lab
        if (comp & has_known_neighbor).any():
            solvable |= comp
        else:
            degenerate |= comp
    if degenerate.any():
        krows, kcols = np.nonzero(known)
        drows, dcols = np.nonzero(degenerate)
        out[drows, dcols] = _nearest_known_values(
            krows, kcols, out[krows, kcols], drows, dcols
        )
        known = known | degenerate

    if solvable.any():
        out[solvable] = _solve_laplace(out, solvable, known, cfg)
    return out


def _solve_laplace(grid: np.ndarray, mask: np.ndarray, known: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """CG solve of the masked Laplacian system; returns values at mask pixels."""
    h, w = grid.shape
    rows, cols = np.nonzero(mask)
    n = len(rows)
    index = -np.ones((h, w), dtype=np.int64)
    index[rows, cols] = np.arange(n)

    diag = np.zeros(n)
    b = np.zeros(n)
    coo_i, coo_j, coo_v = [], [], []
    boundary_vals = []
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nr, nc = rows + dr, cols + dc
        inside = (nr >= 0) & (nr < h) & (nc >= 0) & (nc < w)
        diag += inside  # reduced stencil at the image border
        nin, rin, cin = np.nonzero(inside)[0], nr[inside], nc[inside]
        neigh_idx = index[rin, cin]
        is_masked = neigh_idx >= 0
        coo_i.append(nin[is_masked])
        coo_j.append(neigh_idx[is_masked])
        coo_v.append(-np.ones(is_masked.sum()))
        kn = ~is_masked
        np.add.at(b, nin[kn], grid[rin[kn], cin[kn]])
        boundary_vals.append(grid[rin[kn], cin[kn]])

    coo_i.append(np.arange(n))
    coo_j.append(np.arange(n))
    coo_v.append(diag)
    A = sparse.coo_matrix(
        (np.concatenate(coo_v), (np.concatenate(coo_i), np.concatenate(coo_j))),
        shape=(n, n),
    ).tocsr()

    bvals = np.concatenate([v for v in boundary_vals if v.size] or [np.zeros(1)])
    brange = float(bvals.max() - bvals.min()) if bvals.size else 0.0
    scale = brange if brange > 0 else max(1.0, float(np.abs(bvals).max(initial=0.0)))

    maxiter = cfg.fill_max_iters if cfg.fill_max_iters > 0 else 10 * (h + w)
    x0 = np.full(n, float(bvals.mean()) if bvals.size else 0.0)
    x, _ = cg(A, b, x0=x0, rtol=1e-13, atol=0.0, maxiter=maxiter)
    residual = float(np.abs(A @ x - b).max())
    if not np.isfinite(residual) or residual > cfg.fill_tolerance * scale:
        raise PreprocessError(
            f"Laplacian fill did not converge: residual {residual:.3e} "
            f"exceeds {cfg.fill_tolerance:.1e} x value range {scale:.3e}"
        )
    return x


def normalize(grid: np.ndarray, cfg: PreprocessConfig | None = None) -> np.ndarray:
    """Mean-subtract, clamp to +/-clamp_limit and rescale to [-1, 1].

    The mean is taken over all pixels of the dense grid.
    """
    cfg = cfg or PreprocessConfig()
    grid = np.asarray(grid, dtype=np.float64)
    if np.isnan(grid).any():
        raise ValueError("normalize expects a dense grid with no missing values")
    limit = cfg.clamp_limit
    centered = grid - grid.mean()
    return np.clip(centered, -limit, limit) / limit


def apply_delay_correction(ifg: Interferogram, delay: np.ndarray) -> Interferogram:
    """Subtract a same-shape delay map (radians) from the phase values."""
    delay = np.asarray(delay, dtype=np.float64)
    if delay.shape != ifg.values.shape:
        raise ValueError(
            f"delay map shape {delay.shape} does not match interferogram "
            f"shape {ifg.values.shape}"
        )
    corrected = ifg.values.astype(np.float64) - delay
    return Interferogram.from_parts(corrected, ifg.missing, metadata=ifg.metadata)


def preprocess_pipeline(
    ifg: Interferogram,
    delay: np.ndarray | None = None,
    cfg: PreprocessConfig | None = None,
) -> np.ndarray:
    """Full preprocessing: correction, mask growth, fill, normalization.

    Returns a dense float64 grid in [-1, 1].  With ``input_format="holes"``
    or ``"wrapped"`` the Laplacian fill is skipped: the mean is taken over
    valid pixels and masked pixels are set to 0 after normalization.
    """
    cfg = cfg or PreprocessConfig()
    corrected = apply_delay_correction(ifg, delay) if delay is not None else ifg

    if cfg.input_format == "wrapped":
        corrected = wrap_phase(corrected)

    if cfg.input_format == "interpolated":
        mask = build_missing_mask(corrected, cfg)
        if mask.all():
            raise PreprocessError("grown mask covers the whole image")
        filled = region_fill(corrected, mask, cfg)
        return normalize(filled, cfg)

    # no-fill variants: normalize over valid pixels, zero the holes
    values = corrected.values.astype(np.float64)
    valid = ~corrected.missing
    if not valid.any():
        raise PreprocessError("no valid pixels to normalize")
    limit = cfg.clamp_limit
    centered = values - values[valid].mean()
    normed = np.clip(centered, -limit, limit) / limit
    normed[~valid] = 0.0
    return normed
