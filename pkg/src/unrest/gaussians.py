"""Per-position Gaussian modeling and anomaly scoring.

Training embeddings are summarized position-by-position as multivariate
Gaussians (sample mean, sample covariance regularized by ``epsilon * I``,
stored as precision matrix plus log-determinant).  Test embeddings are
scored by one of four metrics:

``maha``   sqrt((x - mu)^T C^-1 (x - mu))
``wmaha``  sqrt((x - mu)^T W C^-1 W (x - mu)) with W a diagonal per-channel
           weight expanded from per-layer weights
``nlml``   0.5 * (k log 2pi + D^2 + log det C), the Gaussian negative
           log-density, with D the (weighted) distance above
``wnlml``  same with the weighted D; the log-det term stays unweighted

Per-patch scores are broadcast to pixel resolution and blended across
overlapping patches with a separable Gaussian window centered on each patch
(mean size/2, std size/6 per axis), normalized so the blend weights at each
pixel sum to one.  The image-level score is the mean of the blended map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .embed import ChannelSelection, EmbeddingMap

METRICS = ("maha", "wmaha", "nlml", "wnlml")
_LOG_2PI = math.log(2.0 * math.pi)


class ModelError(Exception):
    """Fitting or scoring contract violation."""


class FingerprintError(ModelError):
    """Model was built under a different pipeline configuration."""


@dataclass(frozen=True)
class LayerWeights:
    """Non-negative per-layer weights, expandable to per-channel diagonal."""

    weights: tuple = (0.0, 1.0, 5.0)

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if any(v < 0 for v in w):
            raise ValueError("layer weights must be >= 0")
        object.__setattr__(self, "weights", w)

    def expand(self, sel: ChannelSelection) -> np.ndarray:
        """Diagonal entries of W over the kept channels, via layer provenance."""
        layer_idx = sel.layer_of_kept()
        if len(self.weights) != len(sel.layer_channels):
            raise ValueError(
                f"{len(self.weights)} weights for {len(sel.layer_channels)} layers"
            )
        return np.asarray(self.weights, dtype=np.float64)[layer_idx]


@dataclass(frozen=True)
class PositionGaussian:
    """Gaussian of one lattice position: mean, precision, log det covariance."""

    mean: np.ndarray
    precision: np.ndarray
    logdet: float


@dataclass
class PositionGaussians:
    """Dense grid of per-position Gaussians (batched storage)."""

    mean: np.ndarray        # (H', W', k) float64
    precision: np.ndarray   # (H', W', k, k) float64
    logdet: np.ndarray      # (H', W') float64
    epsilon: float

    @property
    def grid_shape(self) -> tuple:
        return self.mean.shape[:2]

    @property
    def dim(self) -> int:
        return self.mean.shape[2]

    def at(self, i: int, j: int) -> PositionGaussian:
        return PositionGaussian(
            mean=self.mean[i, j], precision=self.precision[i, j], logdet=float(self.logdet[i, j])
        )


def fit(training, epsilon: float = 0.01) -> PositionGaussians:
    """Fit per-position Gaussians from training embedding maps.

    ``training`` is a sequence of :class:`EmbeddingMap` (their averaged
    lattices are used) or a stacked (N, H', W', k) array.  Requires at
    least k + 2 images; covariance uses the N-1 denominator plus
    ``epsilon * I``.
    """
    if isinstance(training, np.ndarray):
        stack = training.astype(np.float64)
    else:
        lattices = [m.lattice if isinstance(m, EmbeddingMap) else np.asarray(m) for m in training]
        shapes = {l.shape for l in lattices}
        if len(shapes) != 1:
            raise ModelError(f"training maps disagree on shape: {sorted(shapes)}")
        stack = np.stack(lattices).astype(np.float64)
    if stack.ndim != 4:
        raise ModelError(f"expected (N, H', W', k) training stack, got {stack.shape}")
    n, gh, gw, k = stack.shape
    if n < k + 2:
        raise ModelError(f"need at least k+2={k + 2} training images, got {n}")
    if not np.isfinite(stack).all():
        raise ModelError("training embeddings contain non-finite values")
    if epsilon <= 0:
        raise ModelError("covariance regularizer epsilon must be > 0")

    mean = stack.mean(axis=0)
    centered = stack - mean[None]
    cov = np.einsum("nhwi,nhwj->hwij", centered, centered, optimize=True) / (n - 1)
    cov += epsilon * np.eye(k)[None, None]

    chol = np.linalg.cholesky(cov)
    logdet = 2.0 * np.log(np.einsum("hwii->hwi", chol)).sum(axis=-1)
    precision = np.linalg.solve(cov, np.broadcast_to(np.eye(k), cov.shape))
    precision = 0.5 * (precision + np.swapaxes(precision, -1, -2))
    return PositionGaussians(mean=mean, precision=precision, logdet=logdet, epsilon=epsilon)


@dataclass
class FittedModel:
    """Everything needed to score new images: Gaussians plus bookkeeping.

    ``score_offset`` shifts negative-log-likelihood scores so score maps
    stay non-negative (a global constant per model; it cannot change the
    ranking of scores).  ``threshold`` is None until calibrated.
    """

    gaussians: PositionGaussians
    selection: ChannelSelection
    layer_weights: LayerWeights
    metric: str = "wnlml"
    threshold: float | None = None
    fingerprint: str = ""
    score_offset: float = 0.0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ModelError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.threshold is not None and not (self.threshold > 0):
            raise ModelError("calibrated threshold must be > 0")

    @property
    def weight_diag(self) -> np.ndarray:
        if self.metric in ("wmaha", "wnlml"):
            return self.layer_weights.expand(self.selection)
        return np.ones(self.selection.dim)

    def with_threshold(self, threshold: float) -> "FittedModel":
        return replace(self, threshold=float(threshold))


def build_model(
    gaussians: PositionGaussians,
    selection: ChannelSelection,
    layer_weights: LayerWeights,
    metric: str = "wnlml",
    fingerprint: str = "",
    config: dict | None = None,
) -> FittedModel:
    """Assemble a model and fix its log-likelihood score offset.

    The offset is the amount needed to make the smallest achievable
    negative log-likelihood over all positions non-negative, so score maps
    satisfy S >= 0 for every metric.
    """
    offset = 0.0
    if metric in ("nlml", "wnlml"):
        k = gaussians.dim
        floor = 0.5 * (k * _LOG_2PI + gaussians.logdet.min())
        offset = max(0.0, -float(floor))
    return FittedModel(
        gaussians=gaussians,
        selection=selection,
        layer_weights=layer_weights,
        metric=metric,
        fingerprint=fingerprint,
        score_offset=offset,
        config=dict(config or {}),
    )


# ---------------------------------------------------------------------------
# distances


def mahalanobis(x: np.ndarray, g: PositionGaussian) -> float:
    """How many standard deviations x sits from the Gaussian's mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != g.mean.shape:
        raise ModelError(f"vector dim {x.shape} does not match Gaussian dim {g.mean.shape}")
    d = x - g.mean
    return float(np.sqrt(max(0.0, d @ g.precision @ d)))


def weighted_mahalanobis(x: np.ndarray, g: PositionGaussian, w: np.ndarray) -> float:
    """Mahalanobis distance with a diagonal channel-weight matrix W.

    Computes sqrt((x-mu)^T W C^-1 W (x-mu)); W = I reduces to the plain
    distance.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != g.mean.shape or w.shape != g.mean.shape:
        raise ModelError("vector, weights and Gaussian dimensions must agree")
    if (w < 0).any():
        raise ModelError("channel weights must be >= 0")
    d = (x - g.mean) * w
    return float(np.sqrt(max(0.0, d @ g.precision @ d)))


def nlml(x: np.ndarray, g: PositionGaussian, w: np.ndarray | None = None) -> float:
    """Negative log of the Gaussian matching likelihood.

    0.5 * (k log 2pi + D^2 + log det C) with D the (weighted) Mahalanobis
    distance; with identity weights this is exactly -log density(x).
    """
    k = g.mean.shape[0]
    if w is None:
        w = np.ones(k)
    d = weighted_mahalanobis(x, g, w)
    return 0.5 * (k * _LOG_2PI + d * d + g.logdet)


# ---------------------------------------------------------------------------
# score maps


def _patch_window(size: int) -> np.ndarray:
    """Separable blend window: Gaussian with mean size/2, std size/6.

    Evaluated at pixel centers; the normalizing constant is irrelevant
    because blend weights are renormalized per pixel.
    """
    t = np.arange(size, dtype=np.float64) + 0.5
    sigma = size / 6.0
    g = np.exp(-0.5 * ((t - size / 2.0) / sigma) ** 2)
    return g[:, None] * g[None, :]


def _position_scores(vectors: np.ndarray, mean, precision, logdet, w_diag, metric: str):
    """Metric scores for a grid of vectors against matching Gaussians."""
    delta = (vectors - mean) * w_diag
    d2 = np.einsum("...i,...ij,...j->...", delta, precision, delta, optimize=True)
    d2 = np.maximum(d2, 0.0)
    if metric in ("maha", "wmaha"):
        return np.sqrt(d2)
    k = vectors.shape[-1]
    return 0.5 * (k * _LOG_2PI + d2 + logdet)


def score_map(emb: EmbeddingMap, model: FittedModel) -> np.ndarray:
    """Per-pixel anomaly scores for one embedded image.

    Every patch is scored cell-by-cell against the Gaussians its cells map
    to, broadcast to pixel resolution (nearest), and blended with the
    normalized Gaussian patch window.  Output is a non-negative float64
    grid at the source raster resolution.
    """
    if emb.fingerprint and model.fingerprint and emb.fingerprint != model.fingerprint:
        raise FingerprintError(
            f"embedding fingerprint {emb.fingerprint[:12]} does not match "
            f"model fingerprint {model.fingerprint[:12]}"
        )
    g = model.gaussians
    if emb.lattice.shape[:2] != g.grid_shape or emb.lattice.shape[2] != g.dim:
        raise FingerprintError(
            f"embedding lattice {emb.lattice.shape} does not match model grid "
            f"{g.grid_shape + (g.dim,)}"
        )
    cell = emb.cell
    size = emb.patch_size
    hc = size // cell
    w_diag = model.weight_diag
    window = _patch_window(size)

    pad_shape = (emb.lattice.shape[0] * cell, emb.lattice.shape[1] * cell)
    acc = np.zeros(pad_shape)
    wsum = np.zeros(pad_shape)
    vectors = emb.patch_grids.astype(np.float64)
    for p, (oy, ox) in enumerate(emb.patch_origins):
        cy, cx = oy // cell, ox // cell
        scores = _position_scores(
            vectors[p],
            g.mean[cy : cy + hc, cx : cx + hc],
            g.precision[cy : cy + hc, cx : cx + hc],
            g.logdet[cy : cy + hc, cx : cx + hc],
            w_diag,
            model.metric,
        )
        if model.metric in ("nlml", "wnlml"):
            scores = scores + model.score_offset
        pixel_scores = np.repeat(np.repeat(scores, cell, axis=0), cell, axis=1)
        acc[oy : oy + size, ox : ox + size] += window * pixel_scores
        wsum[oy : oy + size, ox : ox + size] += window
    blended = acc / wsum
    out = blended[: emb.image_shape[0], : emb.image_shape[1]]
    return np.maximum(out, 0.0)


def image_score(smap: np.ndarray) -> float:
    """Image-level score: the arithmetic mean of the score map."""
    return float(np.asarray(smap, dtype=np.float64).mean())


def calibrate_threshold(training_scores) -> float:
    """Nearest-rank 95th percentile of the training image scores.

    Returns the ceil(0.95 N)-th smallest score, so at least 95% of the
    training scores are <= the threshold.  Requires >= 20 scores.
    """
    scores = np.asarray(list(training_scores), dtype=np.float64)
    if scores.size == 0:
        raise ModelError("cannot calibrate a threshold from no scores")
    if scores.size < 20:
        raise ModelError(f"need at least 20 training scores, got {scores.size}")
    if not np.isfinite(scores).all():
        raise ModelError("training scores contain non-finite values")
    rank = math.ceil(0.95 * scores.size)
    return float(np.sort(scores)[rank - 1])


def probability(score: float, threshold: float) -> float:
    """Map a score to [0, 1]: P = min(1, S / (2 T_h)); saturates at 2 T_h."""
    if threshold is None or not threshold > 0:
        raise ModelError("model is not calibrated (threshold missing or <= 0)")
    return min(1.0, score / (2.0 * threshold))


def probability_map(smap: np.ndarray, threshold: float) -> np.ndarray:
    """Pixel-wise version of :func:`probability`."""
    if threshold is None or not threshold > 0:
        raise ModelError("model is not calibrated (threshold missing or <= 0)")
    return np.minimum(1.0, np.asarray(smap, dtype=np.float64) / (2.0 * threshold))
