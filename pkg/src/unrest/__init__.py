"""Unsupervised volcanic-unrest detection in InSAR interferograms.

Per-position multivariate Gaussians over pretrained CNN patch embeddings,
scored with (weighted) Mahalanobis or negative-log-likelihood distances,
calibrated per volcano and rendered as probability maps.
"""

__version__ = "0.1.0"

from .raster import Interferogram, read_raster, wrap_phase, write_raster

__all__ = ["Interferogram", "read_raster", "write_raster", "wrap_phase", "__version__"]
