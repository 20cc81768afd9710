"""End-to-end orchestration: raster -> preprocess -> embed -> score.

A :class:`Pipeline` binds a configuration to a loaded backbone and exposes
the train/score/evaluate flows the CLI uses.  Models carry a fingerprint of
(patch config, backbone descriptor, preprocess config); scoring with a
pipeline whose fingerprint differs fails loudly instead of producing
quietly wrong numbers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

from . import gaussians as G
from .backbone import BackboneHandle
from .config import AppConfig
from .embed import ChannelSelection, EmbeddingMap, embed_image, sample_channel_selection
from .evaluation import (
    LABEL_ANOMALY,
    LABEL_NORMAL,
    EvalError,
    LabeledScore,
    UndefinedAurocError,
    auroc,
    confusion_at_threshold,
)
from .preprocess import preprocess_pipeline
from .raster import Interferogram, read_raster

RASTER_SUFFIXES = {".ifg": "raw-f32", ".raw": "raw-f32", ".tif": "geotiff-float32", ".tiff": "geotiff-float32"}


def raster_format_for(path) -> str:
    """Pick the raster format from the file suffix (default raw-f32)."""
    return RASTER_SUFFIXES.get(Path(path).suffix.lower(), "raw-f32")


def compute_fingerprint(cfg: AppConfig, backbone: BackboneHandle) -> str:
    """Hash of everything that must match between fitting and scoring."""
    payload = {
        "preprocess": asdict(cfg.preprocess),
        "patch": {"size": cfg.patch.size, "stride": cfg.patch.effective_stride},
        "backbone": backbone.descriptor(),
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def config_header(cfg: AppConfig) -> dict:
    """Pipeline parameters embedded in saved models (for self-contained scoring)."""
    return {
        "preprocess": asdict(cfg.preprocess),
        "patch": {"size": cfg.patch.size, "stride": cfg.patch.effective_stride},
        "model": asdict(cfg.model),
        "weights": list(cfg.weights.weights),
    }


class Pipeline:
    """Configuration + backbone bound together; immutable once built."""

    def __init__(self, cfg: AppConfig, backbone: BackboneHandle):
        if cfg.patch.size != backbone.input_size:
            raise EvalError(
                f"patch size {cfg.patch.size} does not match backbone input size "
                f"{backbone.input_size}"
            )
        self.cfg = cfg
        self.backbone = backbone
        self.selection = sample_channel_selection(
            total=backbone.total_channels,
            keep=cfg.model.reduced_dim,
            seed=cfg.model.selection_seed,
            layer_channels=backbone.layer_channels,
        )
        self.fingerprint = compute_fingerprint(cfg, backbone)

    # ---- embedding -------------------------------------------------------

    def embed(self, ifg: Interferogram, delay=None, selection: ChannelSelection | None = None) -> EmbeddingMap:
        grid = preprocess_pipeline(ifg, delay=delay, cfg=self.cfg.preprocess)
        emb = embed_image(grid, self.cfg.patch, self.backbone, selection or self.selection)
        emb.fingerprint = self.fingerprint
        return emb

    def embed_path(self, path, delay=None, selection: ChannelSelection | None = None) -> EmbeddingMap:
        ifg = read_raster(path, raster_format_for(path))
        return self.embed(ifg, delay=delay, selection=selection)

    # ---- training --------------------------------------------------------

    def fit(self, ifgs, metric: str | None = None, delays=None) -> G.FittedModel:
        """Fit per-position Gaussians on normal images and calibrate T_h.

        ``ifgs`` is a sequence of Interferograms; the threshold is the
        nearest-rank 95th percentile of the training image scores.
        """
        ifgs = list(ifgs)
        delays = list(delays) if delays is not None else [None] * len(ifgs)
        embs = [self.embed(ifg, delay=d) for ifg, d in zip(ifgs, delays)]
        fitted = G.fit(embs, epsilon=self.cfg.model.epsilon)
        model = G.build_model(
            fitted,
            selection=self.selection,
            layer_weights=self.cfg.weights,
            metric=metric or self.cfg.model.metric,
            fingerprint=self.fingerprint,
            config=config_header(self.cfg),
        )
        train_scores = [G.image_score(G.score_map(e, model)) for e in embs]
        return model.with_threshold(G.calibrate_threshold(train_scores))

    # ---- scoring ---------------------------------------------------------

    def score(self, ifg: Interferogram, model: G.FittedModel, delay=None) -> dict:
        """Score one interferogram; returns maps plus scalar score/probability."""
        if model.fingerprint and model.fingerprint != self.fingerprint:
            raise G.FingerprintError(
                f"model fingerprint {model.fingerprint[:12]}... does not match "
                f"pipeline fingerprint {self.fingerprint[:12]}..."
            )
        emb = self.embed(ifg, delay=delay, selection=model.selection)
        smap = G.score_map(emb, model)
        score = G.image_score(smap)
        out = {"score_map": smap, "score": score}
        if model.threshold is not None:
            out["probability_map"] = G.probability_map(smap, model.threshold)
            out["probability"] = G.probability(score, model.threshold)
        return out


def evaluate_run(
    entries,
    pipeline: Pipeline,
    metric: str | None = None,
    model: G.FittedModel | None = None,
    delay_lookup=None,
) -> dict:
    """Fit on the train split, score the test split, report AUROC or FP count.

    ``entries`` are manifest entries; train entries must all be labeled
    normal.  When the test split has only one class, AUROC is undefined and
    the report carries the false-positive count at P > 0.5 instead.
    ``delay_lookup`` optionally maps a raster path to a delay grid.
    """
    entries = list(entries)
    train = [e for e in entries if e.split == "train"]
    test = [e for e in entries if e.split == "test"]
    if not test:
        raise EvalError("manifest has no test entries")
    bad = [e.path for e in train if e.label != LABEL_NORMAL]
    if bad:
        raise EvalError(
            f"train split must contain only normal images; anomalous entries: {bad[:3]}"
        )

    def _delay(path):
        return delay_lookup(path) if delay_lookup is not None else None

    if model is None:
        if not train:
            raise EvalError("manifest has no train entries and no model was supplied")
        train_ifgs = [read_raster(e.path, raster_format_for(e.path)) for e in train]
        model = pipeline.fit(train_ifgs, metric=metric, delays=[_delay(e.path) for e in train])
    elif metric is not None and metric != model.metric:
        raise EvalError(
            f"supplied model uses metric {model.metric!r}; refusing silent override to {metric!r}"
        )

    images = []
    samples = []
    for e in test:
        ifg = read_raster(e.path, raster_format_for(e.path))
        result = pipeline.score(ifg, model, delay=_delay(e.path))
        prob = result["probability"]
        images.append(
            {
                "path": e.path,
                "label": e.label,
                "score": result["score"],
                "probability": prob,
                "flag_05": bool(prob > 0.5),
                "flag_08": bool(prob > 0.8),
            }
        )
        samples.append(LabeledScore(score=result["score"], label=e.label, id=e.path))

    report = {
        "metric": model.metric,
        "threshold": model.threshold,
        "fingerprint": model.fingerprint,
        "n_train": len(train),
        "n_test": len(test),
        "n_test_anomaly": sum(1 for e in test if e.label == LABEL_ANOMALY),
        "images": images,
        "confusion": confusion_at_threshold(
            [LabeledScore(score=i["probability"], label=i["label"], id=i["path"]) for i in images],
            0.5,
        ),
    }
    try:
        report["auroc"] = auroc(samples)
        report["false_positives"] = None
    except UndefinedAurocError:
        report["auroc"] = None
        report["false_positives"] = report["confusion"]["FP"]
    return report
