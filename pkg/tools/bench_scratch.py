#!/usr/bin/env python3
"""Scratch benchmark runner used while tuning the synthetic acceptance setup."""

import time

import numpy as np

from unrest.backbone import BackboneHandle
from unrest.config import AppConfig, ModelConfig, SynthConfig, parse_config
from unrest.embed import PatchConfig
from unrest.evaluation import LabeledScore, auroc
from unrest.gaussians import LayerWeights
from unrest.pipeline import Pipeline
from unrest.preprocess import PreprocessConfig
from unrest.synth import (
    AtmosphereSpec,
    DeformationSpec,
    IncoherenceSpec,
    SceneSpec,
    corpus_specs,
    generate_scene,
)

BASE = SceneSpec(
    width=64,
    height=64,
    pixel_size=100.0,
    deformation=DeformationSpec(source_x=32.0, source_y=32.0, depth=2000.0, strength=2.0e5),
    atmosphere=AtmosphereSpec(amplitude=3.0),
    incoherence=IncoherenceSpec(coverage_fraction=0.2, blob_scale=8.0),
    noise_std=2.0,
)


def build_scenes(seed=20240501):
    t0 = time.time()
    train_specs = corpus_specs(BASE, 100, 0, seed=seed)
    test_specs = corpus_specs(BASE, 50, 20, seed=seed + 1)
    train = [generate_scene(s)[0] for s, _ in train_specs]
    test = [(generate_scene(s)[0], l) for s, l in test_specs]
    peak = np.nanmax(np.abs(generate_scene(test_specs[-1][0])[0].values))
    print(f"scenes built in {time.time()-t0:.1f}s; sample anomaly peak {peak:.1f} rad")
    return train, test


def run(train, test, input_format, metric, backbone):
    cfg = AppConfig(
        preprocess=PreprocessConfig(dilation_radius=1, closing_radius=2, input_format=input_format),
        patch=PatchConfig(size=32, stride=16),
        model=ModelConfig(metric=metric, reduced_dim=48, epsilon=0.01, selection_seed=1024),
        weights=LayerWeights((0.0, 1.0, 5.0)),
    )
    pipe = Pipeline(cfg, backbone)
    t0 = time.time()
    model = pipe.fit(train, metric=metric)
    fit_t = time.time() - t0
    t0 = time.time()
    samples = []
    for ifg, label in test:
        res = pipe.score(ifg, model)
        samples.append(LabeledScore(score=res["score"], label="anomaly" if label == "deformation" else "normal", id=""))
    score_t = time.time() - t0
    a = auroc(samples)
    print(f"  {input_format:12s} {metric:6s} AUROC={a:.4f}  T_h={model.threshold:.4g}  fit {fit_t:.1f}s score {score_t:.1f}s")
    return a


def main():
    backbone = BackboneHandle.load("tests/fixtures/tiny_backbone.onnx", input_size=32)
    train, test = build_scenes()
    results = {}
    for metric in ("maha", "wmaha", "nlml", "wnlml"):
        results[("interpolated", metric)] = run(train, test, "interpolated", metric, backbone)
    for fmt in ("holes", "wrapped"):
        results[(fmt, "wnlml")] = run(train, test, fmt, "wnlml", backbone)
    print()
    print("weighting trend:",
          f"wnlml-nlml={results[('interpolated','wnlml')]-results[('interpolated','nlml')]:+.4f}",
          f"wmaha-maha={results[('interpolated','wmaha')]-results[('interpolated','maha')]:+.4f}")
    print("format trend:",
          f"interp={results[('interpolated','wnlml')]:.4f}",
          f"holes={results[('holes','wnlml')]:.4f}",
          f"wrapped={results[('wrapped','wnlml')]:.4f}")


if __name__ == "__main__":
    main()
