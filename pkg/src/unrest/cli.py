"""Command-line interface: synth, fit, score, evaluate.

All pipeline hyperparameters come from a TOML config file (see
:mod:`unrest.config`); saved models embed their config, so ``score`` needs
only the model and a backbone.  The backbone path can also be supplied via
the ``UNREST_BACKBONE`` environment variable.
"""

from __future__ import annotations

import os
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import gaussians as G
from .backbone import BackboneError, BackboneHandle
from .config import AppConfig, ConfigError, load_config, parse_config
from .embed import EmbedError
from .evaluation import (
    EvalError,
    LABEL_ANOMALY,
    LABEL_NORMAL,
    ManifestEntry,
    read_manifest,
    write_manifest,
)
from .pipeline import Pipeline, evaluate_run, raster_format_for
from .preprocess import PreprocessError
from .raster import Interferogram, RasterError, read_raster, write_raster
from .report import render_report, report_text, save_overlay
from .store import StoreError, load_model, save_model
from .synth import LABEL_DEFORMATION, corpus_specs, generate_scene

_ERRORS = (
    RasterError,
    PreprocessError,
    EmbedError,
    G.ModelError,
    StoreError,
    EvalError,
    ConfigError,
    BackboneError,
    OSError,
    ValueError,
)


def _fail(exc: Exception):
    raise click.ClickException(str(exc))


def _load_backbone(path: str | None, input_size: int) -> BackboneHandle:
    if not path:
        raise click.ClickException(
            "no backbone given: pass --backbone or set UNREST_BACKBONE"
        )
    return BackboneHandle.load(path, input_size=input_size)


def _atomic_write_raster(ifg: Interferogram, path: Path, format: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_raster(ifg, tmp, format)
    os.replace(tmp, path)


@click.group()
def main():
    """Unsupervised volcanic-unrest detection in InSAR interferograms."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--count-normal", "count_normal", default=10, show_default=True, type=int)
@click.option("--count-anomaly", "count_anomaly", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
def synth(spec_path, count_normal, count_anomaly, out_dir, seed):
    """Generate labeled synthetic scenes plus manifests.

    Writes raw-f32 rasters, ``manifest.tsv`` (path/split/label, consumed by
    fit and evaluate) and ``scenes.tsv`` (path, label, seed and the full
    scene parameters, one record per scene).
    """
    try:
        cfg = load_config(spec_path)
        if cfg.synth is None:
            raise ConfigError(f"{spec_path}: missing [synth] table")
        specs = corpus_specs(
            cfg.synth.scene,
            count_normal,
            count_anomaly,
            seed=seed,
            center_jitter=cfg.synth.center_jitter,
        )
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        n_train = int(round(count_normal * cfg.synth.train_fraction))
        entries = []
        scene_lines = []
        normal_seen = 0
        for i, (scene_spec, label) in enumerate(specs):
            mlabel = LABEL_ANOMALY if label == LABEL_DEFORMATION else LABEL_NORMAL
            name = f"{i:04d}_{mlabel}.ifg"
            ifg, _ = generate_scene(scene_spec)
            _atomic_write_raster(ifg, out / name, "raw-f32")
            if mlabel == LABEL_NORMAL:
                split = "train" if normal_seen < n_train else "test"
                normal_seen += 1
            else:
                split = "test"
            entries.append(ManifestEntry(path=name, split=split, label=mlabel))
            kv = " ".join(f"{k}={v}" for k, v in sorted(scene_spec.to_metadata().items()))
            scene_lines.append(f"{name}\t{mlabel}\t{scene_spec.rng_seed}\t{kv}")
        write_manifest(entries, out / "manifest.tsv")
        tmp = out / "scenes.tsv.tmp"
        tmp.write_text("\n".join(scene_lines) + "\n", encoding="utf-8")
        os.replace(tmp, out / "scenes.tsv")
        click.echo(
            f"wrote {len(specs)} scenes to {out} "
            f"({n_train} train / {len(specs) - n_train} test)"
        )
    except _ERRORS as exc:
        _fail(exc)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backbone", envvar="UNREST_BACKBONE", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--delay-dir", type=click.Path(file_okay=False), default=None)
@click.option("--metric", type=str, default=None, help="Override the configured metric.")
def fit(manifest_path, backbone, config_path, out_path, delay_dir, metric):
    """Fit per-position Gaussians on the manifest's train split and calibrate."""
    try:
        cfg = load_config(config_path)
        entries = read_manifest(manifest_path)
        train = [e for e in entries if e.split == "train"]
        if not train:
            raise EvalError(f"{manifest_path}: no train entries")
        bad = [e.path for e in train if e.label != LABEL_NORMAL]
        if bad:
            raise EvalError(
                "train split must contain only normal images; found anomaly entries: "
                + ", ".join(Path(p).name for p in bad[:5])
            )
        handle = _load_backbone(backbone, cfg.patch.size)
        pipe = Pipeline(cfg, handle)
        lookup = _delay_lookup(delay_dir)
        ifgs = [read_raster(e.path, raster_format_for(e.path)) for e in train]
        model = pipe.fit(ifgs, metric=metric, delays=[lookup(e.path) for e in train])
        save_model(model, out_path)
        click.echo(f"fitted {len(train)} training images; T_h = {model.threshold:.6g}")
        click.echo(f"model written to {out_path} (fingerprint {model.fingerprint[:12]})")
    except _ERRORS as exc:
        _fail(exc)


def _delay_lookup(delay_dir):
    """Match delay rasters to interferograms by filename stem."""
    if delay_dir is None:
        return lambda path: None
    delay_dir = Path(delay_dir)

    def lookup(path):
        stem = Path(path).stem
        for candidate in sorted(delay_dir.glob(stem + ".*")):
            if candidate.suffix.lower() in (".ifg", ".raw", ".tif", ".tiff"):
                delay_ifg = read_raster(candidate, raster_format_for(candidate))
                if delay_ifg.missing.any():
                    raise PreprocessError(f"delay map {candidate} has missing pixels")
                return delay_ifg.values.astype(np.float64)
        return None

    return lookup


def _input_rasters(input_path: Path) -> list:
    if input_path.is_dir():
        return sorted(
            p for p in input_path.iterdir() if p.suffix.lower() in (".ifg", ".raw", ".tif", ".tiff")
        )
    return [input_path]


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--backbone", envvar="UNREST_BACKBONE", type=click.Path(exists=True, dir_okay=False))
@click.option("--overlay", is_flag=True, help="Render PNG overlays next to the rasters.")
@click.option("--delay-dir", type=click.Path(file_okay=False), default=None)
def score(model_path, input_path, out_dir, backbone, overlay, delay_dir):
    """Score rasters against a fitted model; write probability maps.

    Emits one probability-map raster (raw-f32) per input, an optional PNG
    overlay, a ``scores.tsv`` table, and lists images flagged at P > 0.5.
    """
    try:
        model = load_model(model_path)
        cfg = _config_from_model(model)
        handle = _load_backbone(backbone, cfg.patch.size)
        pipe = Pipeline(cfg, handle)
        if model.fingerprint != pipe.fingerprint:
            raise StoreError(
                f"model fingerprint {model.fingerprint[:12]}... does not match this "
                f"backbone/config ({pipe.fingerprint[:12]}...)"
            )
        rasters = _input_rasters(Path(input_path))
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if not rasters:
            click.echo(f"warning: no rasters found under {input_path}", err=True)
            return
        lookup = _delay_lookup(delay_dir)
        flagged = []
        rows = ["path\tprobability\tscore\tflag_05\tflag_08"]
        for raster_path in rasters:
            ifg = read_raster(raster_path, raster_format_for(raster_path))
            result = pipe.score(ifg, model, delay=lookup(raster_path))
            prob = result["probability"]
            pmap = result["probability_map"].astype(np.float32)
            out_raster = out / f"{raster_path.stem}_prob.ifg"
            _atomic_write_raster(Interferogram.from_values(pmap), out_raster, "raw-f32")
            if overlay:
                save_overlay(
                    ifg.values,
                    result["probability_map"],
                    out / f"{raster_path.stem}_overlay.png",
                    title=f"{raster_path.name}  P={prob:.3f}",
                )
            rows.append(
                f"{raster_path}\t{prob:.9g}\t{result['score']:.9g}"
                f"\t{int(prob > 0.5)}\t{int(prob > 0.8)}"
            )
            click.echo(f"{raster_path.name}: P = {prob:.4f}")
            if prob > 0.5:
                flagged.append((raster_path, prob))
        (out / "scores.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        if flagged:
            click.echo("flagged (P > 0.5):")
            for raster_path, prob in flagged:
                click.echo(f"  {raster_path}  P={prob:.4f}")
        else:
            click.echo("no images flagged (P > 0.5)")
    except _ERRORS as exc:
        _fail(exc)


def _config_from_model(model) -> AppConfig:
    header = model.config
    if not header:
        raise StoreError("model carries no pipeline config; re-fit with this version")
    return parse_config(
        {
            "preprocess": header["preprocess"],
            "patch": header["patch"],
            "model": header["model"],
            "weights": {"layers": header["weights"]},
        }
    )


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--backbone", envvar="UNREST_BACKBONE", type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--metric", type=str, default=None, help="Override the configured metric.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--delay-dir", type=click.Path(file_okay=False), default=None)
def evaluate(manifest_path, config_path, backbone, model_path, metric, out_dir, delay_dir):
    """Fit (or load) a model, score the test split, write report files."""
    try:
        cfg = load_config(config_path)
        if metric is not None:
            cfg = replace(cfg, model=replace(cfg.model, metric=metric))
        handle = _load_backbone(backbone, cfg.patch.size)
        pipe = Pipeline(cfg, handle)
        entries = read_manifest(manifest_path)
        model = None
        if model_path is not None:
            model = load_model(model_path, expect_fingerprint=pipe.fingerprint)
        report = evaluate_run(
            entries, pipe, metric=metric, model=model, delay_lookup=_delay_lookup(delay_dir)
        )
        written = render_report(report, out_dir)
        click.echo(report_text(report), nl=False)
        click.echo(f"report files: {', '.join(str(p) for p in written)}")
    except _ERRORS as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
