"""Command-line entry point: synth, train, export, render, eval, sweep.

A JSON config file is the source of truth for training runs; ``--set
key=value`` flags override individual fields and are type-checked against
the config schema before any work starts.  Every run writes a
``run_record.json`` next to its outputs with the resolved configuration,
seeds, and library versions; re-running with the same record reproduces
the outputs bit for bit.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  Set ``LAYERFIELDS_THREADS`` to cap BLAS thread counts.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import os
import platform
import sys
from pathlib import Path

import click
import numpy as np

from .errors import ConfigError, DataError, LayerFieldsError

_threads = os.environ.get("LAYERFIELDS_THREADS")
if _threads:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, _threads)


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("layerfields")
    except Exception:
        return "unknown"


def _write_record(out_dir: Path, stage: str, resolved: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "stage": stage,
        "argv": sys.argv[1:],
        "resolved_config": resolved,
        "versions": {
            "layerfields": _version(),
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    with open(out_dir / "run_record.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=str)


def _stage_errors(stage: str):
    """Map library exceptions to exit codes, naming the failing stage."""
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*a, **kw):
            try:
                return fn(*a, **kw)
            except LayerFieldsError as exc:
                click.echo(f"error in stage '{stage}': {exc}", err=True)
                sys.exit(exc.exit_code)
            except OSError as exc:
                click.echo(f"error in stage '{stage}': {exc}", err=True)
                sys.exit(DataError.exit_code)
        return wrapper
    return deco


def _coerce(value: str, target_type):
    if target_type is bool:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse {value!r} as a boolean")
    if target_type is tuple:
        return tuple(json.loads(f"[{value}]"))
    try:
        return target_type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(
            f"cannot parse {value!r} as {target_type.__name__}") from exc


def _load_train_config(config_path, overrides):
    from .trainer import TrainConfig, desk_config
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    base: dict = {}
    if config_path is not None:
        with open(config_path) as fh:
            try:
                base = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{config_path}: invalid JSON: {exc}")
    preset = base.pop("preset", "paper")
    for key, value in base.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, list):
            base[key] = tuple(value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        ftype = fields[key].type
        py_type = {"int": int, "float": float, "bool": bool, "str": str,
                   "tuple": tuple}.get(str(ftype), str)
        base[key] = _coerce(value, py_type)
    if preset == "desk":
        return desk_config(**base)
    if preset == "paper":
        return TrainConfig(**base)
    raise ConfigError(f"unknown preset {preset!r} (expected desk or paper)")


@click.group()
def main():
    """Layered radiance-manifold pipeline."""


@main.command()
@click.option("--preset", default="nested-spheres",
              type=click.Choice(["nested-spheres", "single-sphere"]))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--views", default=8, show_default=True)
@click.option("--resolution", default=64, show_default=True)
@click.option("--frames", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--holdout", default=2, show_default=True)
@_stage_errors("synth")
def synth(preset, out, views, resolution, frames, seed, holdout):
    """Generate a synthetic multi-view dataset with exact ground truth."""
    from .datasets import generate_synthetic
    generate_synthetic(preset, out, views=views, resolution=resolution,
                       n_frames=frames, seed=seed, holdout=holdout)
    _write_record(out, "synth", {
        "preset": preset, "views": views, "resolution": resolution,
        "frames": frames, "seed": seed, "holdout": holdout})
    click.echo(f"wrote dataset to {out}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True,
                                                       path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, path_type=Path),
              help="JSON training config; may carry a 'preset' key.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config field (repeatable).")
@click.option("--resume", default=None, type=click.Path(exists=True,
                                                        path_type=Path))
@click.option("--resolution", default=None, type=int,
              help="Downsample the dataset images before training.")
@_stage_errors("train")
def train(data, out, config_path, overrides, resume, resolution):
    """Optimize geometry and texture fields against a dataset."""
    from . import trainer
    from .datasets import load_dataset
    cfg = _load_train_config(config_path, overrides)
    dataset = load_dataset(data, target_resolution=resolution)
    _write_record(out, "train", {
        "data": str(data), "resolution": resolution,
        "resume": str(resume) if resume else None,
        "train_config": dataclasses.asdict(cfg)})
    final = trainer.train(cfg, dataset, out, resume_from=resume,
                          log=click.echo)
    click.echo(f"final checkpoint: {final}")


@main.command()
@click.option("--checkpoint", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--bake-res", default=256, show_default=True,
              help="Hemisphere bake grid resolution R.")
@click.option("--mesh-res", default=64, show_default=True,
              help="Mesh-equivalent resolution R_m (budget 2(R_m-1)^2).")
@click.option("--tex-res", default=256, show_default=True,
              help="Per-layer texture tile resolution R_t.")
@click.option("--trace-m", default=256, show_default=True)
@click.option("--background", default="0,0,0", show_default=True)
@_stage_errors("export")
def export(checkpoint, out, bake_res, mesh_res, tex_res, trace_m, background):
    """Bake a trained checkpoint into a mesh + texture-atlas asset."""
    from .exporter import ExportConfig, export_asset, write_asset
    from .trainer import load_checkpoint
    header, geo, app, _, _ = load_checkpoint(checkpoint)
    bg = tuple(float(x) for x in background.split(","))
    cfg = ExportConfig(R=bake_res, R_m=mesh_res, R_t=tex_res, trace_m=trace_m)
    asset = export_asset(geo, app, cfg, app.n_frames, background=bg)
    write_asset(asset, out)
    _write_record(out, "export", {
        "checkpoint": str(checkpoint), "bake_res": bake_res,
        "mesh_res": mesh_res, "tex_res": tex_res, "trace_m": trace_m,
        "background": list(bg), "source_step": header["step"]})
    click.echo(f"wrote asset to {out}")


@main.command()
@click.option("--asset", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--data", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="Dataset directory supplying the camera.")
@click.option("--camera", default=0, show_default=True,
              help="Camera index within the dataset.")
@click.option("--frame", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_stage_errors("render")
def render(asset, data, camera, frame, out):
    """Rasterize one asset frame from a dataset camera to a PNG."""
    from PIL import Image

    from .datasets import load_dataset
    from .exporter import read_asset
    from .rastercomp import rasterize_layers
    a = read_asset(asset)
    ds = load_dataset(data)
    if not 0 <= camera < len(ds.cameras):
        raise ConfigError(f"camera index {camera} out of range "
                          f"0..{len(ds.cameras) - 1}")
    rgba = rasterize_layers(a, ds.cameras[camera], frame,
                            background=a.manifest["background"])
    img = np.round(np.clip(rgba, 0.0, 1.0) * 255.0).astype(np.uint8)
    out.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="RGBA").save(out)
    _write_record(out.parent, "render", {
        "asset": str(asset), "data": str(data), "camera": camera,
        "frame": frame})
    click.echo(f"wrote {out}")


def _eval_asset(asset_path, data, which):
    from .exporter import read_asset
    from .rastercomp import (composite_over_background, psnr,
                             rasterize_layers, ssim, QualityReport)
    from .datasets import load_dataset
    a = read_asset(asset_path)
    ds = load_dataset(data)
    views = ds.holdout_indices if which == "holdout" else ds.train_indices
    report = QualityReport()
    for v in views:
        cam = ds.cameras[v]
        for j in range(1, ds.n_frames + 1):
            rgba = rasterize_layers(a, cam, j)
            img = composite_over_background(rgba, ds.background)
            gt = ds.image(v, j)
            report.add(cam_id=cam.cam_id, frame=j,
                       psnr=psnr(img, gt), ssim=ssim(img, gt))
    return report


@main.command("eval")
@click.option("--checkpoint", default=None,
              type=click.Path(exists=True, path_type=Path),
              help="Evaluate the neural model at this checkpoint.")
@click.option("--asset", default=None,
              type=click.Path(exists=True, path_type=Path),
              help="Evaluate a rasterized asset instead.")
@click.option("--data", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--split", default="holdout", show_default=True,
              type=click.Choice(["holdout", "train"]))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--resolution", default=None, type=int)
@_stage_errors("eval")
def eval_cmd(checkpoint, asset, data, split, out, resolution):
    """Score renders against ground truth; writes report.jsonl + summary."""
    if (checkpoint is None) == (asset is None):
        raise ConfigError("pass exactly one of --checkpoint or --asset")
    from .datasets import load_dataset
    if checkpoint is not None:
        from . import trainer
        _, geo, app, _, _ = trainer.load_checkpoint(checkpoint)
        ds = load_dataset(data, target_resolution=resolution)
        rows, summary = trainer.evaluate(geo, app, ds, which=split)
    else:
        report = _eval_asset(asset, data, split)
        rows, summary = report.rows, report.summary()
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.jsonl", "w") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    _write_record(out, "eval", {
        "checkpoint": str(checkpoint) if checkpoint else None,
        "asset": str(asset) if asset else None, "data": str(data),
        "split": split, "resolution": resolution})
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@main.command()
@click.option("--checkpoint", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--data", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--mesh-res", default=None,
              help="Comma list of R_m values, e.g. 512,256,128,64,32,16,8.")
@click.option("--tex-res", default=None,
              help="Comma list of R_t values, e.g. 1024,512,256,128,64.")
@click.option("--bake-res", default=256, show_default=True)
@click.option("--trace-m", default=128, show_default=True)
@click.option("--split", default="holdout", show_default=True,
              type=click.Choice(["holdout", "train"]))
@_stage_errors("sweep")
def sweep(checkpoint, data, out, mesh_res, tex_res, bake_res, trace_m, split):
    """Re-export and score an asset across mesh or texture budgets.

    Emits one row per budget setting so quality trends can be read off
    directly (PSNR/SSIM vs mesh resolution or texture resolution).
    """
    from .exporter import ExportConfig, export_asset, write_asset
    from .trainer import load_checkpoint
    if (mesh_res is None) == (tex_res is None):
        raise ConfigError("pass exactly one of --mesh-res or --tex-res")
    _, geo, app, _, _ = load_checkpoint(checkpoint)
    axis = "mesh_res" if mesh_res is not None else "tex_res"
    values = [int(v) for v in (mesh_res or tex_res).split(",")]
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in values:
        kw = {"R": max(bake_res, v), "R_m": 64, "R_t": 256,
              "trace_m": trace_m}
        kw["R_m" if axis == "mesh_res" else "R_t"] = v
        cfg = ExportConfig(**kw)
        asset_dir = out / f"{axis}_{v:04d}"
        asset = export_asset(geo, app, cfg, app.n_frames)
        write_asset(asset, asset_dir)
        report = _eval_asset(asset_dir, data, split)
        summary = report.summary()
        row = {axis: v, **summary}
        rows.append(row)
        click.echo(json.dumps(row, sort_keys=True))
    with open(out / "sweep.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _write_record(out, "sweep", {
        "checkpoint": str(checkpoint), "data": str(data), "axis": axis,
        "values": values, "bake_res": bake_res, "trace_m": trace_m,
        "split": split})


if __name__ == "__main__":
    sys.exit(main())
