"""Multi-view dataset format, loader, and a synthetic scene generator.

The synthetic scenes are nested translucent sphere shells with procedural
UV-space colors, rendered by an exact closed-form oracle (ray-sphere
intersection + over-compositing).  Shell surfaces are restricted to the
frontal half-space of the UV chart (x' > 0 relative to the chart center),
which is exactly the region a trained chart-parameterized model can
represent, so the oracle doubles as ground truth for training.

Dataset directory layout::

    cameras.json
    images/view0000/frame0001.png
    images/view0000/frame0002.png
    ...

``cameras.json`` holds intrinsics, world-from-camera extrinsics (row-major
rotation), the frame count, the image path pattern, held-out camera ids,
the background color, and (for synthetic scenes) the generating preset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError
from .geometry import Camera, camera_rays

FORMAT_VERSION = 1
DEFAULT_CHART_OFFSET = 0.25


@dataclass
class Shell:
    """One translucent sphere shell with a procedural frame-varying color."""

    radius: float
    alpha: float
    center: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    base: np.ndarray = dc_field(default_factory=lambda: np.full(3, 0.5))
    amp: np.ndarray = dc_field(default_factory=lambda: np.full(3, 0.3))
    freq: np.ndarray = dc_field(default_factory=lambda: np.ones((3, 2)))
    phase: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))
    dphase: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))

    def color(self, u, v, frame_j: int) -> np.ndarray:
        """Smooth RGB over UV, drifting with the (1-based) frame index."""
        u = np.asarray(u, dtype=np.float64)[..., None]
        v = np.asarray(v, dtype=np.float64)[..., None]
        arg = (self.freq[:, 0] * u * np.pi + self.freq[:, 1] * v * np.pi
               + self.phase + self.dphase * (frame_j - 1))
        return np.clip(self.base + self.amp * np.sin(arg), 0.0, 1.0)


@dataclass
class SyntheticScene:
    shells: list[Shell]           # outermost first, radii strictly decreasing
    background: np.ndarray
    n_frames: int
    chart_center: np.ndarray

    def __post_init__(self):
        radii = [s.radius for s in self.shells]
        if any(b >= a for a, b in zip(radii, radii[1:])):
            raise ConfigError("shell radii must be strictly decreasing")
        if any(not 0.0 <= s.alpha <= 1.0 for s in self.shells):
            raise ConfigError("shell alphas must lie in [0, 1]")
        self.background = np.asarray(self.background, dtype=np.float64)
        self.chart_center = np.asarray(self.chart_center, dtype=np.float64)


def oracle_render(scene: SyntheticScene, cam: Camera, frame_j: int) -> np.ndarray:
    """Exact render of the scene: (H, W, 3) floats in [0, 1]."""
    center, dirs = camera_rays(cam)
    d = dirs.reshape(-1, 3)
    o = np.broadcast_to(center, d.shape)
    n_px = len(d)
    n_sh = len(scene.shells)
    ts = np.full((n_px, 2 * n_sh), np.inf)
    cols = np.zeros((n_px, 2 * n_sh, 3))
    alphas = np.zeros((n_px, 2 * n_sh))
    for si, sh in enumerate(scene.shells):
        oc = o - sh.center
        b = np.einsum("ij,ij->i", oc, d)
        cc = np.einsum("ij,ij->i", oc, oc) - sh.radius ** 2
        disc = b * b - cc
        ok = disc > 0.0
        root = np.sqrt(np.where(ok, disc, 0.0))
        for k, t in enumerate((-b - root, -b + root)):
            valid = ok & (t > 1e-9)
            p = o + t[:, None] * d
            rel = p - scene.chart_center
            nrm = np.linalg.norm(rel, axis=-1)
            pn = rel / np.where(nrm > 0, nrm, 1.0)[:, None]
            valid &= pn[:, 0] > 0.0  # frontal chart half-space only
            u = (2.0 / np.pi) * np.arcsin(np.clip(pn[:, 2], -1.0, 1.0))
            v = (2.0 / np.pi) * np.arctan(
                pn[:, 1] / np.where(valid, pn[:, 0], 1.0))
            col = sh.color(u, v, frame_j)
            slot = 2 * si + k
            ts[:, slot] = np.where(valid, t, np.inf)
            cols[:, slot] = np.where(valid[:, None], col, 0.0)
            alphas[:, slot] = np.where(valid, sh.alpha, 0.0)
    order = np.argsort(ts, axis=1)
    rows = np.arange(n_px)[:, None]
    alphas = alphas[rows, order]
    cols = cols[rows, order]
    out = np.zeros((n_px, 3))
    trans = np.ones(n_px)
    for k in range(2 * n_sh):
        out += cols[:, k] * (alphas[:, k] * trans)[:, None]
        trans = trans * (1.0 - alphas[:, k])
    out += trans[:, None] * scene.background
    return out.reshape(cam.height, cam.width, 3)


# -- presets ------------------------------------------------------------------


def scene_preset(name: str, seed: int, n_frames: int) -> SyntheticScene:
    rng = np.random.default_rng(seed)
    chart_center = np.array([-DEFAULT_CHART_OFFSET, 0.0, 0.0])
    if name == "nested-spheres":
        shells = [
            Shell(radius=0.35, alpha=0.5,
                  base=rng.uniform(0.35, 0.6, 3), amp=rng.uniform(0.15, 0.3, 3),
                  freq=rng.uniform(0.5, 1.5, (3, 2)),
                  phase=rng.uniform(0, 2 * np.pi, 3),
                  dphase=rng.uniform(0.2, 0.5, 3)),
            Shell(radius=0.30, alpha=1.0,
                  base=rng.uniform(0.35, 0.6, 3), amp=rng.uniform(0.15, 0.35, 3),
                  freq=rng.uniform(0.5, 2.0, (3, 2)),
                  phase=rng.uniform(0, 2 * np.pi, 3),
                  dphase=rng.uniform(0.2, 0.5, 3)),
        ]
        return SyntheticScene(shells, np.zeros(3), n_frames, chart_center)
    if name == "single-sphere":
        shells = [Shell(radius=0.32, alpha=1.0,
                        base=rng.uniform(0.4, 0.6, 3),
                        amp=rng.uniform(0.2, 0.35, 3),
                        freq=rng.uniform(0.5, 1.5, (3, 2)),
                        phase=rng.uniform(0, 2 * np.pi, 3),
                        dphase=rng.uniform(0.2, 0.4, 3))]
        return SyntheticScene(shells, np.zeros(3), n_frames, chart_center)
    raise ConfigError(f"unknown scene preset: {name}")


def _lookat_camera(eye: np.ndarray, target: np.ndarray, fx: float,
                   width: int, height: int, cam_id: str) -> Camera:
    up = np.array([0.0, 0.0, 1.0])
    z = target - eye
    z = z / np.linalg.norm(z)
    x = np.cross(z, up)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z], axis=1)
    return Camera(fx, fx, width / 2.0, height / 2.0, width, height,
                  R, eye, cam_id=cam_id)


def make_cameras(views: int, resolution: int, seed: int) -> list[Camera]:
    """Frontal-hemisphere cameras ~1 unit out, looking at the origin."""
    rng = np.random.default_rng(seed)
    cams = []
    # deterministic fan over azimuth with jittered elevation
    azims = np.linspace(-np.radians(70), np.radians(70), views)
    for i in range(views):
        elev = rng.uniform(-np.radians(30), np.radians(30))
        dist = rng.uniform(0.95, 1.05)
        eye = dist * np.array([np.cos(elev) * np.cos(azims[i]),
                               np.cos(elev) * np.sin(azims[i]),
                               np.sin(elev)])
        fx = 1.1 * resolution  # ~49 degree horizontal fov
        cams.append(_lookat_camera(eye, np.zeros(3), fx, resolution,
                                   resolution, cam_id=f"{i:04d}"))
    return cams


def _holdout_indices(views: int, holdout: int) -> list[int]:
    """Evenly interleaved interior views, so held-out cameras are always
    bracketed by training cameras (novel-view interpolation, not
    extrapolation past the end of the capture arc)."""
    picks = np.linspace(0, views - 1, holdout + 2)[1:-1]
    return sorted(set(int(round(p)) for p in picks))


def generate_synthetic(preset: str, out_dir, views: int = 8,
                       resolution: int = 64, n_frames: int = 4,
                       seed: int = 0, holdout: int = 2) -> Path:
    """Write a synthetic dataset directory; returns its path."""
    if views < 4:
        raise ConfigError("need at least 4 views for trainability")
    if holdout >= views:
        raise ConfigError("holdout count must leave training views")
    out_dir = Path(out_dir)
    scene = scene_preset(preset, seed, n_frames)
    cams = make_cameras(views, resolution, seed)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for vi, cam in enumerate(cams):
        vdir = out_dir / "images" / f"view{vi:04d}"
        vdir.mkdir(exist_ok=True)
        for j in range(1, n_frames + 1):
            img = oracle_render(scene, cam, j)
            arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
            Image.fromarray(arr).save(vdir / f"frame{j:04d}.png")
    meta = {
        "format_version": FORMAT_VERSION,
        "width": resolution, "height": resolution,
        "frame_count": n_frames,
        "image_pattern": "images/view{view:04d}/frame{frame:04d}.png",
        "background": scene.background.tolist(),
        "holdout_ids": [cams[i].cam_id for i in _holdout_indices(views, holdout)],
        "scene": {"preset": preset, "seed": seed},
        "cameras": [{
            "id": cam.cam_id,
            "rotation": cam.rotation.reshape(-1).tolist(),
            "translation": cam.translation.tolist(),
            "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        } for cam in cams],
    }
    with open(out_dir / "cameras.json", "w") as f:
        json.dump(meta, f, indent=1)
    return out_dir


# -- loading ------------------------------------------------------------------


@dataclass
class MultiViewDataset:
    root: Path
    cameras: list[Camera]
    n_frames: int
    image_pattern: str
    holdout_ids: list[str]
    background: np.ndarray
    scene_meta: dict | None = None
    _cache: dict = dc_field(default_factory=dict)
    _scale: tuple[float, float] = (1.0, 1.0)

    @property
    def train_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.cameras)
                if c.cam_id not in self.holdout_ids]

    @property
    def holdout_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.cameras)
                if c.cam_id in self.holdout_ids]

    def image(self, view: int, frame_j: int) -> np.ndarray:
        """(H, W, 3) floats in [0, 1] for 1-based frame index."""
        key = (view, frame_j)
        if key not in self._cache:
            cam = self.cameras[view]
            path = self.root / self.image_pattern.format(view=view, frame=frame_j)
            if not path.exists():
                raise DataError(f"missing image: {path}")
            img = Image.open(path).convert("RGB")
            if (img.width, img.height) != (cam.width, cam.height):
                if self._scale == (1.0, 1.0):
                    raise DataError(
                        f"{path}: resolution {img.size} does not match cameras")
                img = img.resize((cam.width, cam.height), Image.BILINEAR)
            self._cache[key] = np.asarray(img, dtype=np.float64) / 255.0
        return self._cache[key]


def load_dataset(root, target_resolution: int | None = None) -> MultiViewDataset:
    root = Path(root)
    meta_path = root / "cameras.json"
    if not meta_path.exists():
        raise DataError(f"no cameras.json in {root}")
    with open(meta_path) as f:
        meta = json.load(f)
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported dataset format version in {meta_path}")
    cams = []
    for entry in meta["cameras"]:
        R = np.asarray(entry["rotation"], dtype=np.float64).reshape(3, 3)
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-6:
            raise DataError(f"camera {entry['id']}: rotation not orthonormal")
        t = np.asarray(entry["translation"], dtype=np.float64)
        if t[0] <= 0.0:
            raise DataError(
                f"camera {entry['id']}: not in the frontal (x > 0) half-space")
        try:
            cam = Camera(entry["fx"], entry["fy"], entry["cx"], entry["cy"],
                         meta["width"], meta["height"], R, t,
                         cam_id=str(entry["id"]))
        except ConfigError as e:
            raise DataError(f"camera {entry['id']}: {e}") from e
        cams.append(cam)
    scale = (1.0, 1.0)
    if target_resolution is not None and target_resolution != meta["width"]:
        scale = (target_resolution / meta["width"],
                 target_resolution / meta["height"])
        cams = [c.resize(target_resolution, target_resolution) for c in cams]
    ds = MultiViewDataset(
        root=root, cameras=cams, n_frames=int(meta["frame_count"]),
        image_pattern=meta["image_pattern"],
        holdout_ids=[str(h) for h in meta.get("holdout_ids", [])],
        background=np.asarray(meta.get("background", [0, 0, 0]), dtype=np.float64),
        scene_meta=meta.get("scene"))
    ds._scale = scale
    # fail fast on missing frames
    for vi in range(len(cams)):
        for j in (1, ds.n_frames):
            p = root / ds.image_pattern.format(view=vi, frame=j)
            if not p.exists():
                raise DataError(f"missing image: {p}")
    return ds
