"""Bake trained fields into a layered mesh asset.

The asset is N static UV-mapped triangle meshes (one per isosurface) plus K
RGBA texture-atlas frames, written to a directory:

    manifest.json
    meshes/layer0000.bin ...
    frames/frame0001.png ...

Mesh binary layout (little-endian): magic ``LMSH``, u32 vertex count V,
u32 index count I, V*3 f32 positions, V*2 f32 UVs, I u32 indices, trailing
u64 checksum (CRC-32 of all preceding bytes, zero-extended).
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from . import autodiff as ad
from .decimate import Mesh, decimate
from .errors import ConfigError, DataError, ExportError
from .geometry import hemisphere_grid
from .manifold import TraceConfig, intersect_batch

MESH_MAGIC = b"LMSH"
ASSET_VERSION = 1


@dataclass
class ExportConfig:
    R: int = 256                 # bake resolution
    R_m: int = 64                # target mesh resolution (budget 2*(R_m-1)^2)
    R_t: int = 256               # texture resolution
    trace_m: int = 256
    frame_rate: float = 30.0

    def __post_init__(self):
        if not self.R >= self.R_m >= 2:
            raise ConfigError("need R >= R_m >= 2")
        if self.R_t < 16:
            raise ConfigError("texture resolution must be >= 16")

    @property
    def triangle_budget(self) -> int:
        return 2 * (self.R_m - 1) ** 2


@dataclass
class LayerGrid:
    layer: int
    s_value: float
    points: np.ndarray    # (R, R, 3)
    valid: np.ndarray     # (R, R) bool
    uv: np.ndarray        # (R, R, 2) uniform lattice
    center: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))


@dataclass
class LayeredMeshAsset:
    manifest: dict
    meshes: list[Mesh]                 # float32 positions/uvs
    atlases: list[np.ndarray]          # K x (H, W, 4) uint8

    def __post_init__(self):
        if self.manifest["n_layers"] != len(self.meshes):
            raise DataError("manifest layer count does not match meshes")
        if self.manifest["n_frames"] != len(self.atlases):
            raise DataError("manifest frame count does not match atlases")
        for m in self.meshes:
            if len(m.faces) and (m.faces.min() < 0 or
                                 m.faces.max() >= len(m.positions)):
                raise DataError("mesh face indices out of range")
            if len(m.uvs) and np.any(np.abs(m.uvs) > 1.0 + 1e-6):
                raise DataError("mesh UVs outside [-1, 1]^2")


def bake_geometry(geo, R: int, trace_m: int = 256,
                  level_tol: float = 1e-3) -> list[LayerGrid]:
    """First crossing per hemisphere ray per layer, on a clamped R x R grid."""
    origins, dirs, uv = hemisphere_grid(R, geo.mapper, clamp=True)
    o = origins.reshape(-1, 3)
    d = dirs.reshape(-1, 3)
    cfg = TraceConfig(M=trace_m, t_near=1e-4, t_far=2.5,
                      max_crossings_per_manifold=1)
    n = len(o)
    pts = np.zeros((geo.n_layers, n, 3))
    valid = np.zeros((geo.n_layers, n), dtype=bool)
    chunk = 4096
    with ad.no_grad():
        for i in range(0, n, chunk):
            batch = intersect_batch(geo, o[i:i + chunk], d[i:i + chunk], cfg,
                                    keep_out_of_chart=True)
            p = batch.points.data
            for li in range(geo.n_layers):
                sel = batch.layer_index == li
                ridx = batch.ray_index[sel] + i
                pts[li, ridx] = p[sel]
                valid[li, ridx] = True
    grids = []
    for li, s in enumerate(geo.s_values):
        g = geo.eval_points(pts[li].reshape(-1, 3))
        ok = valid[li] & (np.abs(g - s) < level_tol)
        if ok.sum() < 3:
            raise ExportError(
                f"layer {li} (s={s:.4f}) has {int(ok.sum())} valid samples")
        grids.append(LayerGrid(layer=li, s_value=float(s),
                               points=pts[li].reshape(R, R, 3),
                               valid=ok.reshape(R, R), uv=uv,
                               center=geo.center.copy()))
    return grids


def triangulate(grid: LayerGrid) -> Mesh:
    """Two triangles per fully valid quad, wound outward from the center.

    Vertex positions and UVs come straight from the grid lattice.
    """
    R = grid.points.shape[0]
    vid = -np.ones((R, R), dtype=np.int64)
    vs, uvs = [], []
    for i in range(R):
        for j in range(R):
            if grid.valid[i, j]:
                vid[i, j] = len(vs)
                vs.append(grid.points[i, j])
                uvs.append(grid.uv[i, j])
    quad_ok = (grid.valid[:-1, :-1] & grid.valid[1:, :-1]
               & grid.valid[:-1, 1:] & grid.valid[1:, 1:])
    faces = []
    ii, jj = np.nonzero(quad_ok)
    for i, j in zip(ii, jj):
        v00, v10 = vid[i, j], vid[i + 1, j]
        v01, v11 = vid[i, j + 1], vid[i + 1, j + 1]
        faces.append((v00, v10, v11))
        faces.append((v00, v11, v01))
    if not faces:
        raise ExportError(f"layer {grid.layer}: no fully valid quad to mesh")
    mesh = Mesh(np.asarray(vs), np.asarray(uvs),
                np.asarray(faces, dtype=np.int64))
    _orient_outward(mesh, grid.center)
    return mesh


def _orient_outward(mesh: Mesh, center: np.ndarray):
    p = mesh.positions
    f = mesh.faces
    n = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    centroid = (p[f[:, 0]] + p[f[:, 1]] + p[f[:, 2]]) / 3.0
    flip = np.einsum("ij,ij->i", n, centroid - center) < 0.0
    f[flip] = f[flip][:, [0, 2, 1]]


def assign_uvs(mesh: Mesh, grid: LayerGrid) -> Mesh:
    """Give every vertex the UV of its nearest valid bake sample.

    Ties are broken toward the lowest flat grid index.
    """
    pts = grid.points[grid.valid]
    flat_idx = np.flatnonzero(grid.valid.reshape(-1))
    uv_flat = grid.uv.reshape(-1, 2)[flat_idx]
    tree = cKDTree(pts)
    k = min(4, len(pts))
    dist, idx = tree.query(mesh.positions, k=k)
    if k == 1:
        dist, idx = dist[:, None], idx[:, None]
    best = np.empty(len(mesh.positions), dtype=np.int64)
    for vi in range(len(mesh.positions)):
        dmin = dist[vi, 0]
        cands = idx[vi][np.abs(dist[vi] - dmin) < 1e-12]
        best[vi] = cands.min() if len(cands) else idx[vi, 0]
    return Mesh(mesh.positions.copy(), uv_flat[best].copy(), mesh.faces.copy())


def atlas_layout(n_layers: int) -> tuple[int, int]:
    cols = int(np.ceil(np.sqrt(n_layers)))
    rows = int(np.ceil(n_layers / cols))
    return rows, cols


def bake_textures(app, geo, R_t: int, n_frames: int,
                  chunk: int = 16384) -> list[np.ndarray]:
    """K atlas frames: per layer, evaluate the texture at the texel-center
    UV lattice with the view branch bypassed, then quantize to 8-bit RGBA.

    Tiles are packed row-major into a ceil(sqrt(N))-column grid.
    """
    n_layers = geo.n_layers
    rows, cols = atlas_layout(n_layers)
    ticks = -1.0 + 2.0 * (np.arange(R_t) + 0.5) / R_t
    uu, vv = np.meshgrid(ticks, ticks, indexing="ij")
    uv = np.stack([uu, vv], axis=-1).reshape(-1, 2)
    atlases = []
    with ad.no_grad():
        for j in range(1, n_frames + 1):
            code = app.store["embed.table"].data[j - 1]
            atlas = np.zeros((rows * R_t, cols * R_t, 4), dtype=np.uint8)
            for li, s in enumerate(geo.s_values):
                rgba = np.empty((len(uv), 4))
                codes = np.broadcast_to(code, (chunk, len(code)))
                for i in range(0, len(uv), chunk):
                    part = uv[i:i + chunk]
                    rgb, alpha, _ = app.eval_t(
                        part, np.full(len(part), s), codes[:len(part)],
                        view_dir=None)
                    rgba[i:i + chunk, :3] = rgb.data
                    rgba[i:i + chunk, 3] = alpha.data
                tile = np.round(np.clip(rgba, 0.0, 1.0) * 255.0).astype(np.uint8)
                # tile pixel (row, col) = (u index, v index)
                tile = tile.reshape(R_t, R_t, 4)
                r0, c0 = (li // cols) * R_t, (li % cols) * R_t
                atlas[r0:r0 + R_t, c0:c0 + R_t] = tile
            atlases.append(atlas)
    return atlases


def export_asset(geo, app, cfg: ExportConfig, n_frames: int,
                 background=(0.0, 0.0, 0.0)) -> LayeredMeshAsset:
    """Full bake: geometry grids -> meshes -> decimate -> UVs -> textures."""
    grids = bake_geometry(geo, cfg.R, trace_m=cfg.trace_m)
    meshes = []
    for grid in grids:
        mesh = triangulate(grid)
        mesh = decimate(mesh, cfg.triangle_budget)
        mesh = assign_uvs(mesh, grid)
        meshes.append(Mesh(mesh.positions.astype(np.float32),
                           mesh.uvs.astype(np.float32),
                           mesh.faces.astype(np.int64)))
    atlases = bake_textures(app, geo, cfg.R_t, n_frames)
    rows, cols = atlas_layout(geo.n_layers)
    manifest = {
        "version": ASSET_VERSION,
        "n_layers": geo.n_layers,
        "n_frames": n_frames,
        "texture_resolution": cfg.R_t,
        "atlas_rows": rows,
        "atlas_cols": cols,
        "center": geo.center.tolist(),
        "s_values": geo.s_values.tolist(),
        "frame_rate": cfg.frame_rate,
        "background": list(map(float, np.asarray(background).reshape(3))),
        "bake_resolution": cfg.R,
        "mesh_resolution": cfg.R_m,
    }
    return LayeredMeshAsset(manifest, meshes, atlases)


# -- container I/O ------------------------------------------------------------


def _mesh_bytes(mesh: Mesh) -> bytes:
    v = np.ascontiguousarray(mesh.positions, dtype="<f4")
    uv = np.ascontiguousarray(mesh.uvs, dtype="<f4")
    idx = np.ascontiguousarray(mesh.faces.reshape(-1), dtype="<u4")
    body = (MESH_MAGIC + struct.pack("<II", len(v), len(idx))
            + v.tobytes() + uv.tobytes() + idx.tobytes())
    return body + struct.pack("<Q", zlib.crc32(body))


def _mesh_from_bytes(buf: bytes, name: str) -> Mesh:
    if len(buf) < 20 or buf[:4] != MESH_MAGIC:
        raise DataError(f"{name}: not a layer mesh file")
    body, tail = buf[:-8], buf[-8:]
    (stored,) = struct.unpack("<Q", tail)
    if zlib.crc32(body) != stored:
        raise DataError(f"{name}: checksum mismatch (corrupt mesh)")
    nv, ni = struct.unpack("<II", body[4:12])
    need = 12 + nv * 12 + nv * 8 + ni * 4
    if len(body) != need:
        raise DataError(f"{name}: truncated mesh payload")
    off = 12
    pos = np.frombuffer(body, dtype="<f4", count=nv * 3, offset=off)
    off += nv * 12
    uv = np.frombuffer(body, dtype="<f4", count=nv * 2, offset=off)
    off += nv * 8
    idx = np.frombuffer(body, dtype="<u4", count=ni, offset=off)
    return Mesh(pos.reshape(nv, 3).copy(), uv.reshape(nv, 2).copy(),
                idx.reshape(-1, 3).astype(np.int64))


def write_asset(asset: LayeredMeshAsset, out_dir) -> Path:
    out = Path(out_dir)
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    (out / "frames").mkdir(exist_ok=True)
    manifest = dict(asset.manifest)
    manifest["mesh_files"] = []
    for li, mesh in enumerate(asset.meshes):
        name = f"meshes/layer{li:04d}.bin"
        (out / name).write_bytes(_mesh_bytes(mesh))
        manifest["mesh_files"].append(name)
    manifest["frame_files"] = []
    for j, atlas in enumerate(asset.atlases, start=1):
        name = f"frames/frame{j:04d}.png"
        Image.fromarray(atlas, mode="RGBA").save(out / name)
        manifest["frame_files"].append(name)
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)
    return out


def read_asset(in_dir) -> LayeredMeshAsset:
    root = Path(in_dir)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise DataError(f"no manifest.json in {root}")
    with open(mpath) as f:
        manifest = json.load(f)
    if manifest.get("version") != ASSET_VERSION:
        raise DataError(f"unsupported asset version in {mpath}")
    if len(manifest["mesh_files"]) != manifest["n_layers"]:
        raise DataError("manifest layer count does not match mesh file list")
    if len(manifest["frame_files"]) != manifest["n_frames"]:
        raise DataError("manifest frame count does not match frame file list")
    meshes = []
    for name in manifest["mesh_files"]:
        p = root / name
        if not p.exists():
            raise DataError(f"missing mesh file: {p}")
        meshes.append(_mesh_from_bytes(p.read_bytes(), name))
    atlases = []
    for name in manifest["frame_files"]:
        p = root / name
        if not p.exists():
            raise DataError(f"missing atlas frame: {p}")
        img = Image.open(p)
        if img.mode != "RGBA":
            raise DataError(f"{name}: atlas must be RGBA")
        atlases.append(np.asarray(img, dtype=np.uint8))
    return LayeredMeshAsset(manifest, meshes, atlases)
