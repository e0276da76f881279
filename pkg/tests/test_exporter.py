"""Mesh/texture baking and the layered asset container format."""

import json

import numpy as np
import pytest

from layerfields.appearance import TextureField
from layerfields.decimate import Mesh
from layerfields.autodiff import Tensor
from layerfields.errors import ConfigError, DataError
from layerfields.exporter import (ExportConfig, LayeredMeshAsset, assign_uvs,
                                  atlas_layout, bake_geometry, bake_textures,
                                  export_asset, read_asset, triangulate,
                                  write_asset)
from layerfields.geometry import UvMapper

CENTER = np.array([-0.25, 0.0, 0.0])


class RadialField:
    """Exact distance field: isosurfaces are spheres around the chart center."""

    def __init__(self, s_values):
        self.s_values = np.asarray(s_values, dtype=np.float64)
        self.center = CENTER.copy()
        self.mapper = UvMapper(CENTER)
        self.bbox = (np.full(3, -1.5), np.full(3, 1.5))

    @property
    def n_layers(self):
        return len(self.s_values)

    def eval_points(self, pts, fast=False):
        return np.linalg.norm(np.asarray(pts, dtype=np.float64) - CENTER,
                              axis=-1)

    def eval_points_t(self, pts):
        return Tensor(self.eval_points(pts.data if isinstance(pts, Tensor)
                                       else pts))


def test_export_config_validation():
    with pytest.raises(ConfigError):
        ExportConfig(R=8, R_m=16)
    with pytest.raises(ConfigError):
        ExportConfig(R_t=4)
    assert ExportConfig(R_m=33).triangle_budget == 2 * 32 ** 2


def test_atlas_layout_square_packing():
    assert atlas_layout(1) == (1, 1)
    assert atlas_layout(4) == (2, 2)
    assert atlas_layout(5) == (2, 3)
    assert atlas_layout(12) == (3, 4)


def test_bake_geometry_recovers_sphere_radii():
    geo = RadialField([0.3, 0.45])
    grids = bake_geometry(geo, R=16, trace_m=256)
    assert len(grids) == 2
    for grid, s in zip(grids, geo.s_values):
        assert grid.valid.all()  # a full sphere is hit from everywhere
        r = np.linalg.norm(grid.points - CENTER, axis=-1)
        assert np.abs(r[grid.valid] - s).max() < 1e-3


def test_triangulate_orients_outward():
    geo = RadialField([0.4])
    grid = bake_geometry(geo, R=12)[0]
    mesh = triangulate(grid)
    assert mesh.faces.min() >= 0 and mesh.faces.max() < len(mesh.positions)
    p = mesh.positions
    f = mesh.faces
    n = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
    centroid = (p[f[:, 0]] + p[f[:, 1]] + p[f[:, 2]]) / 3.0
    assert (np.einsum("ij,ij->i", n, centroid - CENTER) > 0).all()


def test_assign_uvs_uses_nearest_bake_sample():
    geo = RadialField([0.4])
    grid = bake_geometry(geo, R=12)[0]
    mesh = triangulate(grid)
    out = assign_uvs(mesh, grid)
    # vertices coincide with bake samples, so each keeps its own lattice UV
    np.testing.assert_allclose(out.uvs, grid.uv.reshape(-1, 2)[
        np.flatnonzero(grid.valid.reshape(-1))], atol=1e-12)


def test_bake_textures_zero_initialized_field():
    geo = RadialField([0.4, 0.5, 0.6])
    app = TextureField(n_frames=2, trunk_width=16, trunk_depth=2, seed=0)
    atlases = bake_textures(app, geo, R_t=16, n_frames=2)
    assert len(atlases) == 2
    rows, cols = atlas_layout(3)
    assert atlases[0].shape == (rows * 16, cols * 16, 4)
    # zero heads: rgb exactly 0, alpha sigmoid(0) = 0.5 -> 128 after rounding
    for li in range(3):
        r0, c0 = (li // cols) * 16, (li % cols) * 16
        tile = atlases[0][r0:r0 + 16, c0:c0 + 16]
        np.testing.assert_array_equal(tile[..., :3], 0)
        np.testing.assert_array_equal(tile[..., 3], 128)
    # the unused tile stays empty
    np.testing.assert_array_equal(atlases[0][16:, 16:], 0)


@pytest.fixture(scope="module")
def small_asset():
    geo = RadialField([0.35, 0.5])
    app = TextureField(n_frames=2, trunk_width=16, trunk_depth=2, seed=1)
    cfg = ExportConfig(R=16, R_m=8, R_t=16, trace_m=128)
    return export_asset(geo, app, cfg, n_frames=2)


def test_export_asset_respects_budget(small_asset):
    assert small_asset.manifest["n_layers"] == 2
    for m in small_asset.meshes:
        assert m.n_faces <= 2 * 7 ** 2
        assert m.positions.dtype == np.float32
        assert np.abs(m.uvs).max() <= 1.0


def test_asset_round_trip_bit_exact(small_asset, tmp_path):
    out = write_asset(small_asset, tmp_path / "asset")
    back = read_asset(out)
    assert back.manifest["n_layers"] == small_asset.manifest["n_layers"]
    assert back.manifest["s_values"] == small_asset.manifest["s_values"]
    for a, b in zip(small_asset.meshes, back.meshes):
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.uvs, b.uvs)
        np.testing.assert_array_equal(a.faces, b.faces)
    for a, b in zip(small_asset.atlases, back.atlases):
        np.testing.assert_array_equal(a, b)


def test_corrupt_mesh_rejected(small_asset, tmp_path):
    out = write_asset(small_asset, tmp_path / "asset")
    path = out / "meshes" / "layer0000.bin"
    buf = bytearray(path.read_bytes())
    buf[len(buf) // 2] ^= 0xFF
    path.write_bytes(bytes(buf))
    with pytest.raises(DataError, match="checksum"):
        read_asset(out)


def test_truncated_mesh_rejected(small_asset, tmp_path):
    out = write_asset(small_asset, tmp_path / "asset")
    path = out / "meshes" / "layer0001.bin"
    path.write_bytes(path.read_bytes()[:-13])
    with pytest.raises(DataError):
        read_asset(out)


def test_bad_magic_rejected(small_asset, tmp_path):
    out = write_asset(small_asset, tmp_path / "asset")
    path = out / "meshes" / "layer0000.bin"
    buf = bytearray(path.read_bytes())
    buf[:4] = b"NOPE"
    path.write_bytes(bytes(buf))
    with pytest.raises(DataError, match="not a layer mesh"):
        read_asset(out)


def test_missing_files_rejected(small_asset, tmp_path):
    out = write_asset(small_asset, tmp_path / "asset")
    (out / "frames" / "frame0002.png").unlink()
    with pytest.raises(DataError, match="missing"):
        read_asset(out)


def test_manifest_version_check(small_asset, tmp_path):
    out = write_asset(small_asset, tmp_path / "asset")
    mpath = out / "manifest.json"
    meta = json.loads(mpath.read_text())
    meta["version"] = 42
    mpath.write_text(json.dumps(meta))
    with pytest.raises(DataError, match="version"):
        read_asset(out)


def test_asset_constructor_validates_counts():
    mesh = Mesh(np.zeros((3, 3), dtype=np.float32),
                np.zeros((3, 2), dtype=np.float32),
                np.array([[0, 1, 2]], dtype=np.int64))
    atlas = np.zeros((8, 8, 4), dtype=np.uint8)
    with pytest.raises(DataError):
        LayeredMeshAsset({"n_layers": 2, "n_frames": 1}, [mesh], [atlas])
    with pytest.raises(DataError):
        LayeredMeshAsset({"n_layers": 1, "n_frames": 2}, [mesh], [atlas])
    bad = Mesh(mesh.positions, np.full((3, 2), 2.0, dtype=np.float32),
               mesh.faces)
    with pytest.raises(DataError, match="UV"):
        LayeredMeshAsset({"n_layers": 1, "n_frames": 1}, [bad], [atlas])
