/**
 * CPU reference renderer for layered-mesh assets.
 *
 * Mirrors the exporter pipeline's software rasterizer fragment for
 * fragment: per-layer nearest-hit depth with perspective-correct UVs,
 * bilinear atlas sampling, then a per-pixel depth sort across layers and
 * front-to-back over-compositing. The WebGL renderer is required to be
 * semantically equivalent to this implementation; tests compare both
 * against renders produced by the exporter's own rasterizer.
 */

import type { CameraPose } from "./camera.js";
import type { AssetManifest } from "./manifest.js";
import type { LayerMesh } from "./lmsh.js";

export interface AtlasImage {
  width: number;
  height: number;
  data: Uint8Array; // RGBA, row-major
}

export interface Asset {
  manifest: AssetManifest;
  meshes: LayerMesh[];
  atlases: AtlasImage[];
}

interface LayerBuffers {
  depth: Float64Array;
  rgba: Float64Array; // 4 per pixel, straight alpha
}

function rasterizeLayer(
  cam: CameraPose, mesh: LayerMesh, atlas: AtlasImage,
  tileRow: number, tileCol: number, tileRes: number,
): LayerBuffers {
  const { width, height } = cam;
  const n = width * height;
  const depth = new Float64Array(n).fill(Infinity);
  const uvBuf = new Float64Array(n * 2);
  const hit = new Uint8Array(n);
  const r = cam.rotation;
  const t = cam.translation;
  const nv = mesh.positions.length / 3;
  const sx = new Float64Array(nv);
  const sy = new Float64Array(nv);
  const invZ = new Float64Array(nv);
  const z = new Float64Array(nv);
  for (let v = 0; v < nv; v++) {
    const px = mesh.positions[3 * v] - t[0];
    const py = mesh.positions[3 * v + 1] - t[1];
    const pz = mesh.positions[3 * v + 2] - t[2];
    // camera coords: c = R^T (p - t)
    const cxw = px * r[0] + py * r[3] + pz * r[6];
    const cyw = px * r[1] + py * r[4] + pz * r[7];
    const czw = px * r[2] + py * r[5] + pz * r[8];
    z[v] = czw;
    sx[v] = (cam.fx * cxw) / czw + cam.cx;
    sy[v] = (cam.fy * cyw) / czw + cam.cy;
    invZ[v] = czw > 1e-9 ? 1.0 / Math.max(czw, 1e-12) : 0.0;
  }
  const faces = mesh.indices;
  for (let f = 0; f < faces.length; f += 3) {
    const a = faces[f];
    const b = faces[f + 1];
    const c = faces[f + 2];
    if (z[a] <= 1e-6 || z[b] <= 1e-6 || z[c] <= 1e-6) {
      continue; // no near-plane clipping; drop straddling triangles
    }
    const x0 = sx[a], y0 = sy[a];
    const x1 = sx[b], y1 = sy[b];
    const x2 = sx[c], y2 = sy[c];
    const xmin = Math.max(Math.floor(Math.min(x0, x1, x2)), 0);
    const xmax = Math.min(Math.ceil(Math.max(x0, x1, x2)), width - 1);
    const ymin = Math.max(Math.floor(Math.min(y0, y1, y2)), 0);
    const ymax = Math.min(Math.ceil(Math.max(y0, y1, y2)), height - 1);
    if (xmin > xmax || ymin > ymax) {
      continue;
    }
    const area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    if (Math.abs(area) < 1e-12) {
      continue;
    }
    for (let py = ymin; py <= ymax; py++) {
      const yc = py + 0.5;
      for (let px = xmin; px <= xmax; px++) {
        const xc = px + 0.5;
        const w0 = ((x1 - xc) * (y2 - yc) - (x2 - xc) * (y1 - yc)) / area;
        const w1 = ((x2 - xc) * (y0 - yc) - (x0 - xc) * (y2 - yc)) / area;
        const w2 = 1.0 - w0 - w1;
        if (w0 < 0 || w1 < 0 || w2 < 0) {
          continue;
        }
        const iz = w0 * invZ[a] + w1 * invZ[b] + w2 * invZ[c];
        const zf = 1.0 / Math.max(iz, 1e-12);
        const pix = py * width + px;
        if (zf >= depth[pix]) {
          continue;
        }
        depth[pix] = zf;
        hit[pix] = 1;
        // perspective-correct UV interpolation
        const u =
          (w0 * mesh.uvs[2 * a] * invZ[a] +
            w1 * mesh.uvs[2 * b] * invZ[b] +
            w2 * mesh.uvs[2 * c] * invZ[c]) * zf;
        const vv =
          (w0 * mesh.uvs[2 * a + 1] * invZ[a] +
            w1 * mesh.uvs[2 * b + 1] * invZ[b] +
            w2 * mesh.uvs[2 * c + 1] * invZ[c]) * zf;
        uvBuf[2 * pix] = u;
        uvBuf[2 * pix + 1] = vv;
      }
    }
  }
  const rgba = new Float64Array(n * 4);
  for (let pix = 0; pix < n; pix++) {
    if (!hit[pix]) {
      depth[pix] = Infinity;
      continue;
    }
    sampleTile(atlas, tileRow * tileRes, tileCol * tileRes, tileRes,
      uvBuf[2 * pix], uvBuf[2 * pix + 1], rgba, 4 * pix);
  }
  return { depth, rgba };
}

/** Bilinear RGBA lookup inside one atlas tile; texel centers at
 * uv = -1 + 2(k + 0.5)/R_t, u indexing tile rows, v tile columns. */
function sampleTile(
  atlas: AtlasImage, r0: number, c0: number, rt: number,
  u: number, v: number, out: Float64Array, offset: number,
): void {
  const fr = Math.min(Math.max((u + 1.0) * 0.5 * rt - 0.5, 0.0), rt - 1);
  const fc = Math.min(Math.max((v + 1.0) * 0.5 * rt - 0.5, 0.0), rt - 1);
  const rLo = Math.floor(fr);
  const cLo = Math.floor(fc);
  const rHi = Math.min(rLo + 1, rt - 1);
  const cHi = Math.min(cLo + 1, rt - 1);
  const wr = fr - rLo;
  const wc = fc - cLo;
  const stride = atlas.width * 4;
  const p00 = (r0 + rLo) * stride + (c0 + cLo) * 4;
  const p01 = (r0 + rLo) * stride + (c0 + cHi) * 4;
  const p10 = (r0 + rHi) * stride + (c0 + cLo) * 4;
  const p11 = (r0 + rHi) * stride + (c0 + cHi) * 4;
  for (let ch = 0; ch < 4; ch++) {
    const top = (atlas.data[p00 + ch] / 255) * (1 - wc)
      + (atlas.data[p01 + ch] / 255) * wc;
    const bot = (atlas.data[p10 + ch] / 255) * (1 - wc)
      + (atlas.data[p11 + ch] / 255) * wc;
    out[offset + ch] = top * (1 - wr) + bot * wr;
  }
}

export interface RenderOptions {
  layerMask?: boolean[];
  background?: number[] | null;
}

/** Render one asset frame to float RGBA in [0, 1] (straight alpha). */
export function renderFrame(
  asset: Asset, cam: CameraPose, frame: number, options: RenderOptions = {},
): Float64Array {
  const { manifest, meshes } = asset;
  if (frame < 1 || frame > manifest.n_frames) {
    throw new RangeError(`frame ${frame} out of range 1..${manifest.n_frames}`);
  }
  const atlas = asset.atlases[frame - 1];
  const mask = options.layerMask ?? meshes.map(() => true);
  if (mask.length !== manifest.n_layers) {
    throw new RangeError("layer mask length does not match layer count");
  }
  const n = cam.width * cam.height;
  const layers: LayerBuffers[] = [];
  for (let li = 0; li < manifest.n_layers; li++) {
    if (!mask[li]) {
      continue;
    }
    const row = Math.floor(li / manifest.atlas_cols);
    const col = li % manifest.atlas_cols;
    layers.push(rasterizeLayer(cam, meshes[li], atlas, row, col,
      manifest.texture_resolution));
  }
  const out = new Float64Array(n * 4);
  const order = new Array<number>(layers.length);
  for (let pix = 0; pix < n; pix++) {
    for (let k = 0; k < layers.length; k++) {
      order[k] = k;
    }
    order.sort((p, q) => layers[p].depth[pix] - layers[q].depth[pix]);
    let r = 0, g = 0, b = 0, trans = 1;
    for (let k = 0; k < layers.length; k++) {
      const lay = layers[order[k]];
      if (!Number.isFinite(lay.depth[pix])) {
        continue;
      }
      const a = lay.rgba[4 * pix + 3];
      r += lay.rgba[4 * pix] * a * trans;
      g += lay.rgba[4 * pix + 1] * a * trans;
      b += lay.rgba[4 * pix + 2] * a * trans;
      trans *= 1 - a;
    }
    const acc = 1 - trans;
    const bg = options.background;
    if (bg) {
      out[4 * pix] = r + trans * bg[0];
      out[4 * pix + 1] = g + trans * bg[1];
      out[4 * pix + 2] = b + trans * bg[2];
    } else if (acc > 1e-9) {
      out[4 * pix] = r / acc;
      out[4 * pix + 1] = g / acc;
      out[4 * pix + 2] = b / acc;
    }
    out[4 * pix + 3] = acc;
  }
  for (let i = 0; i < out.length; i++) {
    out[i] = Math.min(Math.max(out[i], 0), 1);
  }
  return out;
}

/** Quantize a float RGBA buffer to 8-bit, matching the exporter's rule. */
export function toBytes(rgba: Float64Array): Uint8Array {
  const out = new Uint8Array(rgba.length);
  for (let i = 0; i < rgba.length; i++) {
    out[i] = Math.round(Math.min(Math.max(rgba[i], 0), 1) * 255);
  }
  return out;
}

/** FNV-1a hash of a byte buffer; used for interaction-contract checks. */
export function pixelHash(bytes: Uint8Array): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i];
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** PSNR in dB between two equal-length byte images (cap 99). */
export function psnrBytes(a: Uint8Array, b: Uint8Array): number {
  if (a.length !== b.length) {
    throw new RangeError("psnr: length mismatch");
  }
  let se = 0;
  for (let i = 0; i < a.length; i++) {
    const d = (a[i] - b[i]) / 255;
    se += d * d;
  }
  const mse = se / a.length;
  if (mse === 0) {
    return 99;
  }
  return Math.min(-10 * Math.log10(mse), 99);
}
