/**
 * Asset directory loader.
 *
 * Fetches manifest.json, the per-layer binary meshes, and the per-frame
 * atlas PNGs from a base URL. PNG decoding is injected so the same loader
 * runs in the browser (canvas decode) and under node tests (pngjs).
 */

import { validateManifest, ManifestError } from "./manifest.js";
import { parseMesh } from "./lmsh.js";
import type { Asset, AtlasImage } from "./raster.js";

export type FetchBytes = (url: string) => Promise<ArrayBuffer>;
export type DecodePng = (bytes: ArrayBuffer) => Promise<AtlasImage>;

async function fetchBytesDefault(url: string): Promise<ArrayBuffer> {
  const resp = await fetch(url);
  if (!resp.ok) {
    throw new Error(`fetch ${url}: HTTP ${resp.status}`);
  }
  return resp.arrayBuffer();
}

export async function loadAsset(
  baseUrl: string, decodePng: DecodePng,
  fetchBytes: FetchBytes = fetchBytesDefault,
): Promise<Asset> {
  const base = baseUrl.replace(/\/+$/, "");
  const rawManifest = await fetchBytes(`${base}/manifest.json`);
  let parsed: unknown;
  try {
    parsed = JSON.parse(new TextDecoder().decode(rawManifest));
  } catch {
    throw new ManifestError("manifest.json is not valid JSON");
  }
  const manifest = validateManifest(parsed);
  const meshes = await Promise.all(manifest.mesh_files.map(async (rel) =>
    parseMesh(await fetchBytes(`${base}/${rel}`), rel)));
  const atlases = await Promise.all(manifest.frame_files.map(async (rel) =>
    decodePng(await fetchBytes(`${base}/${rel}`))));
  const wantW = manifest.atlas_cols * manifest.texture_resolution;
  const wantH = manifest.atlas_rows * manifest.texture_resolution;
  for (const [i, atlas] of atlases.entries()) {
    if (atlas.width !== wantW || atlas.height !== wantH) {
      throw new ManifestError(
        `${manifest.frame_files[i]}: atlas is ${atlas.width}x${atlas.height}, ` +
        `expected ${wantW}x${wantH}`);
    }
  }
  return { manifest, meshes, atlases };
}
