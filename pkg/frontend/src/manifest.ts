/** Asset manifest schema and validation. */

export interface AssetManifest {
  version: number;
  n_layers: number;
  n_frames: number;
  texture_resolution: number;
  atlas_rows: number;
  atlas_cols: number;
  s_values: number[];
  center: number[];
  background: number[];
  frame_rate: number;
  mesh_files: string[];
  frame_files: string[];
}

export class ManifestError extends Error {}

export const SUPPORTED_VERSION = 1;
export const MAX_LAYERS = 16; // per-pixel sort budget in the resolve shader

function requireNumber(raw: Record<string, unknown>, key: string): number {
  const v = raw[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new ManifestError(`manifest field '${key}' missing or not a number`);
  }
  return v;
}

function requireStringArray(raw: Record<string, unknown>, key: string): string[] {
  const v = raw[key];
  if (!Array.isArray(v) || v.some((x) => typeof x !== "string")) {
    throw new ManifestError(`manifest field '${key}' missing or malformed`);
  }
  return v as string[];
}

function requireNumberArray(
  raw: Record<string, unknown>, key: string, length?: number,
): number[] {
  const v = raw[key];
  if (!Array.isArray(v) || v.some((x) => typeof x !== "number")) {
    throw new ManifestError(`manifest field '${key}' missing or malformed`);
  }
  if (length !== undefined && v.length !== length) {
    throw new ManifestError(`manifest field '${key}' must have ${length} entries`);
  }
  return v as number[];
}

export function validateManifest(data: unknown): AssetManifest {
  if (typeof data !== "object" || data === null) {
    throw new ManifestError("manifest is not an object");
  }
  const raw = data as Record<string, unknown>;
  const version = requireNumber(raw, "version");
  if (version !== SUPPORTED_VERSION) {
    throw new ManifestError(`unsupported asset version ${version}`);
  }
  const manifest: AssetManifest = {
    version,
    n_layers: requireNumber(raw, "n_layers"),
    n_frames: requireNumber(raw, "n_frames"),
    texture_resolution: requireNumber(raw, "texture_resolution"),
    atlas_rows: requireNumber(raw, "atlas_rows"),
    atlas_cols: requireNumber(raw, "atlas_cols"),
    s_values: requireNumberArray(raw, "s_values"),
    center: requireNumberArray(raw, "center", 3),
    background: requireNumberArray(raw, "background", 3),
    frame_rate: requireNumber(raw, "frame_rate"),
    mesh_files: requireStringArray(raw, "mesh_files"),
    frame_files: requireStringArray(raw, "frame_files"),
  };
  if (manifest.n_layers < 1 || manifest.n_layers > MAX_LAYERS) {
    throw new ManifestError(
      `layer count ${manifest.n_layers} outside 1..${MAX_LAYERS}`);
  }
  if (manifest.n_frames < 1) {
    throw new ManifestError("frame count must be >= 1");
  }
  if (manifest.mesh_files.length !== manifest.n_layers) {
    throw new ManifestError("mesh file list does not match layer count");
  }
  if (manifest.frame_files.length !== manifest.n_frames) {
    throw new ManifestError("frame file list does not match frame count");
  }
  if (manifest.s_values.length !== manifest.n_layers) {
    throw new ManifestError("s_values list does not match layer count");
  }
  if (manifest.atlas_rows * manifest.atlas_cols < manifest.n_layers) {
    throw new ManifestError("atlas grid too small for layer count");
  }
  return manifest;
}
