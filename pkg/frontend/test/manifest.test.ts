import { describe, expect, it } from "vitest";
import { validateManifest, ManifestError } from "../src/manifest.js";
import { readBytes } from "./helpers.js";

function fixtureManifest(): Record<string, unknown> {
  return JSON.parse(
    new TextDecoder().decode(readBytes("asset/manifest.json")),
  ) as Record<string, unknown>;
}

describe("validateManifest", () => {
  it("accepts the exporter fixture manifest", () => {
    const m = validateManifest(fixtureManifest());
    expect(m.n_layers).toBe(4);
    expect(m.n_frames).toBe(4);
    expect(m.mesh_files).toHaveLength(4);
    expect(m.atlas_rows * m.atlas_cols).toBeGreaterThanOrEqual(m.n_layers);
  });

  it("rejects non-objects", () => {
    expect(() => validateManifest(null)).toThrow(ManifestError);
    expect(() => validateManifest("manifest")).toThrow(ManifestError);
  });

  it("rejects a missing required field", () => {
    const raw = fixtureManifest();
    delete raw.texture_resolution;
    expect(() => validateManifest(raw)).toThrow(/texture_resolution/);
  });

  it("rejects unsupported versions", () => {
    const raw = fixtureManifest();
    raw.version = 2;
    expect(() => validateManifest(raw)).toThrow(/version/);
  });

  it("rejects list-length mismatches", () => {
    const raw = fixtureManifest();
    raw.mesh_files = (raw.mesh_files as string[]).slice(0, 2);
    expect(() => validateManifest(raw)).toThrow(/mesh file list/);
    const raw2 = fixtureManifest();
    raw2.s_values = [0.5];
    expect(() => validateManifest(raw2)).toThrow(/s_values/);
  });

  it("rejects an atlas grid too small for the layer count", () => {
    const raw = fixtureManifest();
    raw.atlas_rows = 1;
    raw.atlas_cols = 2;
    expect(() => validateManifest(raw)).toThrow(/atlas grid/);
  });

  it("rejects layer counts beyond the resolve budget", () => {
    const raw = fixtureManifest();
    raw.n_layers = 17;
    raw.s_values = new Array(17).fill(0.5);
    raw.mesh_files = new Array(17).fill("meshes/layer0000.bin");
    raw.atlas_rows = 5;
    raw.atlas_cols = 5;
    expect(() => validateManifest(raw)).toThrow(/outside 1\.\.16/);
  });
});
