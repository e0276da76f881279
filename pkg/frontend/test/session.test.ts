import { describe, expect, it } from "vitest";
import { ViewerSession } from "../src/session.js";
import type { AssetManifest } from "../src/manifest.js";

function manifest(): AssetManifest {
  return {
    version: 1,
    n_layers: 3,
    n_frames: 4,
    texture_resolution: 16,
    atlas_rows: 2,
    atlas_cols: 2,
    s_values: [0.5, 0.6, 0.7],
    center: [0, 0, 0],
    background: [0, 0, 0],
    frame_rate: 10,
    mesh_files: ["a", "b", "c"],
    frame_files: ["f1", "f2", "f3", "f4"],
  };
}

describe("ViewerSession", () => {
  it("starts at frame 1 with all layers visible", () => {
    const s = new ViewerSession(manifest());
    expect(s.frame).toBe(1);
    expect(s.layerMask()).toEqual([true, true, true]);
    expect(s.playing).toBe(false);
  });

  it("clamps frame selection to the valid range", () => {
    const s = new ViewerSession(manifest());
    s.setFrame(3);
    expect(s.frame).toBe(3);
    s.setFrame(99);
    expect(s.frame).toBe(4);
    s.setFrame(-5);
    expect(s.frame).toBe(1);
    s.setFrame(2.6);
    expect(s.frame).toBe(3);
  });

  it("bumps the render stamp only on visible state changes", () => {
    const s = new ViewerSession(manifest());
    const t0 = s.renderStamp;
    s.setFrame(1); // no-op
    expect(s.renderStamp).toBe(t0);
    s.setFrame(2);
    expect(s.renderStamp).toBe(t0 + 1);
    s.setLayerVisible(0, true); // already visible
    expect(s.renderStamp).toBe(t0 + 1);
    s.toggleLayer(0);
    expect(s.renderStamp).toBe(t0 + 2);
  });

  it("toggling a layer twice restores the original mask", () => {
    const s = new ViewerSession(manifest());
    const before = s.layerMask();
    s.toggleLayer(1);
    expect(s.layerMask()).toEqual([true, false, true]);
    s.toggleLayer(1);
    expect(s.layerMask()).toEqual(before);
  });

  it("rejects out-of-range layer indices", () => {
    const s = new ViewerSession(manifest());
    expect(() => s.toggleLayer(3)).toThrow(RangeError);
    expect(() => s.setLayerVisible(-1, true)).toThrow(RangeError);
  });

  it("advances playback at the manifest frame rate and loops", () => {
    const s = new ViewerSession(manifest());
    s.togglePlayback();
    expect(s.playing).toBe(true);
    s.tick(0.05); // half a period at 10 fps
    expect(s.frame).toBe(1);
    s.tick(0.05);
    expect(s.frame).toBe(2);
    s.tick(0.35); // three full periods with slack for float accumulation
    expect(s.frame).toBe(1); // 3 -> 4 -> 1
    s.togglePlayback();
    s.tick(10);
    expect(s.frame).toBe(1); // paused
  });

  it("orbit and zoom mark the view dirty", () => {
    const s = new ViewerSession(manifest());
    const t0 = s.renderStamp;
    s.orbit(0.1, 0);
    s.zoom(1.1);
    expect(s.renderStamp).toBe(t0 + 2);
  });
});
