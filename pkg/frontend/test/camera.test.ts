import { describe, expect, it } from "vitest";
import { OrbitCamera, lookAtRotation, DEFAULT_LIMITS } from "../src/camera.js";

describe("lookAtRotation", () => {
  it("is orthonormal with z pointing at the target", () => {
    const eye = [0.4, -0.7, 0.3];
    const r = lookAtRotation(eye, [0, 0, 0]);
    // columns
    const cols = [0, 1, 2].map((c) => [r[c], r[3 + c], r[6 + c]]);
    for (let i = 0; i < 3; i++) {
      const n = Math.hypot(...cols[i]);
      expect(n).toBeCloseTo(1, 10);
      for (let j = i + 1; j < 3; j++) {
        const dot = cols[i][0] * cols[j][0] + cols[i][1] * cols[j][1]
          + cols[i][2] * cols[j][2];
        expect(Math.abs(dot)).toBeLessThan(1e-10);
      }
    }
    const len = Math.hypot(...eye);
    expect(cols[2][0]).toBeCloseTo(-eye[0] / len, 10);
    expect(cols[2][1]).toBeCloseTo(-eye[1] / len, 10);
    expect(cols[2][2]).toBeCloseTo(-eye[2] / len, 10);
  });
});

describe("OrbitCamera", () => {
  it("returns to the identical pose after a full azimuth revolution", () => {
    const cam = new OrbitCamera(0.3, 0.2, 1.0);
    const before = cam.pose(64, 64);
    for (let i = 0; i < 8; i++) {
      cam.orbit(Math.PI / 4, 0);
    }
    const after = cam.pose(64, 64);
    for (let i = 0; i < 9; i++) {
      expect(after.rotation[i]).toBeCloseTo(before.rotation[i], 10);
    }
    for (let i = 0; i < 3; i++) {
      expect(after.translation[i]).toBeCloseTo(before.translation[i], 10);
    }
  });

  it("clamps zoom to the distance limits", () => {
    const cam = new OrbitCamera(0, 0, 1.0);
    cam.zoom(1e-6);
    expect(cam.distance).toBe(DEFAULT_LIMITS.minDistance);
    cam.zoom(1e9);
    expect(cam.distance).toBe(DEFAULT_LIMITS.maxDistance);
    cam.zoom(-2); // invalid factors are ignored
    expect(cam.distance).toBe(DEFAULT_LIMITS.maxDistance);
  });

  it("clamps elevation so the pole is never crossed", () => {
    const cam = new OrbitCamera(0, 0, 1.0);
    cam.orbit(0, 100);
    expect(cam.elevation).toBe(DEFAULT_LIMITS.maxElevation);
    cam.orbit(0, -200);
    expect(cam.elevation).toBe(DEFAULT_LIMITS.minElevation);
  });

  it("keeps the eye at the requested distance from the target", () => {
    const cam = new OrbitCamera(1.1, -0.4, 0.8, [0.1, 0.2, 0.3]);
    const eye = cam.eye();
    const d = Math.hypot(
      eye[0] - 0.1, eye[1] - 0.2, eye[2] - 0.3);
    expect(d).toBeCloseTo(0.8, 12);
  });

  it("projects the orbit target to the image center", () => {
    const cam = new OrbitCamera(0.7, 0.3, 1.2, [0.05, -0.1, 0.2]);
    const pose = cam.pose(128, 96);
    const r = pose.rotation;
    const p = cam.target.map((x, i) => x - pose.translation[i]);
    const cz = p[0] * r[2] + p[1] * r[5] + p[2] * r[8];
    const cx = p[0] * r[0] + p[1] * r[3] + p[2] * r[6];
    const cy = p[0] * r[1] + p[1] * r[4] + p[2] * r[7];
    expect((pose.fx * cx) / cz + pose.cx).toBeCloseTo(64, 8);
    expect((pose.fy * cy) / cz + pose.cy).toBeCloseTo(48, 8);
  });
});
