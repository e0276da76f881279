/**
 * Pinhole camera pose and an orbit controller around a fixed target.
 *
 * Conventions match the exporter pipeline: `rotation` is the row-major
 * world-from-camera matrix whose columns are the camera x/y/z axes, and a
 * world point projects via c = R^T (p - t), sx = fx*cx_c/z + cx.
 */

export interface CameraPose {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
  rotation: number[];    // 9 entries, row-major
  translation: number[]; // camera center, 3 entries
}

export interface OrbitLimits {
  minDistance: number;
  maxDistance: number;
  minElevation: number; // radians
  maxElevation: number;
}

export const DEFAULT_LIMITS: OrbitLimits = {
  minDistance: 0.4,
  maxDistance: 3.0,
  minElevation: -1.2,
  maxElevation: 1.2,
};

const UP = [0, 0, 1];

function cross(a: number[], b: number[]): number[] {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function normalize(v: number[]): number[] {
  const n = Math.hypot(v[0], v[1], v[2]);
  return [v[0] / n, v[1] / n, v[2] / n];
}

/** World-from-camera rotation for an eye looking at a target (z forward). */
export function lookAtRotation(eye: number[], target: number[]): number[] {
  const z = normalize([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]]);
  const x = normalize(cross(z, UP));
  const y = cross(z, x);
  // columns are x, y, z
  return [x[0], y[0], z[0], x[1], y[1], z[1], x[2], y[2], z[2]];
}

export class OrbitCamera {
  azimuth: number;
  elevation: number;
  distance: number;
  target: number[];
  readonly limits: OrbitLimits;

  constructor(
    azimuth = 0, elevation = 0, distance = 1.0,
    target: number[] = [0, 0, 0], limits: OrbitLimits = DEFAULT_LIMITS,
  ) {
    this.azimuth = azimuth;
    this.elevation = elevation;
    this.distance = distance;
    this.target = [...target];
    this.limits = limits;
    this.clamp();
  }

  private clamp(): void {
    this.distance = Math.min(
      Math.max(this.distance, this.limits.minDistance), this.limits.maxDistance);
    this.elevation = Math.min(
      Math.max(this.elevation, this.limits.minElevation), this.limits.maxElevation);
    // keep azimuth in (-pi, pi] so identical viewpoints compare equal
    this.azimuth = Math.atan2(Math.sin(this.azimuth), Math.cos(this.azimuth));
  }

  orbit(dAzimuth: number, dElevation: number): void {
    this.azimuth += dAzimuth;
    this.elevation += dElevation;
    this.clamp();
  }

  zoom(factor: number): void {
    if (!(factor > 0)) {
      return;
    }
    this.distance *= factor;
    this.clamp();
  }

  eye(): number[] {
    const ce = Math.cos(this.elevation);
    return [
      this.target[0] + this.distance * ce * Math.cos(this.azimuth),
      this.target[1] + this.distance * ce * Math.sin(this.azimuth),
      this.target[2] + this.distance * Math.sin(this.elevation),
    ];
  }

  /** Full pinhole pose at the given viewport size (~49 deg horizontal fov). */
  pose(width: number, height: number, focalScale = 1.1): CameraPose {
    const eye = this.eye();
    return {
      fx: focalScale * width,
      fy: focalScale * width,
      cx: width / 2,
      cy: height / 2,
      width,
      height,
      rotation: lookAtRotation(eye, this.target),
      translation: eye,
    };
  }
}
