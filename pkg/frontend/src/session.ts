/**
 * Viewer session state: active frame, playback, and per-layer visibility.
 *
 * Pure state machine with no DOM or GL dependencies so the interaction
 * contract can be tested headlessly. Renderers consume the session state
 * each time `renderStamp` changes.
 */

import type { AssetManifest } from "./manifest.js";
import { OrbitCamera } from "./camera.js";

export class ViewerSession {
  readonly manifest: AssetManifest;
  readonly camera: OrbitCamera;
  private frameNo = 1;
  private visible: boolean[];
  playing = false;
  /** Monotonic counter bumped on every state change that alters the image. */
  renderStamp = 0;
  private playClock = 0;

  constructor(manifest: AssetManifest, camera?: OrbitCamera) {
    this.manifest = manifest;
    this.camera = camera ?? new OrbitCamera(Math.PI, 0.15, 1.0);
    this.visible = new Array<boolean>(manifest.n_layers).fill(true);
  }

  get frame(): number {
    return this.frameNo;
  }

  /** Select an animation frame; out-of-range requests clamp to [1, K]. */
  setFrame(frame: number): void {
    const f = Math.min(Math.max(Math.round(frame), 1), this.manifest.n_frames);
    if (f !== this.frameNo) {
      this.frameNo = f;
      this.renderStamp++;
    }
  }

  layerMask(): boolean[] {
    return [...this.visible];
  }

  toggleLayer(index: number): void {
    if (index < 0 || index >= this.visible.length) {
      throw new RangeError(`layer index ${index} out of range`);
    }
    this.visible[index] = !this.visible[index];
    this.renderStamp++;
  }

  setLayerVisible(index: number, on: boolean): void {
    if (index < 0 || index >= this.visible.length) {
      throw new RangeError(`layer index ${index} out of range`);
    }
    if (this.visible[index] !== on) {
      this.visible[index] = on;
      this.renderStamp++;
    }
  }

  togglePlayback(): void {
    this.playing = !this.playing;
    this.playClock = 0;
  }

  orbit(dAzimuth: number, dElevation: number): void {
    this.camera.orbit(dAzimuth, dElevation);
    this.renderStamp++;
  }

  zoom(factor: number): void {
    this.camera.zoom(factor);
    this.renderStamp++;
  }

  /** Advance playback by dt seconds; frames loop at the manifest rate. */
  tick(dt: number): void {
    if (!this.playing || this.manifest.n_frames < 2) {
      return;
    }
    this.playClock += dt;
    const period = 1.0 / this.manifest.frame_rate;
    while (this.playClock >= period) {
      this.playClock -= period;
      const next = this.frameNo >= this.manifest.n_frames ? 1 : this.frameNo + 1;
      this.frameNo = next;
      this.renderStamp++;
    }
  }
}
