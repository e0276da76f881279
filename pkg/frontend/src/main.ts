/**
 * Browser entry point: loads the asset directory named by the `asset`
 * query parameter (default "asset"), wires orbit/zoom/scrub/keyboard
 * input to a ViewerSession, and redraws via the WebGL renderer whenever
 * the session state changes.
 */

import { loadAsset } from "./assets.js";
import { ViewerSession } from "./session.js";
import { LayerRenderer } from "./webgl.js";
import type { AtlasImage } from "./raster.js";

async function decodePngBrowser(bytes: ArrayBuffer): Promise<AtlasImage> {
  const bitmap = await createImageBitmap(
    new Blob([bytes], { type: "image/png" }));
  const canvas = new OffscreenCanvas(bitmap.width, bitmap.height);
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("2d canvas unavailable for PNG decode");
  }
  ctx.drawImage(bitmap, 0, 0);
  const image = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  return {
    width: bitmap.width,
    height: bitmap.height,
    data: new Uint8Array(image.data.buffer),
  };
}

function statusLine(text: string): void {
  const el = document.getElementById("status");
  if (el) {
    el.textContent = text;
  }
}

async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("asset") ?? "asset";
  statusLine(`loading ${base}/ ...`);
  const asset = await loadAsset(base, decodePngBrowser);
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const gl = canvas.getContext("webgl2");
  if (!gl) {
    throw new Error("WebGL2 is not available");
  }
  const session = new ViewerSession(asset.manifest);
  const renderer = new LayerRenderer(gl, asset);
  const scrub = document.getElementById("scrub") as HTMLInputElement | null;
  if (scrub) {
    scrub.min = "1";
    scrub.max = String(asset.manifest.n_frames);
    scrub.value = "1";
    scrub.addEventListener("input", () => {
      session.setFrame(Number(scrub.value));
    });
  }

  let dragging = false;
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = true;
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (dragging) {
      session.orbit(-ev.movementX * 0.01, -ev.movementY * 0.01);
    }
  });
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    session.zoom(Math.exp(ev.deltaY * 0.001));
  }, { passive: false });
  window.addEventListener("keydown", (ev) => {
    if (ev.key === " ") {
      ev.preventDefault();
      session.togglePlayback();
    } else if (/^[1-9]$/.test(ev.key)) {
      const idx = Number(ev.key) - 1;
      if (idx < asset.manifest.n_layers) {
        session.toggleLayer(idx);
      }
    } else if (ev.key === "ArrowRight") {
      session.setFrame(session.frame + 1);
    } else if (ev.key === "ArrowLeft") {
      session.setFrame(session.frame - 1);
    }
  });

  let drawn = -1;
  let last = performance.now();
  function loop(now: number): void {
    session.tick((now - last) / 1000);
    last = now;
    if (session.renderStamp !== drawn) {
      drawn = session.renderStamp;
      const pose = session.camera.pose(canvas.width, canvas.height);
      renderer.render(pose, session.frame, session.layerMask());
      if (scrub) {
        scrub.value = String(session.frame);
      }
      statusLine(
        `frame ${session.frame}/${asset.manifest.n_frames}  ` +
        `layers ${session.layerMask().map((m) => (m ? "1" : "0")).join("")}`);
    }
    requestAnimationFrame(loop);
  }
  session.setFrame(1);
  session.orbit(0, 0); // force an initial draw
  requestAnimationFrame(loop);
}

start().catch((err) => {
  statusLine(String(err));
  console.error(err);
});
