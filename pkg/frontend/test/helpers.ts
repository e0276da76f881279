/** Node-side fixture loading shared by the test files. */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { PNG } from "pngjs";
import { loadAsset } from "../src/assets.js";
import type { Asset, AtlasImage } from "../src/raster.js";
import type { CameraPose } from "../src/camera.js";

export const FIXTURES = join(__dirname, "fixtures");

export function readBytes(relative: string): ArrayBuffer {
  const buf = readFileSync(join(FIXTURES, relative));
  return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
}

export function decodePngSync(bytes: ArrayBuffer): AtlasImage {
  const png = PNG.sync.read(Buffer.from(bytes));
  return {
    width: png.width,
    height: png.height,
    data: new Uint8Array(png.data),
  };
}

export async function loadFixtureAsset(): Promise<Asset> {
  return loadAsset(
    join(FIXTURES, "asset"),
    async (bytes) => decodePngSync(bytes),
    async (url) => {
      const buf = readFileSync(url);
      return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
    },
  );
}

export interface ReferencePose extends CameraPose {
  name: string;
  frame: number;
}

export function loadPoses(): ReferencePose[] {
  return JSON.parse(
    readFileSync(join(FIXTURES, "poses.json"), "utf-8")) as ReferencePose[];
}

/** Flat RGBA bytes of a reference render produced by the exporter pipeline. */
export function referenceImage(name: string): Uint8Array {
  return decodePngSync(readBytes(`${name}.png`)).data;
}
