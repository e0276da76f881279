/**
 * Layer-mesh binary format.
 *
 * Little-endian layout: magic "LMSH", u32 vertex count V, u32 index count
 * I, V*3 f32 positions, V*2 f32 UVs, I u32 indices, trailing u64 checksum
 * (CRC-32 of all preceding bytes, zero-extended).
 */

export interface LayerMesh {
  positions: Float32Array; // V*3
  uvs: Float32Array;       // V*2
  indices: Uint32Array;    // I (triangle list)
}

export class MeshFormatError extends Error {}

const MAGIC = 0x48534d4c; // "LMSH" read as little-endian u32

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function parseMesh(buffer: ArrayBuffer, name = "mesh"): LayerMesh {
  if (buffer.byteLength < 20) {
    throw new MeshFormatError(`${name}: not a layer mesh file`);
  }
  const view = new DataView(buffer);
  if (view.getUint32(0, true) !== MAGIC) {
    throw new MeshFormatError(`${name}: not a layer mesh file`);
  }
  const body = new Uint8Array(buffer, 0, buffer.byteLength - 8);
  const stored = view.getBigUint64(buffer.byteLength - 8, true);
  if (BigInt(crc32(body)) !== stored) {
    throw new MeshFormatError(`${name}: checksum mismatch (corrupt mesh)`);
  }
  const nv = view.getUint32(4, true);
  const ni = view.getUint32(8, true);
  const need = 12 + nv * 12 + nv * 8 + ni * 4;
  if (body.byteLength !== need) {
    throw new MeshFormatError(`${name}: truncated mesh payload`);
  }
  if (ni % 3 !== 0) {
    throw new MeshFormatError(`${name}: index count not a triangle multiple`);
  }
  // byte offsets are multiples of 4, safe for typed-array views
  let off = 12;
  const positions = new Float32Array(buffer.slice(off, off + nv * 12));
  off += nv * 12;
  const uvs = new Float32Array(buffer.slice(off, off + nv * 8));
  off += nv * 8;
  const indices = new Uint32Array(buffer.slice(off, off + ni * 4));
  for (let i = 0; i < indices.length; i++) {
    if (indices[i] >= nv) {
      throw new MeshFormatError(`${name}: face index out of range`);
    }
  }
  return { positions, uvs, indices };
}

/** Serialize a mesh back to the container layout (used by tests). */
export function encodeMesh(mesh: LayerMesh): ArrayBuffer {
  const nv = mesh.positions.length / 3;
  const ni = mesh.indices.length;
  const bodyLen = 12 + nv * 12 + nv * 8 + ni * 4;
  const buffer = new ArrayBuffer(bodyLen + 8);
  const view = new DataView(buffer);
  view.setUint32(0, MAGIC, true);
  view.setUint32(4, nv, true);
  view.setUint32(8, ni, true);
  new Float32Array(buffer, 12, nv * 3).set(mesh.positions);
  new Float32Array(buffer, 12 + nv * 12, nv * 2).set(mesh.uvs);
  new Uint32Array(buffer, 12 + nv * 20, ni).set(mesh.indices);
  const body = new Uint8Array(buffer, 0, bodyLen);
  view.setBigUint64(bodyLen, BigInt(crc32(body)), true);
  return buffer;
}
