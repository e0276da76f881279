/**
 * WebGL2 renderer for layered-mesh assets.
 *
 * Each layer draws once per frame into its own color + linear-depth
 * target (meshes are uploaded once and never mutated); a fullscreen
 * resolve pass then sorts the per-pixel layer fragments by depth and
 * over-composites front to back. The resolve shader unrolls the sort for
 * at most MAX_LAYERS fragments, which bounds supported layer counts.
 *
 * Semantics are required to match the CPU renderer in raster.ts, which is
 * what the automated parity tests exercise; this path needs a browser.
 */

import type { Asset } from "./raster.js";
import type { CameraPose } from "./camera.js";
import { MAX_LAYERS } from "./manifest.js";

const NEAR = 0.01;
const FAR = 10.0;

const LAYER_VS = `#version 300 es
precision highp float;
in vec3 a_position;
in vec2 a_uv;
uniform mat3 u_rotT;       // camera-from-world rotation
uniform vec3 u_translation;
uniform vec4 u_intrinsics; // fx, fy, cx, cy
uniform vec2 u_viewport;
out vec2 v_uv;
out float v_depth;
void main() {
  vec3 c = u_rotT * (a_position - u_translation);
  float z = c.z;
  vec2 s = vec2(u_intrinsics.x * c.x / z + u_intrinsics.z,
                u_intrinsics.y * c.y / z + u_intrinsics.w);
  vec2 ndc = vec2(s.x / u_viewport.x * 2.0 - 1.0,
                  1.0 - s.y / u_viewport.y * 2.0);
  float zc = (z * (${FAR.toFixed(4)} + ${NEAR.toFixed(4)})
              - 2.0 * ${FAR.toFixed(4)} * ${NEAR.toFixed(4)})
             / (${FAR.toFixed(4)} - ${NEAR.toFixed(4)});
  gl_Position = vec4(ndc * z, zc, z);
  v_uv = a_uv;
  v_depth = z;
}`;

const LAYER_FS = `#version 300 es
precision highp float;
in vec2 v_uv;
in float v_depth;
uniform sampler2D u_atlas;
uniform vec4 u_tile; // u0, v0, extent u, extent v (normalized atlas coords)
uniform float u_texres;
layout(location = 0) out vec4 o_color;
layout(location = 1) out float o_depth;
void main() {
  // uv in [-1,1] maps linearly onto the tile; clamp to texel centers so
  // bilinear filtering never bleeds across tile boundaries
  vec2 frac = (v_uv + 1.0) * 0.5;
  float margin = 0.5 / u_texres;
  frac = clamp(frac, vec2(margin), vec2(1.0 - margin));
  // u indexes tile rows (atlas y), v indexes tile columns (atlas x)
  vec2 at = vec2(u_tile.x + frac.y * u_tile.z, u_tile.y + frac.x * u_tile.w);
  o_color = texture(u_atlas, at);
  o_depth = v_depth;
}`;

function resolveSource(nLayers: number): string {
  let body = "";
  for (let i = 0; i < nLayers; i++) {
    body += `
  { vec4 c = texture(u_color[${i}], v_frac);
    float d = texture(u_depth[${i}], v_frac).r;
    if (d > 0.0 && u_mask[${i}] > 0.5) { col[n] = c; dep[n] = d; n++; } }`;
  }
  return `#version 300 es
precision highp float;
in vec2 v_frac;
uniform sampler2D u_color[${nLayers}];
uniform sampler2D u_depth[${nLayers}];
uniform float u_mask[${nLayers}];
uniform vec3 u_background;
uniform float u_useBackground;
out vec4 o_color;
void main() {
  vec4 col[${nLayers}];
  float dep[${nLayers}];
  int n = 0;
  ${body}
  // insertion sort by depth, nearest first (n <= ${MAX_LAYERS})
  for (int i = 1; i < ${nLayers}; i++) {
    if (i >= n) { break; }
    vec4 c = col[i];
    float d = dep[i];
    int j = i;
    for (; j > 0 && dep[j - 1] > d; j--) {
      col[j] = col[j - 1];
      dep[j] = dep[j - 1];
    }
    col[j] = c;
    dep[j] = d;
  }
  vec3 rgb = vec3(0.0);
  float trans = 1.0;
  for (int i = 0; i < ${nLayers}; i++) {
    if (i >= n) { break; }
    rgb += col[i].rgb * col[i].a * trans;
    trans *= 1.0 - col[i].a;
  }
  float acc = 1.0 - trans;
  if (u_useBackground > 0.5) {
    rgb += trans * u_background;
  } else if (acc > 1e-9) {
    rgb /= acc;
  }
  o_color = vec4(clamp(rgb, 0.0, 1.0), acc);
}`;
}

const RESOLVE_VS = `#version 300 es
precision highp float;
out vec2 v_frac;
void main() {
  // fullscreen triangle
  vec2 p = vec2(float((gl_VertexID & 1) << 2) - 1.0,
                float((gl_VertexID & 2) << 1) - 1.0);
  v_frac = (p + 1.0) * 0.5;
  gl_Position = vec4(p, 0.0, 1.0);
}`;

function compile(gl: WebGL2RenderingContext, type: number, src: string): WebGLShader {
  const shader = gl.createShader(type);
  if (!shader) {
    throw new Error("shader allocation failed");
  }
  gl.shaderSource(shader, src);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
    throw new Error(`shader compile: ${gl.getShaderInfoLog(shader)}`);
  }
  return shader;
}

function link(gl: WebGL2RenderingContext, vs: string, fs: string): WebGLProgram {
  const program = gl.createProgram();
  if (!program) {
    throw new Error("program allocation failed");
  }
  gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, vs));
  gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, fs));
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
    throw new Error(`program link: ${gl.getProgramInfoLog(program)}`);
  }
  return program;
}

interface LayerTarget {
  framebuffer: WebGLFramebuffer;
  color: WebGLTexture;
  depth: WebGLTexture;
}

interface MeshBuffers {
  vao: WebGLVertexArrayObject;
  count: number;
}

export class LayerRenderer {
  private readonly gl: WebGL2RenderingContext;
  private readonly asset: Asset;
  private readonly layerProgram: WebGLProgram;
  private readonly resolveProgram: WebGLProgram;
  private readonly meshes: MeshBuffers[] = [];
  private readonly atlases: WebGLTexture[] = [];
  private targets: LayerTarget[] = [];
  private width = 0;
  private height = 0;

  constructor(gl: WebGL2RenderingContext, asset: Asset) {
    this.gl = gl;
    this.asset = asset;
    if (!gl.getExtension("EXT_color_buffer_float")) {
      throw new Error("EXT_color_buffer_float is required");
    }
    this.layerProgram = link(gl, LAYER_VS, LAYER_FS);
    this.resolveProgram = link(
      gl, RESOLVE_VS, resolveSource(asset.manifest.n_layers));
    for (const mesh of asset.meshes) {
      this.meshes.push(this.uploadMesh(mesh.positions, mesh.uvs, mesh.indices));
    }
    for (const atlas of asset.atlases) {
      this.atlases.push(this.uploadAtlas(atlas.width, atlas.height, atlas.data));
    }
  }

  private uploadMesh(
    positions: Float32Array, uvs: Float32Array, indices: Uint32Array,
  ): MeshBuffers {
    const gl = this.gl;
    const vao = gl.createVertexArray();
    if (!vao) {
      throw new Error("vao allocation failed");
    }
    gl.bindVertexArray(vao);
    const posLoc = gl.getAttribLocation(this.layerProgram, "a_position");
    const uvLoc = gl.getAttribLocation(this.layerProgram, "a_uv");
    const posBuf = gl.createBuffer();
    gl.bindBuffer(gl.ARRAY_BUFFER, posBuf);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.STATIC_DRAW);
    gl.enableVertexAttribArray(posLoc);
    gl.vertexAttribPointer(posLoc, 3, gl.FLOAT, false, 0, 0);
    const uvBuf = gl.createBuffer();
    gl.bindBuffer(gl.ARRAY_BUFFER, uvBuf);
    gl.bufferData(gl.ARRAY_BUFFER, uvs, gl.STATIC_DRAW);
    gl.enableVertexAttribArray(uvLoc);
    gl.vertexAttribPointer(uvLoc, 2, gl.FLOAT, false, 0, 0);
    const idxBuf = gl.createBuffer();
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, idxBuf);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, indices, gl.STATIC_DRAW);
    gl.bindVertexArray(null);
    return { vao, count: indices.length };
  }

  private uploadAtlas(width: number, height: number, data: Uint8Array): WebGLTexture {
    const gl = this.gl;
    const tex = gl.createTexture();
    if (!tex) {
      throw new Error("texture allocation failed");
    }
    gl.bindTexture(gl.TEXTURE_2D, tex);
    gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA8, width, height, 0,
      gl.RGBA, gl.UNSIGNED_BYTE, data);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.LINEAR);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
    return tex;
  }

  private makeTarget(width: number, height: number): LayerTarget {
    const gl = this.gl;
    const color = gl.createTexture()!;
    gl.bindTexture(gl.TEXTURE_2D, color);
    gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA8, width, height, 0,
      gl.RGBA, gl.UNSIGNED_BYTE, null);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.NEAREST);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.NEAREST);
    const depth = gl.createTexture()!;
    gl.bindTexture(gl.TEXTURE_2D, depth);
    gl.texImage2D(gl.TEXTURE_2D, 0, gl.R32F, width, height, 0,
      gl.RED, gl.FLOAT, null);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.NEAREST);
    gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.NEAREST);
    const zbuf = gl.createRenderbuffer()!;
    gl.bindRenderbuffer(gl.RENDERBUFFER, zbuf);
    gl.renderbufferStorage(gl.RENDERBUFFER, gl.DEPTH_COMPONENT24, width, height);
    const framebuffer = gl.createFramebuffer()!;
    gl.bindFramebuffer(gl.FRAMEBUFFER, framebuffer);
    gl.framebufferTexture2D(gl.FRAMEBUFFER, gl.COLOR_ATTACHMENT0,
      gl.TEXTURE_2D, color, 0);
    gl.framebufferTexture2D(gl.FRAMEBUFFER, gl.COLOR_ATTACHMENT1,
      gl.TEXTURE_2D, depth, 0);
    gl.framebufferRenderbuffer(gl.FRAMEBUFFER, gl.DEPTH_ATTACHMENT,
      gl.RENDERBUFFER, zbuf);
    gl.drawBuffers([gl.COLOR_ATTACHMENT0, gl.COLOR_ATTACHMENT1]);
    if (gl.checkFramebufferStatus(gl.FRAMEBUFFER) !== gl.FRAMEBUFFER_COMPLETE) {
      throw new Error("layer framebuffer incomplete");
    }
    return { framebuffer, color, depth };
  }

  private resize(width: number, height: number): void {
    if (width === this.width && height === this.height) {
      return;
    }
    this.width = width;
    this.height = height;
    this.targets = this.asset.meshes.map(() => this.makeTarget(width, height));
  }

  render(
    pose: CameraPose, frame: number, mask: boolean[],
    transparentBackground = false,
  ): void {
    const gl = this.gl;
    const { manifest } = this.asset;
    this.resize(pose.width, pose.height);
    const atlas = this.atlases[frame - 1];
    const r = pose.rotation;
    // column-major camera-from-world (transpose of world-from-camera)
    const rotT = new Float32Array([
      r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8],
    ]);
    gl.useProgram(this.layerProgram);
    gl.uniformMatrix3fv(
      gl.getUniformLocation(this.layerProgram, "u_rotT"), false, rotT);
    gl.uniform3fv(gl.getUniformLocation(this.layerProgram, "u_translation"),
      pose.translation);
    gl.uniform4f(gl.getUniformLocation(this.layerProgram, "u_intrinsics"),
      pose.fx, pose.fy, pose.cx, pose.cy);
    gl.uniform2f(gl.getUniformLocation(this.layerProgram, "u_viewport"),
      pose.width, pose.height);
    gl.uniform1f(gl.getUniformLocation(this.layerProgram, "u_texres"),
      manifest.texture_resolution);
    gl.uniform1i(gl.getUniformLocation(this.layerProgram, "u_atlas"), 0);
    gl.activeTexture(gl.TEXTURE0);
    gl.bindTexture(gl.TEXTURE_2D, atlas);
    gl.enable(gl.DEPTH_TEST);
    gl.disable(gl.BLEND);
    gl.viewport(0, 0, pose.width, pose.height);
    const tileU = 1.0 / manifest.atlas_cols;
    const tileV = 1.0 / manifest.atlas_rows;
    for (let li = 0; li < manifest.n_layers; li++) {
      const target = this.targets[li];
      gl.bindFramebuffer(gl.FRAMEBUFFER, target.framebuffer);
      gl.clearBufferfv(gl.COLOR, 0, [0, 0, 0, 0]);
      gl.clearBufferfv(gl.COLOR, 1, [0, 0, 0, 0]);
      gl.clear(gl.DEPTH_BUFFER_BIT);
      if (!mask[li]) {
        continue;
      }
      const col = li % manifest.atlas_cols;
      const row = Math.floor(li / manifest.atlas_cols);
      gl.uniform4f(gl.getUniformLocation(this.layerProgram, "u_tile"),
        col * tileU, row * tileV, tileU, tileV);
      gl.bindVertexArray(this.meshes[li].vao);
      gl.drawElements(gl.TRIANGLES, this.meshes[li].count, gl.UNSIGNED_INT, 0);
    }
    gl.bindVertexArray(null);
    // resolve to the default framebuffer
    gl.bindFramebuffer(gl.FRAMEBUFFER, null);
    gl.useProgram(this.resolveProgram);
    gl.disable(gl.DEPTH_TEST);
    const maskVals = new Float32Array(manifest.n_layers);
    for (let li = 0; li < manifest.n_layers; li++) {
      maskVals[li] = mask[li] ? 1 : 0;
      gl.activeTexture(gl.TEXTURE0 + li);
      gl.bindTexture(gl.TEXTURE_2D, this.targets[li].color);
      gl.activeTexture(gl.TEXTURE0 + manifest.n_layers + li);
      gl.bindTexture(gl.TEXTURE_2D, this.targets[li].depth);
    }
    const colorUnits = Array.from({ length: manifest.n_layers }, (_, i) => i);
    const depthUnits = colorUnits.map((i) => manifest.n_layers + i);
    gl.uniform1iv(gl.getUniformLocation(this.resolveProgram, "u_color"),
      colorUnits);
    gl.uniform1iv(gl.getUniformLocation(this.resolveProgram, "u_depth"),
      depthUnits);
    gl.uniform1fv(gl.getUniformLocation(this.resolveProgram, "u_mask"),
      maskVals);
    gl.uniform3fv(gl.getUniformLocation(this.resolveProgram, "u_background"),
      manifest.background);
    gl.uniform1f(gl.getUniformLocation(this.resolveProgram, "u_useBackground"),
      transparentBackground ? 0 : 1);
    gl.drawArrays(gl.TRIANGLES, 0, 3);
  }
}
