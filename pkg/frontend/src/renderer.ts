/**
 * WebGL point-sprite renderer: one round sprite per surfel, sized by the
 * surfel's radius under the current camera, colored from the stream, with
 * highlighted objects tinted so the operator can see the override at work.
 */

import type { Camera } from "./camera.js";
import type { ViewerFrame } from "./session.js";

/** What the session/steering logic needs from a renderer; tests stub this. */
export interface RendererLike {
  uploadFrame(frame: ViewerFrame): void;
  pointCount: number;
}

const VERTEX_SHADER = `
attribute vec3 a_position;
attribute vec4 a_color;      // rgb + highlight flag in alpha
attribute float a_radius;
uniform mat4 u_clip;
uniform float u_pointScale;  // pixels per (radius / depth)
uniform float u_minPointPx;
varying vec4 v_color;
void main() {
  gl_Position = u_clip * vec4(a_position, 1.0);
  float sizePx = u_pointScale * a_radius / max(gl_Position.w, 1e-4);
  gl_PointSize = max(sizePx, u_minPointPx);
  v_color = a_color;
}
`;

const FRAGMENT_SHADER = `
precision mediump float;
uniform vec3 u_highlightTint;
varying vec4 v_color;
void main() {
  vec2 d = gl_PointCoord - vec2(0.5);
  if (dot(d, d) > 0.25) discard;
  vec3 rgb = mix(v_color.rgb, u_highlightTint, v_color.a * 0.45);
  gl_FragColor = vec4(rgb, 1.0);
}
`;

function compile(gl: WebGLRenderingContext, type: number, source: string): WebGLShader {
  const shader = gl.createShader(type)!;
  gl.shaderSource(shader, source);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
    throw new Error(`shader compile failed: ${gl.getShaderInfoLog(shader)}`);
  }
  return shader;
}

export class PointRenderer implements RendererLike {
  pointCount = 0;

  private readonly gl: WebGLRenderingContext;
  private readonly program: WebGLProgram;
  private readonly positionBuffer: WebGLBuffer;
  private readonly colorBuffer: WebGLBuffer;
  private readonly radiusBuffer: WebGLBuffer;
  private readonly attribs: { position: number; color: number; radius: number };
  private readonly uniforms: {
    clip: WebGLUniformLocation;
    pointScale: WebGLUniformLocation;
    minPointPx: WebGLUniformLocation;
    highlightTint: WebGLUniformLocation;
  };

  constructor(gl: WebGLRenderingContext) {
    this.gl = gl;
    const program = gl.createProgram()!;
    gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, VERTEX_SHADER));
    gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, FRAGMENT_SHADER));
    gl.linkProgram(program);
    if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
      throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
    }
    this.program = program;
    this.positionBuffer = gl.createBuffer()!;
    this.colorBuffer = gl.createBuffer()!;
    this.radiusBuffer = gl.createBuffer()!;
    this.attribs = {
      position: gl.getAttribLocation(program, "a_position"),
      color: gl.getAttribLocation(program, "a_color"),
      radius: gl.getAttribLocation(program, "a_radius"),
    };
    this.uniforms = {
      clip: gl.getUniformLocation(program, "u_clip")!,
      pointScale: gl.getUniformLocation(program, "u_pointScale")!,
      minPointPx: gl.getUniformLocation(program, "u_minPointPx")!,
      highlightTint: gl.getUniformLocation(program, "u_highlightTint")!,
    };
    gl.enable(gl.DEPTH_TEST);
    gl.clearColor(0.07, 0.08, 0.1, 1.0);
  }

  /** Repack the frame's packets into GPU buffers (positions, colors, radii). */
  uploadFrame(frame: ViewerFrame): void {
    const n = frame.pointCount;
    const positions = new Float32Array(n * 3);
    const colors = new Uint8Array(n * 4);
    const radii = new Float32Array(n);
    let at = 0;
    for (const packet of frame.packets) {
      positions.set(packet.positions, at * 3);
      radii.set(packet.radii, at);
      const highlight = packet.highlighted ? 255 : 0;
      for (let i = 0; i < packet.surfelCount; i++) {
        colors[(at + i) * 4] = packet.colors[i * 3];
        colors[(at + i) * 4 + 1] = packet.colors[i * 3 + 1];
        colors[(at + i) * 4 + 2] = packet.colors[i * 3 + 2];
        colors[(at + i) * 4 + 3] = highlight;
      }
      at += packet.surfelCount;
    }
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.DYNAMIC_DRAW);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colorBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, colors, gl.DYNAMIC_DRAW);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.radiusBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, radii, gl.DYNAMIC_DRAW);
    this.pointCount = n;
  }

  draw(camera: Camera): void {
    const gl = this.gl;
    gl.viewport(0, 0, gl.drawingBufferWidth, gl.drawingBufferHeight);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (this.pointCount === 0) return;

    gl.useProgram(this.program);
    gl.uniformMatrix4fv(this.uniforms.clip, false, camera.clipMatrix());
    gl.uniform1f(this.uniforms.pointScale, camera.pointScale);
    gl.uniform1f(this.uniforms.minPointPx, 1.5);
    gl.uniform3f(this.uniforms.highlightTint, 1.0, 0.85, 0.2);

    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.enableVertexAttribArray(this.attribs.position);
    gl.vertexAttribPointer(this.attribs.position, 3, gl.FLOAT, false, 0, 0);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.colorBuffer);
    gl.enableVertexAttribArray(this.attribs.color);
    gl.vertexAttribPointer(this.attribs.color, 4, gl.UNSIGNED_BYTE, true, 0, 0);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.radiusBuffer);
    gl.enableVertexAttribArray(this.attribs.radius);
    gl.vertexAttribPointer(this.attribs.radius, 1, gl.FLOAT, false, 0, 0);

    gl.drawArrays(gl.POINTS, 0, this.pointCount);
  }
}
