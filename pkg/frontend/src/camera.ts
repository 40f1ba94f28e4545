/**
 * Render camera: fixed at the origin looking down +Z, matching the dataset
 * camera frame (x right, y down, z forward). The pointer steers the gaze by
 * unprojecting through this camera, so "where the cursor is" and "where the
 * gaze ray points" agree by construction.
 */

import type { Vec3 } from "./wire.js";

export class Camera {
  width: number;
  height: number;
  readonly fovYDeg: number;
  readonly near: number;
  readonly far: number;

  constructor(width: number, height: number, fovYDeg = 60, near = 0.05, far = 50) {
    this.width = width;
    this.height = height;
    this.fovYDeg = fovYDeg;
    this.near = near;
    this.far = far;
  }

  resize(width: number, height: number): void {
    this.width = width;
    this.height = height;
  }

  private get tanHalf(): number {
    return Math.tan((this.fovYDeg * Math.PI) / 360);
  }

  private get aspect(): number {
    return this.width / this.height;
  }

  /** Vertical focal length in pixels; converts angles to screen radii. */
  get focalPx(): number {
    return this.height / 2 / this.tanHalf;
  }

  /** Pixel radius of a cone of the given half-angle around the view axis. */
  angleToPx(degrees: number): number {
    return this.focalPx * Math.tan((degrees * Math.PI) / 180);
  }

  /** gl_PointSize = pointScale * radius / depth. */
  get pointScale(): number {
    return this.height / this.tanHalf;
  }

  /** Unit world ray through a canvas pixel (canvas y grows downward). */
  pointerToRay(xPx: number, yPx: number): Vec3 {
    const ndcX = (2 * xPx) / this.width - 1;
    const ndcY = 1 - (2 * yPx) / this.height;
    const x = ndcX * this.tanHalf * this.aspect;
    const y = -ndcY * this.tanHalf;
    const n = Math.sqrt(x * x + y * y + 1);
    return [x / n, y / n, 1 / n];
  }

  /**
   * Column-major clip matrix for the y-down, +Z-forward camera frame:
   * flips y into NDC-up and maps [near, far] onto the depth range.
   */
  clipMatrix(): Float32Array {
    const fy = 1 / this.tanHalf;
    const fx = fy / this.aspect;
    const { near: n, far: f } = this;
    // prettier-ignore
    return new Float32Array([
      fx, 0,   0,                    0,
      0,  -fy, 0,                    0,
      0,  0,   (f + n) / (f - n),    1,
      0,  0,   (-2 * f * n) / (f - n), 0,
    ]);
  }
}
