/**
 * DOM overlay: live stats (mirroring the bench metrics), the gaze reticle
 * with the 10/30-degree band rings, and the stale/error banners.
 */

import type { Camera } from "./camera.js";
import type { ConnectionState, SessionStats } from "./session.js";

const BAND_RING_DEGREES = [10, 30];

export class Overlay {
  onRetry: (() => void) | null = null;

  private readonly stats: HTMLElement;
  private readonly banner: HTMLElement;
  private readonly retry: HTMLButtonElement;
  private readonly reticle: HTMLElement;
  private readonly rings: HTMLElement[];

  constructor(root: HTMLElement) {
    this.stats = root.querySelector("#stats")!;
    this.banner = root.querySelector("#banner")!;
    this.retry = root.querySelector("#retry")!;
    this.reticle = root.querySelector("#reticle")!;
    this.rings = BAND_RING_DEGREES.map(() => {
      const ring = document.createElement("div");
      ring.className = "ring";
      this.reticle.appendChild(ring);
      return ring;
    });
    this.retry.addEventListener("click", () => this.onRetry?.());
  }

  update(stats: SessionStats): void {
    const e2e = stats.endToEndMs === null ? "-" : stats.endToEndMs.toFixed(1);
    this.stats.textContent = [
      `state: ${stats.state}`,
      `points: ${stats.pointCount}`,
      `fps: ${stats.fps.toFixed(1)}`,
      `Mbps: ${stats.mbps.toFixed(2)}`,
      `end-to-end ms: ${e2e} (same-host clocks)`,
      `frames: ${stats.framesCompleted}`,
      `malformed: ${stats.malformedPackets}  resyncs: ${stats.resyncs}`,
      `gaze sent: ${stats.gazeSent}`,
    ].join("\n");
    this.setBanner(stats.state, stats.lastError);
  }

  /** Move the reticle and size the band rings for the current camera. */
  setPointer(xPx: number, yPx: number, camera: Camera): void {
    this.reticle.style.left = `${xPx}px`;
    this.reticle.style.top = `${yPx}px`;
    BAND_RING_DEGREES.forEach((deg, i) => {
      const r = camera.angleToPx(deg);
      const ring = this.rings[i];
      ring.style.width = `${2 * r}px`;
      ring.style.height = `${2 * r}px`;
      ring.style.marginLeft = `${-r}px`;
      ring.style.marginTop = `${-r}px`;
    });
  }

  private setBanner(state: ConnectionState, lastError: string | null): void {
    if (state === "open" || state === "connecting") {
      this.banner.hidden = true;
      return;
    }
    this.banner.hidden = false;
    this.banner.querySelector("#banner-text")!.textContent =
      state === "error"
        ? `connection failed${lastError ? `: ${lastError}` : ""}`
        : "stream ended - showing the last received frame";
  }
}
