/**
 * Browser entry point: wires the socket session, the WebGL renderer, the
 * stats overlay, and pointer-as-gaze steering together. Serve the built
 * dist/ directory with `fovstream serve --viewer-dir frontend/dist` and open
 * the server's browser port.
 */

import { Camera } from "./camera.js";
import { Overlay } from "./overlay.js";
import { PointRenderer } from "./renderer.js";
import { ViewerSession } from "./session.js";

const canvas = document.getElementById("cloud") as HTMLCanvasElement;
const gl = canvas.getContext("webgl");
if (!gl) throw new Error("WebGL is not available");

const camera = new Camera(window.innerWidth, window.innerHeight);
const renderer = new PointRenderer(gl);
const overlay = new Overlay(document.body);

function resize(): void {
  canvas.width = window.innerWidth;
  canvas.height = window.innerHeight;
  camera.resize(canvas.width, canvas.height);
}
resize();
window.addEventListener("resize", resize);

const session = new ViewerSession({
  url: `ws://${location.host}/stream`,
  onFrame: (frame) => renderer.uploadFrame(frame),
});
overlay.onRetry = () => session.connect();
session.connect();

window.addEventListener("pointermove", (event) => {
  session.steer(camera.pointerToRay(event.clientX, event.clientY));
  overlay.setPointer(event.clientX, event.clientY, camera);
});

function loop(): void {
  session.tick();
  renderer.draw(camera);
  overlay.update(session.stats());
  requestAnimationFrame(loop);
}
requestAnimationFrame(loop);
