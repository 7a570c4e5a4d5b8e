/**
 * Canvas rendering with nearest-neighbor scaling so the cell structure stays
 * visible. RGBA composition is pure (testable without a DOM); the draw
 * functions blit through an offscreen canvas at native field resolution.
 */

import { GrayImage } from "./pgm.js";

export interface OverlayOptions {
  gridOverlay?: GrayImage | null;   // cell boundaries, drawn as purple lines
  exposure?: GrayImage | null;      // effective exposure in the red channel
  showGrid?: boolean;
  showExposure?: boolean;
}

/** Compose the RGBA buffer for one view. */
export function composeRGBA(image: GrayImage, opts: OverlayOptions = {}): Uint8ClampedArray {
  const n = image.width * image.height;
  const out = new Uint8ClampedArray(4 * n);
  const exposure = opts.showExposure ? opts.exposure : null;
  const grid = opts.showGrid ? opts.gridOverlay : null;
  for (let i = 0; i < n; i++) {
    const g = Math.max(0, Math.min(1, image.pixels[i]!));
    let r = g;
    let gg = g;
    let b = g;
    if (exposure && i < exposure.pixels.length) {
      r = Math.max(g, Math.min(1, exposure.pixels[i]!));
    }
    if (grid && i < grid.pixels.length && grid.pixels[i]! > 0.5) {
      r = 0.72;
      gg = 0.3;
      b = 0.85;
    }
    out[4 * i] = Math.round(r * 255);
    out[4 * i + 1] = Math.round(gg * 255);
    out[4 * i + 2] = Math.round(b * 255);
    out[4 * i + 3] = 255;
  }
  return out;
}

export function drawImageData(
  canvas: HTMLCanvasElement,
  image: GrayImage,
  opts: OverlayOptions = {},
): void {
  const rgba = composeRGBA(image, opts);
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const off = document.createElement("canvas");
  off.width = image.width;
  off.height = image.height;
  const offCtx = off.getContext("2d")!;
  const frame = offCtx.createImageData(image.width, image.height);
  frame.data.set(rgba);
  offCtx.putImageData(frame, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

/** Cross marker for the pending fovea target. */
export function drawClickMarker(canvas: HTMLCanvasElement, x: number, y: number): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.strokeStyle = "#ffd400";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(x - 8, y);
  ctx.lineTo(x + 8, y);
  ctx.moveTo(x, y - 8);
  ctx.lineTo(x, y + 8);
  ctx.stroke();
}
