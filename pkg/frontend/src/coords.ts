/**
 * Canvas <-> field coordinate mapping.
 *
 * The views render the field with nearest-neighbor scaling and no letterbox,
 * so a click maps through a pure scale: canvas pixel (cx, cy) on a view of
 * size (vw, vh) showing a (fw, fh) field lands on hr-pixel
 * (floor(cx * fw / vw), floor(cy * fh / vh)).
 */

export interface FieldPoint {
  x: number;
  y: number;
}

export function canvasToField(
  cx: number,
  cy: number,
  viewWidth: number,
  viewHeight: number,
  fieldWidth: number,
  fieldHeight: number,
): FieldPoint {
  if (viewWidth <= 0 || viewHeight <= 0) throw new Error("empty view");
  const x = Math.floor((cx * fieldWidth) / viewWidth);
  const y = Math.floor((cy * fieldHeight) / viewHeight);
  return {
    x: Math.min(Math.max(x, 0), fieldWidth - 1),
    y: Math.min(Math.max(y, 0), fieldHeight - 1),
  };
}

export function fieldToCanvas(
  fx: number,
  fy: number,
  viewWidth: number,
  viewHeight: number,
  fieldWidth: number,
  fieldHeight: number,
): { x: number; y: number } {
  // center of the hr-pixel in canvas coordinates (for markers)
  return {
    x: ((fx + 0.5) * viewWidth) / fieldWidth,
    y: ((fy + 0.5) * viewHeight) / fieldHeight,
  };
}
