/**
 * Display <-> image coordinate transforms.
 *
 * Image coordinates follow the engine convention: (x, y) with the origin
 * at the CENTER of the top-left pixel, x rightward, y downward.  A pixel
 * with integer coordinate j therefore occupies the display interval
 * [padX + j*scale, padX + (j+1)*scale) and its center sits at
 * padX + (j + 0.5)*scale.  Both directions of the mapping are exact
 * (pure affine), so a click converted to image coordinates and back
 * lands on the same display pixel.
 */

export interface Viewport {
  /** display pixels per image pixel */
  scale: number;
  /** left edge of image pixel 0 in display coordinates */
  padX: number;
  /** top edge of image pixel 0 in display coordinates */
  padY: number;
}

/** Fit an image into a canvas, centered, preserving aspect ratio. */
export function fitViewport(
  imageWidth: number,
  imageHeight: number,
  canvasWidth: number,
  canvasHeight: number,
): Viewport {
  if (imageWidth <= 0 || imageHeight <= 0) {
    throw new Error("image dimensions must be positive");
  }
  const scale = Math.min(canvasWidth / imageWidth, canvasHeight / imageHeight);
  return {
    scale,
    padX: (canvasWidth - imageWidth * scale) / 2,
    padY: (canvasHeight - imageHeight * scale) / 2,
  };
}

/** Image point (pixel-center origin) to display point. */
export function imageToDisplay(
  vp: Viewport,
  x: number,
  y: number,
): [number, number] {
  return [vp.padX + (x + 0.5) * vp.scale, vp.padY + (y + 0.5) * vp.scale];
}

/** Display point to image point (pixel-center origin). */
export function displayToImage(
  vp: Viewport,
  dx: number,
  dy: number,
): [number, number] {
  return [(dx - vp.padX) / vp.scale - 0.5, (dy - vp.padY) / vp.scale - 0.5];
}

/** Clamp an image point into the valid node range of a w x h grid. */
export function clampToGrid(
  x: number,
  y: number,
  width: number,
  height: number,
): [number, number] {
  const cx = Math.min(Math.max(x, 0), width - 1);
  const cy = Math.min(Math.max(y, 0), height - 1);
  return [cx, cy];
}

/** True when the image point lies inside the node range of the grid. */
export function insideGrid(
  x: number,
  y: number,
  width: number,
  height: number,
): boolean {
  return x >= 0 && y >= 0 && x <= width - 1 && y <= height - 1;
}
