/**
 * Geometry helpers for canvas overlays: projecting engine polylines into
 * display space, sparkline scaling for the evolution history, and the
 * winning entry of the orientation-pair table.
 */

import { imageToDisplay, Viewport } from "./coords.js";

/**
 * Project a polyline of [x, y] or [x, y, theta] points into display
 * space.  Closed curves get the first point appended so the stroke
 * closes.  Returns a flat [dx0, dy0, dx1, dy1, ...] array.
 */
export function projectPolyline(
  points: ReadonlyArray<ReadonlyArray<number>>,
  closed: boolean,
  vp: Viewport,
): Float64Array {
  const n = points.length;
  const total = closed && n > 1 ? n + 1 : n;
  const out = new Float64Array(total * 2);
  for (let i = 0; i < total; i++) {
    const p = points[i % n]!;
    const [dx, dy] = imageToDisplay(vp, p[0]!, p[1]!);
    out[i * 2] = dx;
    out[i * 2 + 1] = dy;
  }
  return out;
}

/**
 * Scale a history series into a w x h box (display coordinates, y down,
 * larger values higher up).  Degenerate inputs (one sample or a flat
 * series) render as a horizontal mid-height line.
 */
export function sparklinePoints(
  series: ReadonlyArray<number>,
  width: number,
  height: number,
  pad = 2,
): Float64Array {
  const n = series.length;
  const out = new Float64Array(n * 2);
  if (n === 0) return out;
  let min = Infinity;
  let max = -Infinity;
  for (const v of series) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  const span = max - min;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  for (let i = 0; i < n; i++) {
    const tx = n > 1 ? i / (n - 1) : 0.5;
    const ty = span > 0 ? (series[i]! - min) / span : 0.5;
    out[i * 2] = pad + tx * innerW;
    out[i * 2 + 1] = pad + (1 - ty) * innerH;
  }
  return out;
}

export interface OrientationPair {
  source_theta: number;
  target_theta: number;
  distance: number | null;
}

/**
 * Index of the reachable pair with the smallest distance; ties go to the
 * lowest index (matching the service's selection); -1 when nothing is
 * reachable.
 */
export function minPairIndex(pairs: ReadonlyArray<OrientationPair>): number {
  let best = -1;
  let bestValue = Infinity;
  for (let i = 0; i < pairs.length; i++) {
    const d = pairs[i]!.distance;
    if (d !== null && d < bestValue) {
      bestValue = d;
      best = i;
    }
  }
  return best;
}

/** Format an orientation in radians as degrees for the pair table. */
export function formatTheta(theta: number): string {
  const deg = (theta * 180) / Math.PI;
  return `${deg.toFixed(0)}°`;
}
