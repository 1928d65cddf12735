/**
 * Color mapping for distance-field previews.
 *
 * The ramp is a table-interpolated perceptually uniform sequence
 * (dark purple through teal to yellow), applied after normalizing the
 * finite values of a field to [0, 1].  Unreached cells (null) become
 * fully transparent so the underlying image shows through.
 */

/** RGB stops, dark-to-bright, evenly spaced over t in [0, 1]. */
const STOPS: ReadonlyArray<readonly [number, number, number]> = [
  [68, 1, 84],
  [71, 44, 122],
  [59, 81, 139],
  [44, 113, 142],
  [33, 144, 141],
  [39, 173, 129],
  [92, 200, 99],
  [170, 220, 50],
  [253, 231, 37],
];

/** Interpolate the ramp at t in [0, 1] (clamped). */
export function rampColor(t: number): [number, number, number] {
  const clamped = Math.min(Math.max(t, 0), 1);
  const pos = clamped * (STOPS.length - 1);
  const lo = Math.min(Math.floor(pos), STOPS.length - 2);
  const frac = pos - lo;
  const a = STOPS[lo]!;
  const b = STOPS[lo + 1]!;
  return [
    Math.round(a[0] + (b[0] - a[0]) * frac),
    Math.round(a[1] + (b[1] - a[1]) * frac),
    Math.round(a[2] + (b[2] - a[2]) * frac),
  ];
}

export interface Rgba {
  width: number;
  height: number;
  /** RGBA bytes, row-major, length width * height * 4 */
  data: Uint8ClampedArray<ArrayBuffer>;
}

/**
 * Render a preview grid (rows of numbers or null for unreached) to RGBA.
 *
 * Normalization spans the finite values only; a constant field maps to
 * the middle of the ramp; an entirely unreached field is transparent.
 */
export function heatmapRgba(
  values: ReadonlyArray<ReadonlyArray<number | null>>,
  alpha = 190,
): Rgba {
  const height = values.length;
  const width = height > 0 ? values[0]!.length : 0;
  const data = new Uint8ClampedArray(width * height * 4);
  let min = Infinity;
  let max = -Infinity;
  for (const row of values) {
    for (const v of row) {
      if (v !== null && Number.isFinite(v)) {
        if (v < min) min = v;
        if (v > max) max = v;
      }
    }
  }
  const span = max - min;
  for (let i = 0; i < height; i++) {
    const row = values[i]!;
    for (let j = 0; j < width; j++) {
      const v = row[j] ?? null;
      const off = (i * width + j) * 4;
      if (v === null || !Number.isFinite(v)) {
        data[off + 3] = 0;
        continue;
      }
      const t = span > 0 ? (v - min) / span : 0.5;
      const [r, g, b] = rampColor(t);
      data[off] = r;
      data[off + 1] = g;
      data[off + 2] = b;
      data[off + 3] = alpha;
    }
  }
  return { width, height, data };
}
