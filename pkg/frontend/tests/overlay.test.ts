import { describe, expect, it } from "vitest";

import {
  formatTheta,
  minPairIndex,
  projectPolyline,
  sparklinePoints,
} from "../src/overlay.js";

const vp = { scale: 2, padX: 0, padY: 0 };

describe("projectPolyline", () => {
  it("projects open polylines point by point", () => {
    const flat = projectPolyline(
      [
        [0, 0],
        [3, 1],
      ],
      false,
      vp,
    );
    expect(Array.from(flat)).toEqual([1, 1, 7, 3]);
  });

  it("repeats the first point to close a closed curve", () => {
    const flat = projectPolyline(
      [
        [0, 0],
        [2, 0],
        [2, 2],
      ],
      true,
      vp,
    );
    expect(flat.length).toBe(8);
    expect(flat[6]).toBe(flat[0]);
    expect(flat[7]).toBe(flat[1]);
  });

  it("ignores the theta coordinate of lifted points", () => {
    const flat = projectPolyline([[1, 1, 2.5]], false, vp);
    expect(Array.from(flat)).toEqual([3, 3]);
  });

  it("does not duplicate a single-point closed curve", () => {
    expect(projectPolyline([[0, 0]], true, vp).length).toBe(2);
  });
});

describe("sparklinePoints", () => {
  it("spans the padded box with the minimum at the bottom", () => {
    const pts = sparklinePoints([0, 10], 100, 50, 2);
    expect(Array.from(pts)).toEqual([2, 48, 98, 2]);
  });

  it("draws a flat series at mid height", () => {
    const pts = sparklinePoints([5, 5, 5], 100, 50, 2);
    expect(pts[1]).toBeCloseTo(25, 12);
    expect(pts[3]).toBeCloseTo(25, 12);
    expect(pts[5]).toBeCloseTo(25, 12);
    expect(pts[0]).toBe(2);
    expect(pts[2]).toBeCloseTo(50, 12);
    expect(pts[4]).toBeCloseTo(98, 12);
  });

  it("centers a single sample", () => {
    const pts = sparklinePoints([3], 100, 50, 2);
    expect(Array.from(pts)).toEqual([50, 25]);
  });

  it("returns an empty array for an empty series", () => {
    expect(sparklinePoints([], 100, 50).length).toBe(0);
  });
});

describe("minPairIndex", () => {
  const pair = (distance: number | null) => ({
    source_theta: 0,
    target_theta: 0,
    distance,
  });

  it("finds the smallest reachable distance", () => {
    expect(minPairIndex([pair(4), pair(2), pair(9), pair(3)])).toBe(1);
  });

  it("skips unreached pairs", () => {
    expect(minPairIndex([pair(null), pair(7), pair(null), pair(5)])).toBe(3);
  });

  it("breaks ties toward the lower index", () => {
    expect(minPairIndex([pair(2), pair(2), pair(2)])).toBe(0);
  });

  it("returns -1 when nothing is reachable", () => {
    expect(minPairIndex([pair(null), pair(null)])).toBe(-1);
    expect(minPairIndex([])).toBe(-1);
  });
});

describe("formatTheta", () => {
  it("renders radians as whole degrees", () => {
    expect(formatTheta(0)).toBe("0°");
    expect(formatTheta(Math.PI / 2)).toBe("90°");
    expect(formatTheta(Math.PI)).toBe("180°");
  });
});
