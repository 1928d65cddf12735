import { describe, expect, it } from "vitest";

import {
  initialUIState,
  normalizeTheta,
  pointCoords,
  update,
} from "../src/state.js";

describe("initial state", () => {
  it("starts in seed mode with everything visible and nothing placed", () => {
    const s = initialUIState();
    expect(s.mode).toBe("seed");
    expect(s.seed).toBeNull();
    expect(s.target).toBeNull();
    expect(s.vertices).toEqual([]);
    expect(s.busy).toBe(false);
    expect(s.layers).toEqual({ image: true, heatmap: true, curves: true, handles: true });
  });
});

describe("placement", () => {
  it("places the seed in seed mode", () => {
    const s = update(initialUIState(), { type: "place", x: 3, y: 4 });
    expect(s.seed).toEqual({ x: 3, y: 4, theta: null });
    expect(s.target).toBeNull();
  });

  it("places the target in target mode", () => {
    let s = update(initialUIState(), { type: "set-mode", mode: "target" });
    s = update(s, { type: "place", x: 7, y: 8 });
    expect(s.target).toEqual({ x: 7, y: 8, theta: null });
    expect(s.seed).toBeNull();
  });

  it("appends vertices in vertex mode", () => {
    let s = update(initialUIState(), { type: "set-mode", mode: "vertex" });
    s = update(s, { type: "place", x: 1, y: 2 });
    s = update(s, { type: "place", x: 3, y: 4 });
    expect(s.vertices).toEqual([
      [1, 2],
      [3, 4],
    ]);
  });

  it("re-placing a point discards its previous orientation", () => {
    let s = update(initialUIState(), { type: "place", x: 1, y: 1 });
    s = update(s, { type: "set-theta", which: "seed", theta: 1.0 });
    s = update(s, { type: "place", x: 2, y: 2 });
    expect(s.seed).toEqual({ x: 2, y: 2, theta: null });
  });
});

describe("orientation", () => {
  it("sets and normalizes theta on the chosen point", () => {
    let s = update(initialUIState(), { type: "place", x: 1, y: 1 });
    s = update(s, { type: "set-theta", which: "seed", theta: -Math.PI / 2 });
    expect(s.seed?.theta).toBeCloseTo((3 * Math.PI) / 2, 12);
  });

  it("ignores set-theta for a point that was never placed", () => {
    const s0 = initialUIState();
    const s1 = update(s0, { type: "set-theta", which: "target", theta: 1 });
    expect(s1).toBe(s0);
  });

  it("wraps any angle into [0, 2*pi)", () => {
    expect(normalizeTheta(2 * Math.PI + 0.3)).toBeCloseTo(0.3, 12);
    expect(normalizeTheta(-0.25)).toBeCloseTo(2 * Math.PI - 0.25, 12);
    expect(normalizeTheta(0)).toBe(0);
  });
});

describe("clearing and layers", () => {
  it("clear-points removes seed and target but keeps vertices", () => {
    let s = update(initialUIState(), { type: "place", x: 1, y: 1 });
    s = update(s, { type: "set-mode", mode: "vertex" });
    s = update(s, { type: "place", x: 5, y: 5 });
    s = update(s, { type: "clear-points" });
    expect(s.seed).toBeNull();
    expect(s.target).toBeNull();
    expect(s.vertices).toEqual([[5, 5]]);
  });

  it("clear-vertices removes only vertices", () => {
    let s = update(initialUIState(), { type: "place", x: 1, y: 1 });
    s = update(s, { type: "set-mode", mode: "vertex" });
    s = update(s, { type: "place", x: 5, y: 5 });
    s = update(s, { type: "clear-vertices" });
    expect(s.vertices).toEqual([]);
    expect(s.seed).toEqual({ x: 1, y: 1, theta: null });
  });

  it("toggles exactly one layer at a time", () => {
    const s = update(initialUIState(), { type: "toggle-layer", layer: "heatmap" });
    expect(s.layers.heatmap).toBe(false);
    expect(s.layers.image).toBe(true);
    const s2 = update(s, { type: "toggle-layer", layer: "heatmap" });
    expect(s2.layers.heatmap).toBe(true);
  });
});

describe("single in-flight request gate", () => {
  it("begin-request marks busy and blocks a second begin", () => {
    const s0 = initialUIState();
    const s1 = update(s0, { type: "begin-request" });
    expect(s1.busy).toBe(true);
    const s2 = update(s1, { type: "begin-request" });
    expect(s2).toBe(s1); // identical state object: the send must be dropped
  });

  it("end-request reopens the gate", () => {
    let s = update(initialUIState(), { type: "begin-request" });
    s = update(s, { type: "end-request" });
    expect(s.busy).toBe(false);
    expect(update(s, { type: "begin-request" }).busy).toBe(true);
  });
});

describe("pointCoords", () => {
  it("serializes planar and lifted points for the service", () => {
    expect(pointCoords({ x: 3, y: 4, theta: null }, false)).toEqual([3, 4]);
    expect(pointCoords({ x: 3, y: 4, theta: null }, true)).toEqual([3, 4, 0]);
    expect(pointCoords({ x: 3, y: 4, theta: 1.25 }, true)).toEqual([3, 4, 1.25]);
    expect(pointCoords({ x: 3, y: 4, theta: 1.25 }, false)).toEqual([3, 4]);
  });
});
