/**
 * Pure UI-state reducer.  The DOM layer dispatches actions; every
 * transition is a plain function from state to state so the interaction
 * rules (click modes, the single-in-flight-request gate, layer toggles)
 * are testable without a browser.
 */

export type ClickMode = "seed" | "target" | "vertex";

/** A placed point; theta is null until the user drags an orientation. */
export interface LiftedPoint {
  x: number;
  y: number;
  theta: number | null;
}

export interface Layers {
  image: boolean;
  heatmap: boolean;
  curves: boolean;
  handles: boolean;
}

export interface UIState {
  mode: ClickMode;
  seed: LiftedPoint | null;
  target: LiftedPoint | null;
  vertices: Array<[number, number]>;
  /** True while a request for this session is in flight; gates new sends. */
  busy: boolean;
  layers: Layers;
}

export function initialUIState(): UIState {
  return {
    mode: "seed",
    seed: null,
    target: null,
    vertices: [],
    busy: false,
    layers: { image: true, heatmap: true, curves: true, handles: true },
  };
}

export type Action =
  | { type: "set-mode"; mode: ClickMode }
  | { type: "place"; x: number; y: number }
  | { type: "set-theta"; which: "seed" | "target"; theta: number }
  | { type: "clear-points" }
  | { type: "clear-vertices" }
  | { type: "toggle-layer"; layer: keyof Layers }
  | { type: "begin-request" }
  | { type: "end-request" };

/** Wrap an angle into [0, 2*pi). */
export function normalizeTheta(theta: number): number {
  const tau = 2 * Math.PI;
  const t = theta % tau;
  return t < 0 ? t + tau : t;
}

export function update(state: UIState, action: Action): UIState {
  switch (action.type) {
    case "set-mode":
      return { ...state, mode: action.mode };
    case "place": {
      const point: LiftedPoint = { x: action.x, y: action.y, theta: null };
      if (state.mode === "seed") return { ...state, seed: point };
      if (state.mode === "target") return { ...state, target: point };
      return { ...state, vertices: [...state.vertices, [action.x, action.y]] };
    }
    case "set-theta": {
      const current = state[action.which];
      if (current === null) return state;
      const moved = { ...current, theta: normalizeTheta(action.theta) };
      return action.which === "seed"
        ? { ...state, seed: moved }
        : { ...state, target: moved };
    }
    case "clear-points":
      return { ...state, seed: null, target: null };
    case "clear-vertices":
      return { ...state, vertices: [] };
    case "toggle-layer":
      return {
        ...state,
        layers: { ...state.layers, [action.layer]: !state.layers[action.layer] },
      };
    case "begin-request":
      // the gate: a second send while one is in flight is a no-op
      return state.busy ? state : { ...state, busy: true };
    case "end-request":
      return { ...state, busy: false };
  }
}

/** Serialize a placed point for the service ([x, y] or [x, y, theta]). */
export function pointCoords(point: LiftedPoint, lifted: boolean): number[] {
  return lifted ? [point.x, point.y, point.theta ?? 0] : [point.x, point.y];
}
