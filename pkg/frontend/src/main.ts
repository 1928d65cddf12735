/**
 * Browser entry point: wires the DOM to the service client.
 *
 * Rendering is split over four stacked canvases (image, heatmap, curves,
 * handles) so each layer can be toggled and redrawn independently.  All
 * interaction state lives in the pure reducer from state.ts; all
 * geometry conversion goes through coords.ts, so the only code here is
 * event plumbing and canvas drawing.
 */

import { ApiError, Client, DistancePreview, StepResult, TubePair } from "./api.js";
import { heatmapRgba } from "./colormap.js";
import { clampToGrid, displayToImage, fitViewport, imageToDisplay, insideGrid, Viewport } from "./coords.js";
import { EvolutionRunner } from "./evolution.js";
import { formatTheta, projectPolyline, sparklinePoints } from "./overlay.js";
import { ClickMode, initialUIState, Layers, pointCoords, UIState, update } from "./state.js";

const STAGE_SIZE = 640;
const HANDLE_RADIUS = 12; // display px within which a shift-drag grabs a point

const LIFTED_KINDS = new Set(["elastica", "elastica-tube"]);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function numberInput(id: string): number {
  const raw = el<HTMLInputElement>(id).value.trim();
  const value = Number(raw);
  if (raw === "" || !Number.isFinite(value)) {
    throw new Error(`enter a number for ${id.replace(/^.*-/, "")}`);
  }
  return value;
}

interface SessionHandle {
  id: string;
  width: number;
  height: number;
}

interface Curve {
  points: number[][];
  closed: boolean;
  color: string;
}

class App {
  private readonly client: Client;
  private state: UIState = initialUIState();
  private session: SessionHandle | null = null;
  private viewport: Viewport | null = null;
  private bitmap: ImageBitmap | null = null;
  private preview: DistancePreview | null = null;
  private previewLifted = false;
  private curves: Map<string, Curve> = new Map();
  private runner: EvolutionRunner | null = null;
  private autoRunning = false;
  private dragging: "seed" | "target" | null = null;

  private readonly canvases: Record<keyof Layers, HTMLCanvasElement> = {
    image: el<HTMLCanvasElement>("canvas-image"),
    heatmap: el<HTMLCanvasElement>("canvas-heatmap"),
    curves: el<HTMLCanvasElement>("canvas-curves"),
    handles: el<HTMLCanvasElement>("canvas-handles"),
  };

  constructor() {
    const api = new URLSearchParams(window.location.search).get("api") ?? "";
    this.client = new Client(api);
    for (const canvas of Object.values(this.canvases)) {
      canvas.width = STAGE_SIZE;
      canvas.height = STAGE_SIZE;
    }
    this.bindEvents();
    this.refreshControls();
    this.status("upload an image to start a session");
  }

  // -- status & busy gate --------------------------------------------------

  private status(message: string, isError = false): void {
    const node = el<HTMLDivElement>("status");
    node.textContent = message;
    node.classList.toggle("error", isError);
  }

  private dispatch(action: Parameters<typeof update>[1]): void {
    this.state = update(this.state, action);
    this.refreshControls();
  }

  /** Run one request under the single-in-flight gate. */
  private async withBusy<T>(label: string, work: () => Promise<T>): Promise<T | null> {
    if (this.state.busy) {
      this.status("another request is in flight; wait for it to finish", true);
      return null;
    }
    this.dispatch({ type: "begin-request" });
    try {
      const out = await work();
      return out;
    } catch (err) {
      if (err instanceof ApiError) {
        this.status(`${label}: ${err.message} (HTTP ${err.status})`, true);
      } else {
        this.status(`${label}: ${(err as Error).message}`, true);
      }
      return null;
    } finally {
      this.dispatch({ type: "end-request" });
    }
  }

  // -- wiring ---------------------------------------------------------------

  private bindEvents(): void {
    el<HTMLInputElement>("file-input").addEventListener("change", (ev) => {
      const input = ev.target as HTMLInputElement;
      const file = input.files?.[0];
      if (file) void this.upload(file);
    });

    for (const mode of ["seed", "target", "vertex"] as ClickMode[]) {
      el<HTMLInputElement>(`mode-${mode}`).addEventListener("change", () => {
        this.dispatch({ type: "set-mode", mode });
      });
    }
    el<HTMLButtonElement>("btn-clear-points").addEventListener("click", () => {
      this.dispatch({ type: "clear-points" });
      this.drawHandles();
    });
    el<HTMLButtonElement>("btn-clear-vertices").addEventListener("click", () => {
      this.dispatch({ type: "clear-vertices" });
      this.drawHandles();
    });

    for (const layer of ["image", "heatmap", "curves", "handles"] as (keyof Layers)[]) {
      el<HTMLInputElement>(`layer-${layer}`).addEventListener("change", () => {
        this.dispatch({ type: "toggle-layer", layer });
        this.applyLayerVisibility();
      });
    }

    el<HTMLSelectElement>("metric-kind").addEventListener("change", () => {
      this.refreshControls();
    });
    el<HTMLButtonElement>("btn-apply-metric").addEventListener("click", () => {
      void this.applyMetric();
    });
    el<HTMLSelectElement>("stop-mode").addEventListener("change", () => {
      this.refreshControls();
    });
    el<HTMLButtonElement>("btn-distance").addEventListener("click", () => {
      void this.computeDistance();
    });
    el<HTMLButtonElement>("btn-path").addEventListener("click", () => {
      void this.tracePath();
    });
    el<HTMLButtonElement>("btn-tube").addEventListener("click", () => {
      void this.traceTubePath();
    });

    el<HTMLButtonElement>("btn-evo-start").addEventListener("click", () => {
      void this.startEvolution();
    });
    el<HTMLButtonElement>("btn-evo-step").addEventListener("click", () => {
      void this.stepEvolution();
    });
    el<HTMLButtonElement>("btn-evo-auto").addEventListener("click", () => {
      void this.autoEvolution();
    });
    el<HTMLButtonElement>("btn-evo-stop").addEventListener("click", () => {
      this.runner?.stop();
      this.status("stopping after the current step");
    });

    const stage = el<HTMLDivElement>("stage");
    stage.addEventListener("pointerdown", (ev) => this.onPointerDown(ev));
    stage.addEventListener("pointermove", (ev) => this.onPointerMove(ev));
    stage.addEventListener("pointerup", (ev) => this.onPointerUp(ev));
  }

  private refreshControls(): void {
    const busy = this.state.busy;
    const haveSession = this.session !== null;
    const kind = el<HTMLSelectElement>("metric-kind").value;
    for (const id of [
      "btn-apply-metric",
      "btn-distance",
      "btn-path",
      "btn-tube",
      "btn-evo-start",
      "btn-evo-step",
      "btn-evo-auto",
    ]) {
      el<HTMLButtonElement>(id).disabled = busy || !haveSession || this.autoRunning;
    }
    el<HTMLButtonElement>("btn-evo-stop").disabled = !this.autoRunning;
    el<HTMLDivElement>("lifted-params").style.display = LIFTED_KINDS.has(kind)
      ? ""
      : "none";
    const stopMode = el<HTMLSelectElement>("stop-mode").value;
    el<HTMLInputElement>("stop-cap").style.display =
      stopMode === "distance_cap" ? "" : "none";
  }

  private applyLayerVisibility(): void {
    for (const name of Object.keys(this.canvases) as (keyof Layers)[]) {
      this.canvases[name].style.visibility = this.state.layers[name]
        ? "visible"
        : "hidden";
    }
  }

  // -- pointer handling -----------------------------------------------------

  private stageCoords(ev: PointerEvent): [number, number] {
    const rect = el<HTMLDivElement>("stage").getBoundingClientRect();
    return [ev.clientX - rect.left, ev.clientY - rect.top];
  }

  private handleAt(dx: number, dy: number): "seed" | "target" | null {
    if (!this.viewport) return null;
    for (const which of ["seed", "target"] as const) {
      const point = this.state[which];
      if (!point) continue;
      const [px, py] = imageToDisplay(this.viewport, point.x, point.y);
      if (Math.hypot(px - dx, py - dy) <= HANDLE_RADIUS) return which;
    }
    return null;
  }

  private onPointerDown(ev: PointerEvent): void {
    if (!this.session || !this.viewport) return;
    const [dx, dy] = this.stageCoords(ev);
    if (ev.shiftKey) {
      const grabbed = this.handleAt(dx, dy);
      if (grabbed) {
        this.dragging = grabbed;
        el<HTMLDivElement>("stage").setPointerCapture(ev.pointerId);
        ev.preventDefault();
      }
      return;
    }
    const [ix, iy] = displayToImage(this.viewport, dx, dy);
    if (!insideGrid(ix, iy, this.session.width, this.session.height)) return;
    const [cx, cy] = clampToGrid(ix, iy, this.session.width, this.session.height);
    this.dispatch({ type: "place", x: cx, y: cy });
    this.drawHandles();
    this.updatePointReadout();
  }

  private onPointerMove(ev: PointerEvent): void {
    if (!this.dragging || !this.viewport) return;
    const point = this.state[this.dragging];
    if (!point) return;
    const [dx, dy] = this.stageCoords(ev);
    const [px, py] = imageToDisplay(this.viewport, point.x, point.y);
    // y grows downward in both display and image space, so atan2 carries over
    const theta = Math.atan2(dy - py, dx - px);
    this.dispatch({ type: "set-theta", which: this.dragging, theta });
    this.drawHandles();
    this.updatePointReadout();
  }

  private onPointerUp(ev: PointerEvent): void {
    if (this.dragging) {
      el<HTMLDivElement>("stage").releasePointerCapture(ev.pointerId);
      this.dragging = null;
    }
  }

  private updatePointReadout(): void {
    const fmt = (p: { x: number; y: number; theta: number | null } | null): string => {
      if (!p) return "—";
      const base = `(${p.x.toFixed(1)}, ${p.y.toFixed(1)})`;
      return p.theta === null ? base : `${base} θ=${formatTheta(p.theta)}`;
    };
    el<HTMLSpanElement>("readout-seed").textContent = fmt(this.state.seed);
    el<HTMLSpanElement>("readout-target").textContent = fmt(this.state.target);
    el<HTMLSpanElement>("readout-vertices").textContent = String(
      this.state.vertices.length,
    );
  }

  // -- session --------------------------------------------------------------

  private async upload(file: File): Promise<void> {
    const created = await this.withBusy("upload", () =>
      this.client.createSession(file, file.name),
    );
    if (!created) return;
    this.session = created;
    this.viewport = fitViewport(created.width, created.height, STAGE_SIZE, STAGE_SIZE);
    this.preview = null;
    this.curves.clear();
    this.runner = null;
    this.state = initialUIState();
    try {
      this.bitmap = await createImageBitmap(file);
    } catch {
      this.bitmap = null; // non-browser-decodable upload (e.g. PGM); keep going
    }
    el<HTMLSpanElement>("session-info").textContent =
      `${created.width}×${created.height} (${created.id.slice(0, 8)})`;
    this.redrawAll();
    this.refreshControls();
    this.updatePointReadout();
    this.status("session ready — choose a metric, then click to place points");
  }

  // -- metric / distance / paths ---------------------------------------------

  private metricParams(kind: string): Record<string, unknown> {
    const params: Record<string, unknown> = {
      sigma: numberInput("param-sigma"),
      beta: numberInput("param-beta"),
    };
    if (LIFTED_KINDS.has(kind)) {
      params["lambda"] = numberInput("param-lambda");
      params["alpha"] = numberInput("param-alpha");
      params["n_theta"] = Math.round(numberInput("param-ntheta"));
    }
    return params;
  }

  private async applyMetric(): Promise<void> {
    if (!this.session) return;
    const id = this.session.id;
    const kind = el<HTMLSelectElement>("metric-kind").value;
    let params: Record<string, unknown>;
    try {
      params = this.metricParams(kind);
    } catch (err) {
      this.status((err as Error).message, true);
      return;
    }
    const result = await this.withBusy("metric", () =>
      this.client.setMetric(id, kind, params),
    );
    if (!result) return;
    // the previous distance map belongs to the old metric
    this.preview = null;
    this.curves.delete("path");
    this.curves.delete("tube");
    this.redrawAll();
    this.status(`metric ${kind} ready (max drift ratio ${result.pd_max.toFixed(4)})`);
  }

  private currentLifted(): boolean {
    return LIFTED_KINDS.has(el<HTMLSelectElement>("metric-kind").value);
  }

  private async computeDistance(): Promise<void> {
    if (!this.session) return;
    const seed = this.state.seed;
    if (!seed) {
      this.status("place a seed first (seed mode, click on the image)", true);
      return;
    }
    const id = this.session.id;
    const lifted = this.currentLifted();
    const stopMode = el<HTMLSelectElement>("stop-mode").value;
    let stop: { mode: "none" | "first_reached" | "distance_cap"; target?: number[]; max_distance?: number } | undefined;
    if (stopMode === "first_reached") {
      if (!this.state.target) {
        this.status("first-reached stopping needs a target point", true);
        return;
      }
      stop = { mode: "first_reached", target: pointCoords(this.state.target, lifted) };
    } else if (stopMode === "distance_cap") {
      let cap: number;
      try {
        cap = numberInput("stop-cap");
      } catch (err) {
        this.status((err as Error).message, true);
        return;
      }
      stop = { mode: "distance_cap", max_distance: cap };
    }
    const result = await this.withBusy("distance", () =>
      this.client.distance(id, pointCoords(seed, lifted), stop),
    );
    if (!result) return;
    this.preview = result.preview;
    this.previewLifted = result.lifted;
    this.drawHeatmap();
    const { min, max, reached_fraction } = result.stats;
    el<HTMLSpanElement>("distance-stats").textContent =
      `min ${min === null ? "—" : min.toFixed(2)}, ` +
      `max ${max === null ? "—" : max.toFixed(2)}, ` +
      `reached ${(reached_fraction * 100).toFixed(1)}%`;
    this.status("distance map ready — place a target and trace");
  }

  private async tracePath(): Promise<void> {
    if (!this.session) return;
    const target = this.state.target;
    if (!target) {
      this.status("place a target first (target mode, click on the image)", true);
      return;
    }
    const id = this.session.id;
    const lifted = this.previewLifted;
    const result = await this.withBusy("path", () =>
      this.client.path(id, pointCoords(target, lifted)),
    );
    if (!result) return;
    this.curves.set("path", { points: result.points, closed: false, color: "#e63c32" });
    this.drawCurves();
    this.status(`path traced (${result.points.length} samples)`);
  }

  private async traceTubePath(): Promise<void> {
    if (!this.session) return;
    const { seed, target } = this.state;
    if (!seed || !target) {
      this.status("tube tracing needs both a seed and a target", true);
      return;
    }
    const id = this.session.id;
    const result = await this.withBusy("tube-path", () =>
      this.client.tubePath(id, [seed.x, seed.y], [target.x, target.y]),
    );
    if (!result) return;
    this.renderPairTable(result.pairs, result.best);
    this.curves.set("tube", { points: result.points, closed: false, color: "#3c78e6" });
    this.drawCurves();
    this.status("tube path traced over the best orientation pair");
  }

  private renderPairTable(pairs: TubePair[], best: number): void {
    const body = el<HTMLTableSectionElement>("tube-rows");
    body.textContent = "";
    pairs.forEach((pair, i) => {
      const row = document.createElement("tr");
      if (i === best) row.classList.add("best");
      const label = document.createElement("td");
      label.textContent = `${formatTheta(pair.source_theta)} → ${formatTheta(pair.target_theta)}`;
      const value = document.createElement("td");
      value.textContent = pair.distance === null ? "unreached" : pair.distance.toFixed(3);
      row.append(label, value);
      body.append(row);
    });
  }

  // -- evolution --------------------------------------------------------------

  private async startEvolution(): Promise<void> {
    if (!this.session) return;
    if (this.state.vertices.length < 3) {
      this.status("place at least three vertices first (vertex mode)", true);
      return;
    }
    const id = this.session.id;
    let r: number;
    let beta: number;
    try {
      r = numberInput("evo-r");
      beta = numberInput("evo-beta");
    } catch (err) {
      this.status((err as Error).message, true);
      return;
    }
    const alphaRaw = el<HTMLInputElement>("evo-alpha").value.trim();
    const kind = el<HTMLSelectElement>("evo-kind").value as
      | "chan_vese"
      | "balloon_inflate"
      | "balloon_deflate";
    const spec = {
      vertices: this.state.vertices.map(([x, y]) => [x, y]),
      r,
      beta,
      kind,
      ...(alphaRaw === "" ? {} : { alpha: Number(alphaRaw) }),
    };
    const result = await this.withBusy("evolution", () =>
      this.client.startEvolution(id, spec),
    );
    if (!result) return;
    this.curves.set("evolution", {
      points: result.curve.points,
      closed: result.curve.closed,
      color: "#28b45a",
    });
    this.drawCurves();
    this.runner = new EvolutionRunner(() => this.guardedStep());
    el<HTMLSpanElement>("evo-readout").textContent = `k=${result.k}, tube r=${result.tube_radius.toFixed(1)}`;
    this.drawSparkline();
    this.status("evolution initialized — step it or run to convergence");
  }

  /** One service step wrapped in the busy gate; rejects on failure. */
  private async guardedStep(): Promise<StepResult> {
    if (!this.session) throw new Error("no session");
    const id = this.session.id;
    const result = await this.withBusy("evolution step", () =>
      this.client.stepEvolution(id),
    );
    if (!result) throw new Error("step failed");
    this.applyStep(result);
    return result;
  }

  private applyStep(result: StepResult): void {
    this.curves.set("evolution", {
      points: result.curve.points,
      closed: result.curve.closed,
      color: "#28b45a",
    });
    this.drawCurves();
    const converged =
      this.runner !== null && result.hausdorff_step < this.runner.convergedBelow;
    el<HTMLSpanElement>("evo-readout").textContent =
      `k=${result.k}, moved ${result.hausdorff_step.toFixed(3)}px, ` +
      `energy ${result.energy.toFixed(4)}, drift ${result.max_drift.toFixed(3)}` +
      (converged ? " — converged" : "");
    this.drawSparkline();
  }

  private async stepEvolution(): Promise<void> {
    if (!this.runner) {
      this.status("start an evolution first", true);
      return;
    }
    try {
      await this.runner.stepOnce();
    } catch {
      // withBusy already reported the failure on the status line
    }
  }

  private async autoEvolution(): Promise<void> {
    if (!this.runner) {
      this.status("start an evolution first", true);
      return;
    }
    this.autoRunning = true;
    this.refreshControls();
    this.status("running evolution…");
    try {
      const outcome = await this.runner.run();
      this.status(
        outcome === "converged"
          ? "evolution converged"
          : outcome === "stopped"
            ? "evolution stopped"
            : "evolution hit the step budget",
      );
    } catch {
      // step failure was already surfaced
    } finally {
      this.autoRunning = false;
      this.refreshControls();
    }
  }

  private drawSparkline(): void {
    const canvas = el<HTMLCanvasElement>("spark");
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const series = this.runner?.energies() ?? [];
    if (series.length === 0) return;
    const pts = sparklinePoints(series, canvas.width, canvas.height);
    ctx.strokeStyle = "#28b45a";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(pts[0]!, pts[1]!);
    for (let i = 1; i * 2 + 1 < pts.length; i++) ctx.lineTo(pts[i * 2]!, pts[i * 2 + 1]!);
    ctx.stroke();
  }

  // -- drawing ----------------------------------------------------------------

  private redrawAll(): void {
    this.drawImage();
    this.drawHeatmap();
    this.drawCurves();
    this.drawHandles();
    this.applyLayerVisibility();
  }

  private imageRect(): [number, number, number, number] | null {
    if (!this.session || !this.viewport) return null;
    const vp = this.viewport;
    return [
      vp.padX,
      vp.padY,
      this.session.width * vp.scale,
      this.session.height * vp.scale,
    ];
  }

  private drawImage(): void {
    const ctx = this.canvases.image.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, STAGE_SIZE, STAGE_SIZE);
    const rect = this.imageRect();
    if (!rect) return;
    const [x, y, w, h] = rect;
    if (this.bitmap) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(this.bitmap, x, y, w, h);
    } else {
      ctx.fillStyle = "#888";
      ctx.fillRect(x, y, w, h);
    }
  }

  private drawHeatmap(): void {
    const ctx = this.canvases.heatmap.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, STAGE_SIZE, STAGE_SIZE);
    if (!this.preview || !this.viewport) return;
    const rect = this.imageRect();
    if (!rect) return;
    const { width, height, cell, values } = this.preview;
    const rgba = heatmapRgba(values);
    const off = document.createElement("canvas");
    off.width = width;
    off.height = height;
    const offCtx = off.getContext("2d");
    if (!offCtx) return;
    offCtx.putImageData(new ImageData(rgba.data, width, height), 0, 0);
    // each preview cell covers `cell` image pixels; clip the padded edge
    ctx.save();
    ctx.beginPath();
    ctx.rect(...rect);
    ctx.clip();
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(
      off,
      this.viewport.padX,
      this.viewport.padY,
      width * cell * this.viewport.scale,
      height * cell * this.viewport.scale,
    );
    ctx.restore();
  }

  private drawCurves(): void {
    const ctx = this.canvases.curves.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, STAGE_SIZE, STAGE_SIZE);
    if (!this.viewport) return;
    for (const curve of this.curves.values()) {
      if (curve.points.length === 0) continue;
      const flat = projectPolyline(curve.points, curve.closed, this.viewport);
      ctx.strokeStyle = curve.color;
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(flat[0]!, flat[1]!);
      for (let i = 1; i * 2 + 1 < flat.length; i++) {
        ctx.lineTo(flat[i * 2]!, flat[i * 2 + 1]!);
      }
      ctx.stroke();
    }
  }

  private drawHandles(): void {
    const ctx = this.canvases.handles.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, STAGE_SIZE, STAGE_SIZE);
    if (!this.viewport) return;
    const vp = this.viewport;

    const marker = (
      x: number,
      y: number,
      theta: number | null,
      fill: string,
    ): void => {
      const [dx, dy] = imageToDisplay(vp, x, y);
      ctx.beginPath();
      ctx.arc(dx, dy, 5, 0, 2 * Math.PI);
      ctx.fillStyle = fill;
      ctx.fill();
      ctx.lineWidth = 1.5;
      ctx.strokeStyle = "#222";
      ctx.stroke();
      if (theta !== null) {
        const len = 22;
        const tx = dx + len * Math.cos(theta);
        const ty = dy + len * Math.sin(theta);
        ctx.beginPath();
        ctx.moveTo(dx, dy);
        ctx.lineTo(tx, ty);
        ctx.strokeStyle = fill;
        ctx.lineWidth = 2.5;
        ctx.stroke();
        // arrowhead
        const back = 6;
        for (const side of [0.5, -0.5]) {
          ctx.beginPath();
          ctx.moveTo(tx, ty);
          ctx.lineTo(
            tx - back * Math.cos(theta - side),
            ty - back * Math.sin(theta - side),
          );
          ctx.stroke();
        }
      }
    };

    if (this.state.seed) {
      marker(this.state.seed.x, this.state.seed.y, this.state.seed.theta, "#ffb300");
    }
    if (this.state.target) {
      marker(this.state.target.x, this.state.target.y, this.state.target.theta, "#7b1fa2");
    }
    this.state.vertices.forEach(([x, y], i) => {
      const [dx, dy] = imageToDisplay(vp, x, y);
      ctx.beginPath();
      ctx.arc(dx, dy, 4, 0, 2 * Math.PI);
      ctx.fillStyle = "#28b45a";
      ctx.fill();
      ctx.fillStyle = "#222";
      ctx.font = "10px sans-serif";
      ctx.fillText(String(i + 1), dx + 6, dy - 6);
    });
  }
}

window.addEventListener("DOMContentLoaded", () => {
  new App();
});
