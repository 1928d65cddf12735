/**
 * Typed client for the minimal-path service (all routes under /api/v1).
 *
 * The fetch implementation is injectable so tests can run against a fake
 * without any DOM or network.  All numeric payloads pass through
 * untouched: the client does no math, only transport.
 */

export type MetricKind =
  | "iso"
  | "riem-align"
  | "randers-align"
  | "elastica"
  | "elastica-tube";

export interface SessionCreated {
  id: string;
  width: number;
  height: number;
}

export interface SessionInfo {
  id: string;
  width: number;
  height: number;
  metric: string | null;
  has_distance: boolean;
  evolution_k: number | null;
}

export interface MetricResult {
  ok: boolean;
  pd_max: number;
}

export interface StopSpec {
  mode: "none" | "first_reached" | "distance_cap";
  target?: number[];
  max_distance?: number;
}

export interface DistancePreview {
  width: number;
  height: number;
  cell: number;
  values: Array<Array<number | null>>;
}

export interface DistanceResult {
  lifted: boolean;
  stats: {
    min: number | null;
    max: number | null;
    reached_fraction: number;
  };
  preview: DistancePreview;
}

export interface PathResult {
  points: number[][];
}

export interface TubePair {
  source_theta: number;
  target_theta: number;
  distance: number | null;
}

export interface TubePathResult {
  pairs: TubePair[];
  best: number;
  points: number[][];
}

export interface CurveJson {
  closed: boolean;
  points: number[][];
}

export interface EvolutionStart {
  k: number;
  tube_radius: number;
  curve: CurveJson;
}

export interface StepResult {
  k: number;
  curve: CurveJson;
  hausdorff_step: number;
  energy: number;
  max_drift: number;
}

export interface EvolutionSpec {
  vertices: number[][];
  r?: number;
  alpha?: number | null;
  beta?: number;
  kind?: "chan_vese" | "balloon_inflate" | "balloon_deflate";
}

/** Structural subset of fetch, so tests can inject a plain function. */
export interface FetchResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  arrayBuffer(): Promise<ArrayBuffer>;
}

export interface FetchInit {
  method?: string;
  headers?: Record<string, string>;
  body?: unknown;
}

export type FetchLike = (url: string, init?: FetchInit) => Promise<FetchResponseLike>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** Another request holds the session lock; retry shortly. */
  get busy(): boolean {
    return this.status === 423;
  }
}

function detailMessage(body: unknown, status: number): string {
  if (body && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === "string") return detail;
    if (detail && typeof detail === "object" && "message" in detail) {
      const msg = (detail as { message: unknown }).message;
      if (typeof msg === "string") return msg;
    }
    return JSON.stringify(detail);
  }
  return `request failed with status ${status}`;
}

async function raiseFor(response: FetchResponseLike): Promise<never> {
  let body: unknown = null;
  try {
    body = await response.json();
  } catch {
    // non-JSON error body; fall through to the generic message
  }
  throw new ApiError(response.status, detailMessage(body, response.status));
}

export class Client {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) =>
      globalThis.fetch(url, init as RequestInit),
  ) {}

  private async requestJson<T>(
    method: string,
    route: string,
    body?: unknown,
  ): Promise<T> {
    const init: FetchInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + route, init);
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as T;
  }

  async createSession(image: Blob, filename = "upload.png"): Promise<SessionCreated> {
    const form = new FormData();
    form.append("image", image, filename);
    const response = await this.fetchImpl(this.baseUrl + "/api/v1/sessions", {
      method: "POST",
      body: form,
    });
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as SessionCreated;
  }

  sessionInfo(id: string): Promise<SessionInfo> {
    return this.requestJson("GET", `/api/v1/sessions/${id}`);
  }

  async deleteSession(id: string): Promise<void> {
    await this.requestJson("DELETE", `/api/v1/sessions/${id}`);
  }

  setMetric(
    id: string,
    kind: MetricKind | string,
    params: Record<string, unknown> = {},
  ): Promise<MetricResult> {
    return this.requestJson("PUT", `/api/v1/sessions/${id}/metric`, { kind, params });
  }

  distance(id: string, seed: number[], stop?: StopSpec): Promise<DistanceResult> {
    const body: { seed: number[]; stop?: StopSpec } = { seed };
    if (stop) body.stop = stop;
    return this.requestJson("POST", `/api/v1/sessions/${id}/distance`, body);
  }

  async fullDistance(id: string): Promise<ParsedField> {
    const response = await this.fetchImpl(
      this.baseUrl + `/api/v1/sessions/${id}/distance/full`,
      { method: "GET" },
    );
    if (!response.ok) await raiseFor(response);
    return parseField(await response.arrayBuffer());
  }

  path(id: string, target: number[]): Promise<PathResult> {
    return this.requestJson("POST", `/api/v1/sessions/${id}/path`, { target });
  }

  tubePath(id: string, source: number[], target: number[]): Promise<TubePathResult> {
    return this.requestJson("POST", `/api/v1/sessions/${id}/tube-path`, {
      source,
      target,
    });
  }

  startEvolution(id: string, spec: EvolutionSpec): Promise<EvolutionStart> {
    return this.requestJson("POST", `/api/v1/sessions/${id}/evolution`, spec);
  }

  stepEvolution(id: string): Promise<StepResult> {
    return this.requestJson("POST", `/api/v1/sessions/${id}/evolution/step`);
  }
}

export interface ParsedField {
  kind: "scalar" | "vector" | "tensor";
  width: number;
  height: number;
  /** Orientation count for lifted scalar fields, null for planar ones. */
  nTheta: number | null;
  /** Raw little-endian float32 payload in C order (theta-major if lifted). */
  values: Float32Array;
}

/**
 * Parse a serialized field: one line of compact JSON
 * ({"w":..,"h":..(,"t":..),"kind":..}) followed by a raw little-endian
 * float32 payload.  Throws on malformed headers or payload size mismatch.
 */
export function parseField(buffer: ArrayBuffer): ParsedField {
  const bytes = new Uint8Array(buffer);
  const nl = bytes.indexOf(0x0a);
  if (nl < 0) throw new Error("field data is missing its header line");
  const header = JSON.parse(new TextDecoder().decode(bytes.subarray(0, nl))) as {
    w: number;
    h: number;
    t?: number;
    kind: string;
  };
  const { w, h, kind } = header;
  if (!Number.isInteger(w) || !Number.isInteger(h) || w <= 0 || h <= 0) {
    throw new Error("field header has invalid dimensions");
  }
  const nTheta = header.t ?? null;
  let count: number;
  if (kind === "scalar") count = w * h * (nTheta ?? 1);
  else if (kind === "vector") count = w * h * 2;
  else if (kind === "tensor") count = w * h * 3;
  else throw new Error(`unknown field kind ${JSON.stringify(kind)}`);
  const payload = bytes.subarray(nl + 1);
  if (payload.byteLength !== count * 4) {
    throw new Error(
      `field payload has ${payload.byteLength} bytes, header implies ${count * 4}`,
    );
  }
  // copy so the view is aligned and independent of the response buffer
  const raw = payload.slice();
  const values = new Float32Array(raw.buffer, 0, count);
  if (!isLittleEndianHost()) {
    const view = new DataView(raw.buffer);
    for (let i = 0; i < count; i++) values[i] = view.getFloat32(i * 4, true);
  }
  return { kind: kind as ParsedField["kind"], width: w, height: h, nTheta, values };
}

function isLittleEndianHost(): boolean {
  return new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;
}
