/** Typed client for the generator service (GET /model, POST /generate, …). */

export interface ModelInfo {
  d: number;
  s: number;
  /** Half-open [start, end) element ranges, one per injection stage. */
  partitions: [number, number][];
  latent_ranges: [number, number][];
}

export interface InterpolateRequest {
  from: number[];
  to: number[];
  steps: number;
}

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorFrom(res: Response): Promise<ApiError> {
  let detail = `request failed with status ${res.status}`;
  try {
    const body = (await res.json()) as { error?: string };
    if (body && typeof body.error === "string") detail = body.error;
  } catch {
    /* non-JSON body: keep the status message */
  }
  return new ApiError(detail, res.status);
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  async health(): Promise<boolean> {
    try {
      const res = await fetch(`${this.baseUrl}/healthz`);
      return res.ok;
    } catch {
      return false;
    }
  }

  async model(): Promise<ModelInfo> {
    const res = await fetch(`${this.baseUrl}/model`);
    if (!res.ok) throw await errorFrom(res);
    const info = (await res.json()) as ModelInfo;
    if (!Number.isInteger(info.d) || info.d <= 0 || !Array.isArray(info.partitions)) {
      throw new ApiError("malformed /model response", 200);
    }
    return info;
  }

  /** Render one latent vector; resolves to raw image bytes (PNG by default). */
  async generate(latent: number[], signal?: AbortSignal): Promise<Blob> {
    const res = await fetch(`${this.baseUrl}/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ latent }),
      signal,
    });
    if (!res.ok) throw await errorFrom(res);
    return res.blob();
  }

  /** Evenly spaced frames between two codes; base64 images, length = steps. */
  async interpolate(req: InterpolateRequest): Promise<string[]> {
    const res = await fetch(`${this.baseUrl}/interpolate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    if (!res.ok) throw await errorFrom(res);
    const frames = (await res.json()) as string[];
    if (!Array.isArray(frames) || frames.length !== req.steps) {
      throw new ApiError(
        `expected ${req.steps} frames, got ${Array.isArray(frames) ? frames.length : "non-array"}`,
        200,
      );
    }
    return frames;
  }
}
