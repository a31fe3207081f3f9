/** Typed client for the studio inference service (/v1 endpoints). */

export interface SoundEntry {
  id: string;
  name: string;
  duration: number;
  category: string | null;
}

export interface StylizeParams {
  soundIds: string[];
  gain: number;
  alpha: number;
  seed: number;
}

export interface StylizeResult {
  blob: Blob;
  appliedGain: number;
  appliedAlpha: number | null;
  modelVersion: string;
}

/** 4xx response naming the offending request field. */
export class FieldError extends Error {
  constructor(
    public readonly field: string,
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

/** 5xx or network failure; carries a request id for the error banner. */
export class ServerError extends Error {
  constructor(
    public readonly requestId: string,
    message: string,
  ) {
    super(message);
  }
}

let requestCounter = 0;

function nextRequestId(): string {
  requestCounter += 1;
  return `req-${requestCounter}`;
}

export class StudioClient {
  constructor(private readonly baseUrl: string = "") {}

  async health(): Promise<{ status: string; model_version: string; uptime: number }> {
    const res = await this.get("/v1/health");
    return res.json();
  }

  async listSounds(): Promise<SoundEntry[]> {
    const res = await this.get("/v1/sounds");
    return res.json();
  }

  async stylize(
    image: Blob,
    params: StylizeParams,
    signal?: AbortSignal,
  ): Promise<StylizeResult> {
    const form = new FormData();
    form.append("image", image, "image.png");
    for (const id of params.soundIds) form.append("sound_ids", id);
    form.append("gain", String(params.gain));
    form.append("alpha", String(params.alpha));
    form.append("seed", String(params.seed));

    const requestId = nextRequestId();
    let res: Response;
    try {
      res = await fetch(`${this.baseUrl}/v1/stylize`, {
        method: "POST",
        body: form,
        signal,
      });
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ServerError(requestId, `request failed: ${err}`);
    }
    if (!res.ok) {
      if (res.status >= 500) {
        throw new ServerError(requestId, `server error ${res.status}`);
      }
      const body = await res.json().catch(() => ({}));
      throw new FieldError(
        body.field ?? "request",
        res.status,
        body.error ?? `rejected with status ${res.status}`,
      );
    }
    const alphaHeader = res.headers.get("X-Applied-Alpha") ?? "";
    return {
      blob: await res.blob(),
      appliedGain: Number(res.headers.get("X-Applied-Gain") ?? params.gain),
      appliedAlpha: alphaHeader === "" ? null : Number(alphaHeader),
      modelVersion: res.headers.get("X-Model-Version") ?? "",
    };
  }

  private async get(path: string): Promise<Response> {
    const requestId = nextRequestId();
    let res: Response;
    try {
      res = await fetch(`${this.baseUrl}${path}`);
    } catch (err) {
      throw new ServerError(requestId, `request failed: ${err}`);
    }
    if (!res.ok) throw new ServerError(requestId, `server error ${res.status}`);
    return res;
  }
}
