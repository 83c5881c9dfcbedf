/** Typed fetch client for the edit service HTTP API. */

export interface HealthInfo {
  status: string;
  model_loaded: boolean;
}

export interface ModelInfo {
  image_size: number;
  T: number;
  codec_factor: number;
  vocab_size: number;
  text_dim: number;
  extra_channels: boolean;
  proxy_trained: boolean;
}

export interface EditRequestBody {
  image: string; // base64 PNG
  mask: string;
  sketch: string;
  prompt: string;
  seed: number;
  steps: number;
  latent_mask?: boolean;
}

export interface EditResponse {
  image: string; // base64 PNG
  pre_error: number | null;
  duration_ms: number;
}

export class ServiceHttpError extends Error {
  readonly status: number;
  readonly field?: string;

  constructor(status: number, message: string, field?: string) {
    super(message);
    this.name = "ServiceHttpError";
    this.status = status;
    this.field = field;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** The surface the editor needs; EditClient is the HTTP implementation. */
export interface EditApi {
  health(): Promise<HealthInfo>;
  modelInfo(): Promise<ModelInfo>;
  edit(body: EditRequestBody): Promise<EditResponse>;
  extractSketch(imageB64: string): Promise<string>;
}

export class EditClient implements EditApi {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn: FetchLike = (...args) => fetch(...args)) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: any = null;
    try {
      payload = await res.json();
    } catch {
      // non-JSON body falls through to the status check below
    }
    if (!res.ok) {
      const message =
        payload && typeof payload.error === "string"
          ? payload.error
          : `HTTP ${res.status}`;
      throw new ServiceHttpError(res.status, message, payload?.field);
    }
    return payload as T;
  }

  health(): Promise<HealthInfo> {
    return this.request("GET", "/api/health");
  }

  modelInfo(): Promise<ModelInfo> {
    return this.request("GET", "/api/model-info");
  }

  edit(body: EditRequestBody): Promise<EditResponse> {
    return this.request("POST", "/api/edit", body);
  }

  async extractSketch(imageB64: string): Promise<string> {
    const res = await this.request<{ sketch: string }>("POST", "/api/extract-sketch", {
      image: imageB64,
    });
    return res.sketch;
  }
}
