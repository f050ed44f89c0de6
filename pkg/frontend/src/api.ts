import type {
  FeedbackLabel,
  FeedbackResponse,
  ProbeInfo,
  RankingPayload,
  SessionOpened,
  SessionReport,
} from "./types.js";

/** Service error with the machine-readable code preserved, so callers
 * can branch on `code` ("stale_ranking", "budget_exhausted", ...)
 * instead of parsing prose. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

export interface SessionOptions {
  eta?: number;
  margin?: number;
  max_rounds_per_probe?: number;
  window_k?: number;
  top_k_default?: number;
  seed?: number;
}

async function parseError(resp: Response): Promise<ApiError> {
  let code = `http_${resp.status}`;
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (typeof body?.error === "string") code = body.error;
    if (typeof body?.detail === "string") detail = body.detail;
    else if (body?.detail) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(resp.status, code, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  createSession(datasetId: string, options: SessionOptions = {}): Promise<SessionOpened> {
    return this.request("POST", "/sessions", { dataset_id: datasetId, ...options });
  }

  probe(sessionId: string): Promise<ProbeInfo> {
    return this.request("GET", `/sessions/${sessionId}/probe`);
  }

  ranking(sessionId: string, topK?: number): Promise<RankingPayload> {
    const q = topK === undefined ? "" : `?top_k=${topK}`;
    return this.request("GET", `/sessions/${sessionId}/ranking${q}`);
  }

  feedback(
    sessionId: string,
    probeId: string,
    itemId: string,
    label: FeedbackLabel,
    token: string,
    topK?: number,
  ): Promise<FeedbackResponse> {
    return this.request("POST", `/sessions/${sessionId}/feedback`, {
      probe_id: probeId,
      item_id: itemId,
      label,
      token,
      ...(topK === undefined ? {} : { top_k: topK }),
    });
  }

  advance(sessionId: string): Promise<ProbeInfo> {
    return this.request("POST", `/sessions/${sessionId}/advance`);
  }

  report(reportId: string): Promise<SessionReport> {
    return this.request("GET", `/reports/${reportId}`);
  }

  fileUrl(datasetId: string, path: string): string {
    return `${this.baseUrl}/files/${datasetId}/${path}`;
  }
}
