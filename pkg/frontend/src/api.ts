/** Typed client for the registry's /v1 HTTP API.
 *
 * Every request goes through one helper that checks the path against the
 * documented endpoint list, so the portal cannot quietly grow a dependency
 * on an undocumented route. Tokens travel in a header, never in URLs.
 */

export interface AreaCell {
  cell: string;
  min_lat: number;
  min_lon: number;
  size_deg: number;
  positive_count: number;
}

export type StatusResponse =
  | { status: "not_listed" }
  | { status: "listed"; event_count: number; flagged: boolean };

export interface Question {
  id: string;
  text: string;
  index: number;
}

export interface TriageOutcome {
  recommendation: "test_advised" | "self_monitor";
  yes_count: number;
  rule_fired: string | null;
}

export interface BoundingBox {
  minLat: number;
  minLon: number;
  maxLat: number;
  maxLon: number;
}

/** The documented /v1 surface; requests must match one of these. */
export const DOCUMENTED_ENDPOINTS: ReadonlyArray<{ method: string; path: RegExp }> = [
  { method: "POST", path: /^\/v1\/tests$/ },
  { method: "POST", path: /^\/v1\/tests\/[^/]+\/positive$/ },
  { method: "GET", path: /^\/v1\/areas(\?.*)?$/ },
  { method: "POST", path: /^\/v1\/users$/ },
  { method: "GET", path: /^\/v1\/status$/ },
  { method: "GET", path: /^\/v1\/questionnaire\/schema$/ },
  { method: "POST", path: /^\/v1\/questionnaire$/ },
];

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

interface RequestOptions {
  token?: string;
  body?: unknown;
}

export class ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(method: string, path: string, options: RequestOptions = {}): Promise<T> {
    const documented = DOCUMENTED_ENDPOINTS.some(
      (e) => e.method === method && e.path.test(path),
    );
    if (!documented) {
      throw new Error(`undocumented endpoint: ${method} ${path}`);
    }
    const headers: Record<string, string> = {};
    if (options.body !== undefined) {
      headers["Content-Type"] = "application/json";
    }
    if (options.token !== undefined) {
      headers["X-Auth-Token"] = options.token;
    }
    const response = await fetch(this.baseUrl + path, {
      method,
      headers,
      body: options.body === undefined ? undefined : JSON.stringify(options.body),
    });
    const payload = await response.json();
    if (!response.ok) {
      const err = payload as { code?: string; message?: string };
      throw new ApiError(response.status, err.code ?? "error", err.message ?? "request failed");
    }
    return payload as T;
  }

  registerUser(number: string): Promise<{ token: string }> {
    return this.request("POST", "/v1/users", { body: { number } });
  }

  status(token: string): Promise<StatusResponse> {
    return this.request("GET", "/v1/status", { token });
  }

  areas(bbox?: BoundingBox): Promise<AreaCell[]> {
    if (bbox === undefined) {
      return this.request("GET", "/v1/areas");
    }
    const query = [bbox.minLat, bbox.minLon, bbox.maxLat, bbox.maxLon].join(",");
    return this.request("GET", `/v1/areas?bbox=${query}`);
  }

  questionnaireSchema(): Promise<{ questions: Question[] }> {
    return this.request("GET", "/v1/questionnaire/schema");
  }

  submitQuestionnaire(token: string, answers: Record<string, boolean>): Promise<TriageOutcome> {
    return this.request("POST", "/v1/questionnaire", { token, body: { answers } });
  }
}
