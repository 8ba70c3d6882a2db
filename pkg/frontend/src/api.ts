/** Thin typed client for the session API. All access goes through here. */

import type {
  ActionBody,
  CreateSessionRequest,
  SessionResult,
  TaskResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, text || response.statusText);
    }
    return text ? (JSON.parse(text) as T) : (undefined as T);
  }

  health(): Promise<{ ok: boolean }> {
    return this.request("GET", "/health");
  }

  uploadDataset(values: string[], gold?: Record<string, string>, name?: string) {
    return this.request<{ dataset_id: string; n_values: number }>(
      "POST", "/datasets", { values, gold, name });
  }

  createSession(req: CreateSessionRequest): Promise<{ session_id: string }> {
    return this.request("POST", "/sessions", req);
  }

  getTask(sessionId: string, slot = 0): Promise<TaskResponse> {
    return this.request("GET", `/sessions/${sessionId}/task?slot=${slot}`);
  }

  submitAction(sessionId: string, action: ActionBody): Promise<{ ok: boolean; next: TaskResponse }> {
    return this.request("POST", `/sessions/${sessionId}/actions`, action);
  }

  getResult(sessionId: string): Promise<SessionResult> {
    return this.request("GET", `/sessions/${sessionId}/result`);
  }

  getCalibration(sessionId: string): Promise<SessionResult> {
    return this.request("GET", `/sessions/${sessionId}/calibration`);
  }
}
