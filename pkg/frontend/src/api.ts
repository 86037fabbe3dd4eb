/** Thin typed client for the labeling service; no other endpoints exist. */

import type {
  PendingItem,
  SessionSnapshot,
  SubmitCounts,
  Verdict,
} from './types';

export type FetchLike = (
  url: string,
  init?: {method?: string; headers?: Record<string, string>; body?: string},
) => Promise<{status: number; json(): Promise<unknown>}>;

/** Error carrying the service's {code, message} body. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

/** The full service surface; tests stub this. */
export interface LabelServiceApi {
  healthz(): Promise<{status: string}>;
  createSession(body: {
    dataset: string;
    seed?: number;
    plan?: Record<string, unknown>;
    train?: Record<string, unknown>;
  }): Promise<SessionSnapshot>;
  getStatus(sessionId: string): Promise<SessionSnapshot>;
  getPending(sessionId: string): Promise<PendingItem[]>;
  submitLabel(
    sessionId: string,
    index: number,
    label: Verdict,
  ): Promise<SubmitCounts>;
}

export class LabelServiceClient implements LabelServiceApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: {
    method?: string;
    body?: unknown;
  }): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: init?.method ?? 'GET',
      headers: {'content-type': 'application/json'},
      body: init?.body === undefined ? undefined : JSON.stringify(init.body),
    });
    const payload = (await resp.json()) as Record<string, unknown>;
    if (resp.status >= 400) {
      throw new ServiceError(
        resp.status,
        String(payload['code'] ?? 'error'),
        String(payload['message'] ?? `HTTP ${resp.status}`),
      );
    }
    return payload as T;
  }

  healthz(): Promise<{status: string}> {
    return this.request('/healthz');
  }

  createSession(body: {
    dataset: string;
    seed?: number;
    plan?: Record<string, unknown>;
    train?: Record<string, unknown>;
  }): Promise<SessionSnapshot> {
    return this.request('/sessions', {method: 'POST', body});
  }

  getStatus(sessionId: string): Promise<SessionSnapshot> {
    return this.request(`/sessions/${sessionId}`);
  }

  getPending(sessionId: string): Promise<PendingItem[]> {
    return this.request(`/sessions/${sessionId}/pending`);
  }

  submitLabel(
    sessionId: string,
    index: number,
    label: Verdict,
  ): Promise<SubmitCounts> {
    return this.request(`/sessions/${sessionId}/labels`, {
      method: 'POST',
      body: {labels: [{index, label}]},
    });
  }
}
