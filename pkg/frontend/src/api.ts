import type {
  CatalogueDto,
  ModalityId,
  SessionLogDto,
  SessionResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`API ${status}: ${detail}`);
  }
}

/** Thin typed wrapper over the session service endpoints. */
export class ApiClient {
  constructor(private readonly baseUrl: string,
              private readonly fetchFn: typeof fetch = fetch) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { 'content-type': 'application/json' },
      ...init,
    });
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = typeof body === 'object' && body !== null && 'detail' in body
        ? String((body as { detail: unknown }).detail)
        : resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return body as T;
  }

  createSession(participantId: string, seed: number,
                budgets?: string[], scenarios?: string[]): Promise<SessionResponse> {
    return this.request('/sessions', {
      method: 'POST',
      body: JSON.stringify({
        participant_id: participantId,
        seed,
        ...(budgets ? { budgets } : {}),
        ...(scenarios ? { scenarios } : {}),
      }),
    });
  }

  getTrial(sessionId: string): Promise<SessionResponse> {
    return this.request(`/sessions/${sessionId}/trial`);
  }

  setLevel(sessionId: string, modality: ModalityId,
           index: number): Promise<SessionResponse> {
    return this.request(`/sessions/${sessionId}/level`, {
      method: 'POST',
      body: JSON.stringify({ modality, index }),
    });
  }

  toggleSmell(sessionId: string): Promise<SessionResponse> {
    return this.request(`/sessions/${sessionId}/smell`, { method: 'POST' });
  }

  commit(sessionId: string): Promise<SessionResponse> {
    return this.request(`/sessions/${sessionId}/commit`, { method: 'POST' });
  }

  getLog(sessionId: string): Promise<SessionLogDto> {
    return this.request(`/sessions/${sessionId}/log`);
  }

  getCatalogue(): Promise<CatalogueDto> {
    return this.request('/catalogue');
  }
}
