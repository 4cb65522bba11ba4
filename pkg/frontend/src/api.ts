// Thin typed client over the studio HTTP API. Every domain object round-trips
// through server validation; the client never constructs one locally.

import type {
  AnnotationPayload,
  ConceptsResponse,
  DescriptionPayload,
  EditCommandPayload,
  FramesResponse,
  SessionPayload,
  TrajectoryResponse,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public body: unknown) {
    super(`API error ${status}`);
  }
}

export class ConflictError extends ApiError {
  constructor(body: unknown, public current: SessionPayload) {
    super(409, body);
  }
}

export class ApiClient {
  constructor(
    private base: string = '',
    private fetchImpl: FetchLike = (i, init) => fetch(i, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(this.base + path, {
      method,
      headers: body === undefined ? {} : { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = res.status === 204 ? null : await res.json();
    if (!res.ok) {
      throw new ApiError(res.status, data);
    }
    return data as T;
  }

  uploadSequence(doc: unknown): Promise<{ id: string }> {
    return this.request('POST', '/sequences', doc);
  }

  listSequences(): Promise<{ sequences: string[] }> {
    return this.request('GET', '/sequences');
  }

  trajectories(seqId: string, joint: number): Promise<TrajectoryResponse> {
    return this.request('GET', `/sequences/${seqId}/trajectories?joint=${joint}`);
  }

  submitAnnotation(seqId: string, payload: AnnotationPayload): Promise<{ count: number }> {
    return this.request('POST', `/sequences/${seqId}/annotations`, payload);
  }

  concepts(): Promise<ConceptsResponse> {
    return this.request('GET', '/concepts');
  }

  startTraining(config: Record<string, unknown>): Promise<{ job_id: string }> {
    return this.request('POST', '/train', config);
  }

  jobStatus(jobId: string): Promise<{ status: string; error?: string }> {
    return this.request('GET', `/jobs/${jobId}`);
  }

  describe(seqId: string, body: Record<string, unknown> = {}): Promise<DescriptionPayload> {
    return this.request('POST', `/describe/${seqId}`, body);
  }

  openSession(body: Record<string, unknown>): Promise<SessionPayload> {
    return this.request('POST', '/sessions', body);
  }

  getSession(sid: string): Promise<SessionPayload> {
    return this.request('GET', `/sessions/${sid}`);
  }

  async postEdit(
    sid: string,
    version: number,
    command: EditCommandPayload,
  ): Promise<SessionPayload> {
    try {
      return await this.request<SessionPayload>('POST', `/sessions/${sid}/edits`, {
        version,
        command,
      });
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // stale token: fetch the authoritative state so the caller can
        // prompt reload-and-retry
        const current = await this.getSession(sid);
        throw new ConflictError(err.body, current);
      }
      throw err;
    }
  }

  frames(sid: string): Promise<FramesResponse> {
    return this.request('GET', `/sessions/${sid}/frames`);
  }

  exportSession(sid: string): Promise<{ path: string; primitives: unknown }> {
    return this.request('POST', `/sessions/${sid}/export`);
  }
}
