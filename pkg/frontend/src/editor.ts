// Edit-session state machine. Every mutation is server-acknowledged before
// being reflected (no optimistic UI); a stale version token surfaces as a
// conflict carrying the authoritative state so the view can reload and retry.

import { ApiClient, ConflictError } from './api.js';
import type { EditCommandPayload, FramesResponse, SessionPayload } from './types.js';

export class EditorSession {
  state: SessionPayload;
  conflict: SessionPayload | null = null;

  constructor(
    private api: ApiClient,
    initial: SessionPayload,
  ) {
    this.state = initial;
  }

  get id(): string {
    return this.state.id;
  }

  get version(): number {
    return this.state.version;
  }

  async reload(): Promise<SessionPayload> {
    this.state = await this.api.getSession(this.id);
    this.conflict = null;
    return this.state;
  }

  /**
   * Apply one command with the current token. On a 409 the session keeps its
   * local state, records the fresh server state in `conflict`, and rethrows;
   * the caller prompts the user to reload and retry.
   */
  async apply(command: EditCommandPayload): Promise<SessionPayload> {
    try {
      this.state = await this.api.postEdit(this.id, this.state.version, command);
      this.conflict = null;
      return this.state;
    } catch (err) {
      if (err instanceof ConflictError) {
        this.conflict = err.current;
      }
      throw err;
    }
  }

  /** Reload to the server's state and re-apply the command once. */
  async retryAfterConflict(command: EditCommandPayload): Promise<SessionPayload> {
    await this.reload();
    return this.apply(command);
  }

  deleteSegment(index: number): Promise<SessionPayload> {
    return this.apply({ kind: 'delete', target: index });
  }

  relabelSegment(index: number, label: string): Promise<SessionPayload> {
    return this.apply({ kind: 'relabel', target: index, label });
  }

  insertEntry(index: number, concept: string, count: number): Promise<SessionPayload> {
    return this.apply({ kind: 'insert', target: index, entry: [concept, count] });
  }

  insertOccurrence(index: number, occurrence: unknown): Promise<SessionPayload> {
    return this.apply({ kind: 'insert', target: index, occurrence });
  }

  setPrimitiveParam(
    segment: number,
    primitive: number,
    coefficient: number,
    value: number,
  ): Promise<SessionPayload> {
    return this.apply({
      kind: 'set_primitive_param',
      target: segment,
      param: [primitive, coefficient, value],
    });
  }

  fetchFrames(): Promise<FramesResponse> {
    return this.api.frames(this.id);
  }

  export(): Promise<{ path: string; primitives: unknown }> {
    return this.api.exportSession(this.id);
  }
}
