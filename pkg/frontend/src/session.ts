/** Session controller: one active request at a time, no caching of future
 * pairs, and refresh-safe resume via storage of the session id. */

import {
  PendingPair,
  ResponseLevel,
  AnnotationApi,
  SessionState,
} from './api.js';

export type Screen =
  | { kind: 'start' }
  | { kind: 'loading' }
  | { kind: 'pair'; pair: PendingPair }
  | { kind: 'done'; verdict: SessionState }
  | { kind: 'error'; message: string };

export interface KeyValueStore {
  get(key: string): string | null;
  set(key: string, value: string): void;
  remove(key: string): void;
}

const SESSION_KEY = 'faceq.session_id';

export class AnnotationSession {
  screen: Screen = { kind: 'start' };
  sessionId: string | null = null;
  private busy = false;
  private listeners: Array<(screen: Screen) => void> = [];

  constructor(
    private readonly client: AnnotationApi,
    private readonly storage: KeyValueStore,
  ) {}

  onChange(listener: (screen: Screen) => void): void {
    this.listeners.push(listener);
  }

  private show(screen: Screen): void {
    this.screen = screen;
    for (const listener of this.listeners) listener(screen);
  }

  /** True when a stored session id exists to resume. */
  hasStoredSession(): boolean {
    return this.storage.get(SESSION_KEY) !== null;
  }

  async begin(raterId: string): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    this.show({ kind: 'loading' });
    try {
      const created = await this.client.createSession(raterId);
      this.sessionId = created.session_id;
      this.storage.set(SESSION_KEY, created.session_id);
    } catch (error) {
      this.busy = false;
      this.show({ kind: 'error', message: describe(error) });
      return;
    }
    this.busy = false;
    await this.refresh();
  }

  /** Resume the stored session after a reload; the position always comes
   * from the service, never from anything cached client-side. */
  async resume(): Promise<boolean> {
    const stored = this.storage.get(SESSION_KEY);
    if (stored === null) return false;
    this.sessionId = stored;
    if (this.busy) return true;
    this.busy = true;
    this.show({ kind: 'loading' });
    try {
      await this.client.status(stored);
    } catch {
      // unknown/expired session: fall back to the start screen
      this.storage.remove(SESSION_KEY);
      this.sessionId = null;
      this.busy = false;
      this.show({ kind: 'start' });
      return false;
    }
    this.busy = false;
    await this.refresh();
    return true;
  }

  async refresh(): Promise<void> {
    if (this.sessionId === null || this.busy) return;
    this.busy = true;
    try {
      const next = await this.client.nextPair(this.sessionId);
      if (next.done) {
        this.storage.remove(SESSION_KEY);
        this.show({ kind: 'done', verdict: next.verdict });
      } else {
        this.show({ kind: 'pair', pair: next });
      }
    } catch (error) {
      this.show({ kind: 'error', message: describe(error) });
    } finally {
      this.busy = false;
    }
  }

  /** Submit the response for the pair on screen. No-op unless a pair is
   * showing and no other request is in flight (double-submit guard). */
  async answer(level: ResponseLevel): Promise<void> {
    if (this.busy || this.screen.kind !== 'pair' || this.sessionId === null) return;
    const position = this.screen.pair.position;
    this.busy = true;
    try {
      await this.client.submit(this.sessionId, position, level);
      // rejected submissions (stale position, closed session) resync below
    } catch (error) {
      this.show({ kind: 'error', message: describe(error) });
      return;
    } finally {
      this.busy = false;
    }
    await this.refresh();
  }

  /** Retry after a network failure; state is re-fetched from the service. */
  async retry(): Promise<void> {
    if (this.sessionId === null) {
      this.show({ kind: 'start' });
      return;
    }
    await this.refresh();
  }
}

function describe(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}
