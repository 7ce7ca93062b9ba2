/** Typed client for the annotation service endpoints. */

export type ResponseLevel =
  | 'LEFT_MUCH'
  | 'LEFT_SLIGHT'
  | 'SIMILAR'
  | 'RIGHT_SLIGHT'
  | 'RIGHT_MUCH';

export const RESPONSE_LEVELS: readonly ResponseLevel[] = [
  'LEFT_MUCH',
  'LEFT_SLIGHT',
  'SIMILAR',
  'RIGHT_SLIGHT',
  'RIGHT_MUCH',
];

export type SessionState =
  | 'TUTORIAL'
  | 'ACTIVE'
  | 'COMPLETE'
  | 'REJECTED_TUTORIAL'
  | 'REJECTED_CONSISTENCY';

export interface CreatedSession {
  session_id: string;
  state: SessionState;
  total_pairs: number;
  answered: number;
}

export interface PendingPair {
  done: false;
  position: number;
  left_image_ref: string;
  right_image_ref: string;
  answered: number;
  total_pairs: number;
}

export interface SessionDone {
  done: true;
  verdict: SessionState;
}

export type NextPair = PendingPair | SessionDone;

export interface SessionStatus {
  answered: number;
  remaining: number;
  state: SessionState;
}

export interface SubmitOutcome {
  accepted: boolean;
  state: SessionState | null;
  errorCode: string | null;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

/** The endpoint surface the UI depends on; ServiceClient is the HTTP
 * implementation and tests provide in-memory stand-ins. */
export interface AnnotationApi {
  imageUrl(ref: string): string;
  createSession(raterId: string): Promise<CreatedSession>;
  nextPair(sessionId: string): Promise<NextPair>;
  status(sessionId: string): Promise<SessionStatus>;
  submit(
    sessionId: string,
    position: number,
    level: ResponseLevel,
  ): Promise<SubmitOutcome>;
}

type FetchLike = typeof fetch;

export class ServiceClient implements AnnotationApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  imageUrl(ref: string): string {
    return `${this.baseUrl}/images/${ref}`;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    return this.fetchFn(`${this.baseUrl}${path}`, init);
  }

  private async readError(response: Response): Promise<ServiceError> {
    let code = 'E_HTTP';
    let message = `HTTP ${response.status}`;
    try {
      const body = await response.json();
      if (body?.error?.code) {
        code = body.error.code;
        message = body.error.message ?? message;
      }
    } catch {
      // non-JSON error body; keep the generic message
    }
    return new ServiceError(response.status, code, message);
  }

  async createSession(raterId: string): Promise<CreatedSession> {
    const response = await this.request('/sessions', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ rater_id: raterId }),
    });
    if (!response.ok) throw await this.readError(response);
    return response.json();
  }

  async nextPair(sessionId: string): Promise<NextPair> {
    const response = await this.request(`/sessions/${sessionId}/next`);
    if (!response.ok) throw await this.readError(response);
    return response.json();
  }

  async status(sessionId: string): Promise<SessionStatus> {
    const response = await this.request(`/sessions/${sessionId}/status`);
    if (!response.ok) throw await this.readError(response);
    return response.json();
  }

  /** Submit a response; out-of-order / closed-session rejections come back
   * as a structured outcome rather than a thrown error so the caller can
   * resynchronize from the service. */
  async submit(
    sessionId: string,
    position: number,
    level: ResponseLevel,
  ): Promise<SubmitOutcome> {
    const response = await this.request(`/sessions/${sessionId}/responses`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ position, response: level }),
    });
    if (response.ok) {
      const body = await response.json();
      return { accepted: true, state: body.new_state, errorCode: null };
    }
    if (response.status === 409) {
      const error = await this.readError(response);
      return { accepted: false, state: null, errorCode: error.code };
    }
    throw await this.readError(response);
  }
}
