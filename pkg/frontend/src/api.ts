import type { ResponseResult, SessionInfo, Side, TrialPayload } from './types.js';

const RETRIES = 3;
const RETRY_DELAY_MS = 300;

async function parseOrThrow<T>(response: Response, what: string): Promise<T> {
  if (!response.ok) {
    let detail = '';
    try {
      detail = JSON.stringify(await response.json());
    } catch {
      /* non-JSON error body */
    }
    throw new Error(`${what} failed (${response.status}) ${detail}`);
  }
  return response.json() as Promise<T>;
}

export class SessionApi {
  constructor(private readonly baseUrl: string = '') {}

  async createSession(observerId: string, seed?: number): Promise<SessionInfo> {
    const response = await fetch(`${this.baseUrl}/api/sessions`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ observer_id: observerId, seed: seed ?? null }),
    });
    return parseOrThrow<SessionInfo>(response, 'create session');
  }

  async status(sessionId: string): Promise<SessionInfo> {
    const response = await fetch(`${this.baseUrl}/api/sessions/${sessionId}`);
    return parseOrThrow<SessionInfo>(response, 'session status');
  }

  /** Fetching the next trial is idempotent server-side, so transient
   *  network failures are retried; a refresh resumes the pending trial. */
  async nextTrial(sessionId: string): Promise<TrialPayload> {
    let lastError: unknown;
    for (let attempt = 0; attempt < RETRIES; attempt += 1) {
      try {
        const response = await fetch(`${this.baseUrl}/api/sessions/${sessionId}/next`);
        return await parseOrThrow<TrialPayload>(response, 'next trial');
      } catch (error) {
        lastError = error;
        await new Promise((resolve) => setTimeout(resolve, RETRY_DELAY_MS));
      }
    }
    throw lastError;
  }

  async submitResponse(sessionId: string, trialId: string, side: Side): Promise<ResponseResult> {
    const response = await fetch(`${this.baseUrl}/api/sessions/${sessionId}/responses`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ trial_id: trialId, chosen_side: side }),
    });
    return parseOrThrow<ResponseResult>(response, 'submit response');
  }
}
