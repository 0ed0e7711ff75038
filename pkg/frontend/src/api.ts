/* Typed client for the rating service HTTP API. */

export interface SessionInfo {
  session_id: string;
  subject_id: string;
  total: number;
}

export interface Progress {
  done: number;
  total: number;
}

export interface Stimulus {
  stimulus_id: string;
  reference_image_url: string;
  distorted_image_url: string;
  progress: Progress;
}

export type NextResponse = Stimulus | { done: true; total: number };

export interface RateResult {
  ok: boolean;
  done: number;
  total: number;
}

/** Submission rejected with 409: already rated or out of order. */
export class ConflictError extends Error {}

/** Submission rejected with 400: malformed or out-of-bounds score. */
export class RejectedError extends Error {}

export function isDone(next: NextResponse): next is { done: true; total: number } {
  return (next as { done?: boolean }).done === true;
}

async function parseError(resp: Response): Promise<string> {
  try {
    const body = (await resp.json()) as { error?: string };
    return body.error ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  imageUrl(path: string): string {
    return this.baseUrl + path;
  }

  async createSession(subjectId: string): Promise<SessionInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/session`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ subject_id: subjectId }),
    });
    if (!resp.ok) throw new Error(await parseError(resp));
    return (await resp.json()) as SessionInfo;
  }

  async next(sessionId: string): Promise<NextResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/session/${sessionId}/next`);
    if (!resp.ok) throw new Error(await parseError(resp));
    return (await resp.json()) as NextResponse;
  }

  async rate(sessionId: string, stimulusId: string, score: number): Promise<RateResult> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/session/${sessionId}/rate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ stimulus_id: stimulusId, score }),
    });
    if (resp.status === 409) throw new ConflictError(await parseError(resp));
    if (resp.status === 400) throw new RejectedError(await parseError(resp));
    if (!resp.ok) throw new Error(await parseError(resp));
    return (await resp.json()) as RateResult;
  }

  exportUrl(sessionId: string): string {
    return `${this.baseUrl}/api/session/${sessionId}/export`;
  }
}
