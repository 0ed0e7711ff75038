/* Session state machine, independent of the DOM so the same flow drives
 * both the browser UI and headless scripted sessions.
 *
 * Loop: fetch next -> present pair -> collect one score -> submit -> repeat
 * until the server reports completion. Network failures retry the same
 * stimulus (display is idempotent: the server keeps serving the current
 * unrated stimulus); a conflict means the server is ahead, so skip forward.
 */

import { ApiClient, ConflictError, isDone, Stimulus } from "./api.js";

export interface SessionCallbacks {
  /** Show the pair and resolve with the rater's 0-100 integer score. */
  present(stimulus: Stimulus): Promise<number>;
  /** Called once after the server reports the session complete. */
  completed(exportUrl: string, submitted: number): void;
  /** Optional error reporter (network retries, conflicts). */
  notify?(message: string): void;
}

export interface SessionResult {
  submitted: number;
  skipped: number;
}

const RETRY_DELAY_MS = 500;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function runSession(
  api: ApiClient,
  sessionId: string,
  callbacks: SessionCallbacks,
  maxRetries = 5,
): Promise<SessionResult> {
  let submitted = 0;
  let skipped = 0;
  for (;;) {
    const next = await withRetries(() => api.next(sessionId), maxRetries, callbacks);
    if (isDone(next)) {
      callbacks.completed(api.exportUrl(sessionId), submitted);
      return { submitted, skipped };
    }
    const score = await callbacks.present(next);
    try {
      await withRetries(
        () => api.rate(sessionId, next.stimulus_id, score),
        maxRetries,
        callbacks,
      );
      submitted += 1;
    } catch (err) {
      if (err instanceof ConflictError) {
        // server already has a rating for this stimulus: move on
        callbacks.notify?.(`skipping ${progressLabel(next)}: ${err.message}`);
        skipped += 1;
        continue;
      }
      throw err;
    }
  }
}

function progressLabel(s: Stimulus): string {
  // never surface the stimulus id to the rater: progress only
  return `item ${s.progress.done + 1} of ${s.progress.total}`;
}

async function withRetries<T>(
  action: () => Promise<T>,
  maxRetries: number,
  callbacks: SessionCallbacks,
): Promise<T> {
  let lastError: unknown;
  for (let attempt = 0; attempt <= maxRetries; attempt++) {
    try {
      return await action();
    } catch (err) {
      if (err instanceof ConflictError) throw err; // not transient
      lastError = err;
      if (err instanceof TypeError || (err as Error).message?.includes("fetch")) {
        callbacks.notify?.(`network problem, retrying (${attempt + 1}/${maxRetries})`);
        await sleep(RETRY_DELAY_MS);
        continue;
      }
      throw err;
    }
  }
  throw lastError;
}
