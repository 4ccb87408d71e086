/** Forced-choice session flow: fetch, play fully, choose, submit, advance.
 *
 * Network failures surface through onNetworkError and are retried without
 * losing state; a retried submit that already landed server-side comes
 * back as duplicate_response and counts as delivered, so the selected
 * choice is never lost or double-counted.
 */

import { Choice, Progress, ServiceClient, ServiceError, SubjectMeta } from "./api.js";

export interface FlowHooks {
  /** Play the stimulus to the end (response buttons stay disabled meanwhile). */
  playback(audioUrl: string, remainingPlays: number): Promise<void>;
  /** Resolve with the listener's choice; called only after playback ends. */
  chooseResponse(progress: Progress): Promise<Choice>;
  onProgress?(progress: Progress): void;
  /** Resolve to retry the failed call; absent means network errors rethrow. */
  onNetworkError?(error: unknown): Promise<void>;
  interStimulusPauseMs?: number;
  sleep?(ms: number): Promise<void>;
}

export interface SessionOutcome {
  sessionId: string;
  answered: number;
  total: number;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

async function withRetry<T>(call: () => Promise<T>, hooks: FlowHooks): Promise<T> {
  for (;;) {
    try {
      return await call();
    } catch (err) {
      if (err instanceof ServiceError || !hooks.onNetworkError) {
        throw err;
      }
      await hooks.onNetworkError(err);
    }
  }
}

async function submitOnce(
  client: ServiceClient,
  sessionId: string,
  stimulusId: string,
  choice: Choice,
  hooks: FlowHooks,
): Promise<void> {
  for (;;) {
    try {
      await client.submitResponse(sessionId, stimulusId, choice);
      return;
    } catch (err) {
      if (err instanceof ServiceError) {
        if (err.code === "duplicate_response") {
          return; // a lost response to an earlier attempt: already recorded
        }
        throw err;
      }
      if (!hooks.onNetworkError) {
        throw err;
      }
      await hooks.onNetworkError(err);
    }
  }
}

export async function runSessionFlow(
  client: ServiceClient,
  hooks: FlowHooks,
  subject?: SubjectMeta,
  seed?: number,
): Promise<SessionOutcome> {
  const info = await withRetry(() => client.createSession(subject, seed), hooks);
  const sleep = hooks.sleep ?? defaultSleep;
  let answered = 0;
  for (;;) {
    const next = await withRetry(() => client.nextStimulus(info.session_id), hooks);
    if (next.done) {
      return { sessionId: info.session_id, answered, total: next.progress.total };
    }
    hooks.onProgress?.(next.progress);
    await hooks.playback(next.audio_url, next.remaining_plays);
    const choice = await hooks.chooseResponse(next.progress);
    await submitOnce(client, info.session_id, next.stimulus_id, choice, hooks);
    answered += 1;
    const pause = hooks.interStimulusPauseMs ?? 1000;
    if (pause > 0) {
      await sleep(pause);
    }
  }
}
