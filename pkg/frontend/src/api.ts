/** Typed client for the listening-test HTTP API. */

export type Choice = "one_speaker" | "two_speakers";
export const CHOICE_ONE: Choice = "one_speaker";
export const CHOICE_TWO: Choice = "two_speakers";

export interface SubjectMeta {
  age_band?: string;
  gender?: string;
}

export interface SessionInfo {
  session_id: string;
  total_stimuli: number;
  playback_limit: number;
}

export interface Progress {
  answered: number;
  total: number;
}

export type NextStimulus =
  | { done: true; progress: Progress }
  | {
      done: false;
      stimulus_id: string;
      audio_url: string;
      remaining_plays: number;
      progress: Progress;
    };

export interface SubmitAck {
  accepted: boolean;
  answered: number;
  total: number;
}

export interface ConditionScore {
  condition: string;
  n: number;
  correct: number;
  accuracy: number;
}

export interface ResultsPayload {
  conditions: ConditionScore[];
  overall: { n: number; correct: number; accuracy: number };
}

/** Error decoded from the service's {code, message} body. */
export class ServiceError extends Error {
  constructor(
    readonly code: string,
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, {
      method,
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = (await response.json().catch(() => ({}))) as Record<string, unknown>;
    if (!response.ok) {
      throw new ServiceError(
        typeof data.code === "string" ? data.code : "http_error",
        typeof data.message === "string" ? data.message : response.statusText,
        response.status,
      );
    }
    return data as T;
  }

  createSession(subject?: SubjectMeta, seed?: number): Promise<SessionInfo> {
    return this.request<SessionInfo>("POST", "/sessions", { subject, seed });
  }

  nextStimulus(sessionId: string): Promise<NextStimulus> {
    return this.request<NextStimulus>("GET", `/sessions/${sessionId}/next`);
  }

  submitResponse(sessionId: string, stimulusId: string, choice: Choice): Promise<SubmitAck> {
    return this.request<SubmitAck>("POST", `/sessions/${sessionId}/responses`, {
      stimulus_id: stimulusId,
      choice,
    });
  }

  sessionResults(sessionId: string): Promise<ResultsPayload> {
    return this.request<ResultsPayload>("GET", `/sessions/${sessionId}/results`);
  }
}
