/** In-memory double of the listening-test service, faithful to the HTTP
 * contract: balanced seeded draw, in-order single responses, JSON errors
 * with codes, opaque payloads. Tests drive the real client against its
 * fetchFn and inspect every payload it served.
 */

import type { Choice } from "../src/api.js";

export interface FakeStimulus {
  id: string;
  condition: string;
}

export const GROUP_CONDITIONS: Record<string, string[]> = {
  original: ["F", "M"],
  u_swap: ["F<MU", "M<FU"],
  vu_swap: ["F<MvU", "M<FvU"],
};

export const DEFAULT_PROTOCOL = { original: 10, u_swap: 10, vu_swap: 5 };

export function makeStimulusSet(perCondition = 6): FakeStimulus[] {
  const conditions = ["M", "F", "M<FU", "F<MU", "M<FvU", "F<MvU",
                      "M<FSSt", "F<MSSt"];
  const out: FakeStimulus[] = [];
  let n = 0;
  for (const condition of conditions) {
    for (let i = 0; i < perCondition; i++) {
      out.push({ id: `s${String(++n).padStart(5, "0")}`, condition });
    }
  }
  return out;
}

class Rng {
  constructor(private state: number) {}

  next(): number {
    this.state = (Math.imul(this.state, 1664525) + 1013904223) >>> 0;
    return this.state / 2 ** 32;
  }

  shuffle<T>(xs: T[]): T[] {
    const out = [...xs];
    for (let i = out.length - 1; i > 0; i--) {
      const j = Math.floor(this.next() * (i + 1));
      [out[i], out[j]] = [out[j]!, out[i]!];
    }
    return out;
  }
}

interface SessionState {
  order: string[];
  responses: Map<string, Choice>;
}

export class FakeListeningService {
  readonly sessions = new Map<string, SessionState>();
  /** Every JSON body served, in order, for blinding inspection. */
  readonly servedPayloads: string[] = [];
  failNextSubmit: "before" | "after" | null = null;
  private counter = 0;

  constructor(
    readonly stimuli: FakeStimulus[] = makeStimulusSet(),
    readonly protocol: Record<string, number> = { ...DEFAULT_PROTOCOL },
    readonly playbackLimit = 1,
  ) {}

  readonly fetchFn: typeof fetch = async (input, init) => {
    const url = typeof input === "string" ? input : input.toString();
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    return this.route(method, url, body);
  };

  private json(status: number, payload: unknown): Response {
    const text = JSON.stringify(payload);
    this.servedPayloads.push(text);
    return new Response(text, {
      status,
      headers: { "content-type": "application/json" },
    });
  }

  private error(status: number, code: string, message: string): Response {
    return this.json(status, { code, message });
  }

  private route(method: string, url: string, body: any): Response {
    let match: RegExpMatchArray | null;
    if (method === "POST" && url.endsWith("/sessions")) {
      return this.createSession(body ?? {});
    }
    if ((match = url.match(/\/sessions\/([^/]+)\/next$/)) && method === "GET") {
      return this.next(match[1]!);
    }
    if ((match = url.match(/\/sessions\/([^/]+)\/responses$/)) && method === "POST") {
      return this.submit(match[1]!, body ?? {});
    }
    if ((match = url.match(/\/sessions\/([^/]+)\/results$/)) && method === "GET") {
      return this.results(match[1]!);
    }
    if ((match = url.match(/\/stimuli\/([^/]+)\/audio$/))) {
      return this.audio(match[1]!);
    }
    return this.error(404, "not_found", `no route for ${method} ${url}`);
  }

  private createSession(body: { seed?: number }): Response {
    const seed = body.seed ?? this.counter + 101;
    const rng = new Rng((seed ^ 0x5e55) >>> 0 || 1);
    const pools = new Map<string, string[]>();
    for (const stim of this.stimuli) {
      pools.set(stim.condition, [...(pools.get(stim.condition) ?? []), stim.id]);
    }
    const chosen: string[] = [];
    for (const [group, count] of Object.entries(this.protocol)) {
      const labels = [...GROUP_CONDITIONS[group]!].sort();
      const base = Math.floor(count / labels.length);
      const extra = count % labels.length;
      for (let k = 0; k < labels.length; k++) {
        const quota = base + (k < extra ? 1 : 0);
        const pool = [...(pools.get(labels[k]!) ?? [])].sort();
        if (pool.length < quota) {
          return this.error(409, "insufficient_stimuli",
                            `need ${quota} stimuli for condition ${labels[k]}`);
        }
        chosen.push(...rng.shuffle(pool).slice(0, quota));
      }
    }
    const order = rng.shuffle(chosen);
    const sessionId = `sess-${++this.counter}`;
    this.sessions.set(sessionId, { order, responses: new Map() });
    return this.json(201, {
      session_id: sessionId,
      total_stimuli: order.length,
      playback_limit: this.playbackLimit,
    });
  }

  private session(sessionId: string): SessionState | undefined {
    return this.sessions.get(sessionId);
  }

  private next(sessionId: string): Response {
    const session = this.session(sessionId);
    if (!session) return this.error(404, "unknown_session", sessionId);
    const progress = { answered: session.responses.size, total: session.order.length };
    const pending = session.order.find((sid) => !session.responses.has(sid));
    if (!pending) {
      return this.json(200, { done: true, progress });
    }
    return this.json(200, {
      done: false,
      stimulus_id: pending,
      audio_url: `/stimuli/${pending}/audio`,
      remaining_plays: this.playbackLimit,
      progress,
    });
  }

  private submit(sessionId: string,
                 body: { stimulus_id?: string; choice?: Choice }): Response {
    if (this.failNextSubmit === "before") {
      this.failNextSubmit = null;
      throw new TypeError("fetch failed (simulated)");
    }
    const session = this.session(sessionId);
    if (!session) return this.error(404, "unknown_session", sessionId);
    const sid = body.stimulus_id ?? "";
    if (!session.order.includes(sid)) {
      return this.error(404, "unknown_stimulus", sid);
    }
    if (session.responses.has(sid)) {
      return this.error(409, "duplicate_response", sid);
    }
    const current = session.order.find((s) => !session.responses.has(s));
    if (sid !== current) {
      return this.error(409, "out_of_order", `current stimulus is ${current}`);
    }
    session.responses.set(sid, body.choice!);
    if (this.failNextSubmit === "after") {
      this.failNextSubmit = null;
      throw new TypeError("fetch failed after commit (simulated)");
    }
    return this.json(200, {
      accepted: true,
      answered: session.responses.size,
      total: session.order.length,
    });
  }

  private results(sessionId: string): Response {
    const session = this.session(sessionId);
    if (!session) return this.error(404, "unknown_session", sessionId);
    if (session.responses.size < session.order.length) {
      return this.error(409, "incomplete_session",
                        `${session.responses.size}/${session.order.length}`);
    }
    const byCondition = new Map<string, { n: number; correct: number }>();
    for (const [sid, choice] of session.responses) {
      const condition = this.stimuli.find((s) => s.id === sid)!.condition;
      const expected = condition.includes("<") ? "two_speakers" : "one_speaker";
      const row = byCondition.get(condition) ?? { n: 0, correct: 0 };
      row.n += 1;
      row.correct += choice === expected ? 1 : 0;
      byCondition.set(condition, row);
    }
    const conditions = [...byCondition.entries()].map(([condition, row]) => ({
      condition,
      n: row.n,
      correct: row.correct,
      accuracy: (100 * row.correct) / row.n,
    }));
    const n = session.responses.size;
    const correct = conditions.reduce((acc, row) => acc + row.correct, 0);
    return this.json(200, {
      conditions,
      overall: { n, correct, accuracy: (100 * correct) / n },
    });
  }

  private audio(stimulusId: string): Response {
    if (!this.stimuli.some((s) => s.id === stimulusId)) {
      return this.error(404, "unknown_stimulus", stimulusId);
    }
    const bytes = new Uint8Array([0x52, 0x49, 0x46, 0x46, 0, 0, 0, 0]);
    return new Response(bytes, {
      status: 200,
      headers: { "content-type": "audio/wav" },
    });
  }

  conditionOf(stimulusId: string): string {
    return this.stimuli.find((s) => s.id === stimulusId)!.condition;
  }
}
