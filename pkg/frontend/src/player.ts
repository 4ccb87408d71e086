/** Playback with a per-stimulus limit. Play counts only complete playbacks. */

export interface AudioHandle {
  /** Resolves when the audio has played to the end; rejects on load failure. */
  play(): Promise<void>;
}

export type AudioFactory = (url: string) => AudioHandle;

export function htmlAudioFactory(url: string): AudioHandle {
  return {
    play: () =>
      new Promise<void>((resolve, reject) => {
        const el = new Audio(url);
        el.onended = () => resolve();
        el.onerror = () => reject(new Error(`audio failed to load: ${url}`));
        el.play().catch(reject);
      }),
  };
}

export class PlaybackController {
  private used = 0;

  constructor(
    private readonly factory: AudioFactory,
    readonly limit: number,
    private readonly url: string,
  ) {}

  get remaining(): number {
    return this.limit - this.used;
  }

  /** Full playback; failed loads do not consume a play. */
  async play(): Promise<void> {
    if (this.remaining <= 0) {
      throw new Error("playback limit reached");
    }
    this.used += 1;
    try {
      await this.factory(this.url).play();
    } catch (err) {
      this.used -= 1;
      throw err;
    }
  }
}
