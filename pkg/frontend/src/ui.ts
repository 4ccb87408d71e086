/** Framework-free DOM for the listener: status line, progress, playback
 * with a replay budget, and the two forced-choice buttons. The DOM never
 * receives any information about a stimulus beyond its audio URL.
 */

import { CHOICE_ONE, CHOICE_TWO, Choice, Progress, SubjectMeta } from "./api.js";
import { AudioFactory, PlaybackController } from "./player.js";
import { FlowHooks, SessionOutcome } from "./session.js";

export const LABEL_ONE_SPEAKER = "I hear only one speaker";
export const LABEL_TWO_SPEAKERS = "I hear two speakers";
export const AGE_BANDS = ["18-30", "31-45", "46-60"];

export interface ListenerUiOptions {
  root: HTMLElement;
  audioFactory: AudioFactory;
  askDemographics?: boolean;
  interStimulusPauseMs?: number;
}

export class ListenerUi {
  readonly hooks: FlowHooks;
  private readonly doc: Document;
  private readonly root: HTMLElement;
  private readonly status: HTMLElement;
  private readonly progress: HTMLElement;
  private readonly replayButton: HTMLButtonElement;
  private readonly oneButton: HTMLButtonElement;
  private readonly twoButton: HTMLButtonElement;
  private readonly retryButton: HTMLButtonElement;
  private keyHandler: ((ev: KeyboardEvent) => void) | null = null;

  constructor(private readonly opts: ListenerUiOptions) {
    this.root = opts.root;
    this.doc = opts.root.ownerDocument;
    this.root.textContent = "";

    this.status = this.el("p", "status", "Preparing session ...");
    this.progress = this.el("p", "progress", "");
    this.replayButton = this.button("replay", "Replay");
    this.replayButton.hidden = true;
    this.oneButton = this.button("choice-one", LABEL_ONE_SPEAKER);
    this.twoButton = this.button("choice-two", LABEL_TWO_SPEAKERS);
    this.retryButton = this.button("retry", "Retry");
    this.retryButton.hidden = true;
    this.setChoicesEnabled(false);

    this.root.append(this.status, this.progress, this.replayButton,
                     this.oneButton, this.twoButton, this.retryButton);

    this.hooks = {
      playback: (url, remaining) => this.playback(url, remaining),
      chooseResponse: (progress) => this.chooseResponse(progress),
      onProgress: (progress) => this.renderProgress(progress),
      onNetworkError: (err) => this.networkRetry(err),
      interStimulusPauseMs: opts.interStimulusPauseMs ?? 1000,
    };
  }

  private el(tag: string, role: string, text: string): HTMLElement {
    const node = this.doc.createElement(tag);
    node.setAttribute("data-role", role);
    node.textContent = text;
    this.root.append(node);
    return node;
  }

  private button(role: string, label: string): HTMLButtonElement {
    const node = this.doc.createElement("button");
    node.setAttribute("data-role", role);
    node.textContent = label;
    return node;
  }

  private setChoicesEnabled(enabled: boolean): void {
    this.oneButton.disabled = !enabled;
    this.twoButton.disabled = !enabled;
  }

  private renderProgress(progress: Progress): void {
    this.progress.textContent = `Utterance ${progress.answered + 1} of ${progress.total}`;
  }

  /** Optional pre-session demographics; resolves undefined when skipped. */
  collectSubject(): Promise<SubjectMeta | undefined> {
    if (!this.opts.askDemographics) {
      return Promise.resolve(undefined);
    }
    return new Promise((resolve) => {
      const form = this.doc.createElement("div");
      form.setAttribute("data-role", "demographics");
      const age = this.doc.createElement("select");
      age.setAttribute("data-role", "age-band");
      for (const band of ["", ...AGE_BANDS]) {
        const option = this.doc.createElement("option");
        option.value = band;
        option.textContent = band || "age band (optional)";
        age.append(option);
      }
      const gender = this.doc.createElement("select");
      gender.setAttribute("data-role", "subject-gender");
      for (const value of ["", "F", "M", "other"]) {
        const option = this.doc.createElement("option");
        option.value = value;
        option.textContent = value || "gender (optional)";
        gender.append(option);
      }
      const start = this.button("start", "Start");
      const skip = this.button("skip", "Skip");
      const finish = (subject: SubjectMeta | undefined) => {
        form.remove();
        resolve(subject);
      };
      start.addEventListener("click", () =>
        finish({
          age_band: age.value || undefined,
          gender: gender.value || undefined,
        }));
      skip.addEventListener("click", () => finish(undefined));
      form.append(age, gender, start, skip);
      this.root.prepend(form);
    });
  }

  private async playback(url: string, remainingPlays: number): Promise<void> {
    const controller = new PlaybackController(this.opts.audioFactory, remainingPlays, url);
    this.setChoicesEnabled(false);
    this.replayButton.hidden = true;
    this.status.textContent = "Playing ...";
    for (;;) {
      try {
        await controller.play();
        break;
      } catch (err) {
        this.status.textContent = "Audio failed to load.";
        await this.awaitRetry();
      }
    }
    this.status.textContent = "Choose what you heard.";
    this.offerReplay(controller);
  }

  private offerReplay(controller: PlaybackController): void {
    if (controller.remaining <= 0) {
      this.replayButton.hidden = true;
      return;
    }
    this.replayButton.hidden = false;
    this.replayButton.disabled = false;
    this.replayButton.textContent = `Replay (${controller.remaining} left)`;
    this.replayButton.onclick = async () => {
      this.replayButton.disabled = true;
      try {
        await controller.play();
      } catch {
        this.status.textContent = "Audio failed to load.";
      }
      this.offerReplay(controller);
    };
  }

  private chooseResponse(_progress: Progress): Promise<Choice> {
    this.setChoicesEnabled(true);
    return new Promise((resolve) => {
      let settled = false;
      const pick = (choice: Choice) => {
        if (settled) {
          return; // debounce: double activation submits once
        }
        settled = true;
        this.setChoicesEnabled(false);
        this.replayButton.hidden = true;
        this.detachKeyboard();
        this.oneButton.onclick = null;
        this.twoButton.onclick = null;
        this.status.textContent = "Recorded.";
        resolve(choice);
      };
      this.oneButton.onclick = () => pick(CHOICE_ONE);
      this.twoButton.onclick = () => pick(CHOICE_TWO);
      this.keyHandler = (ev: KeyboardEvent) => {
        if (ev.key === "1") pick(CHOICE_ONE);
        if (ev.key === "2") pick(CHOICE_TWO);
      };
      this.doc.addEventListener("keydown", this.keyHandler);
    });
  }

  private detachKeyboard(): void {
    if (this.keyHandler) {
      this.doc.removeEventListener("keydown", this.keyHandler);
      this.keyHandler = null;
    }
  }

  private networkRetry(_err: unknown): Promise<void> {
    this.status.textContent = "Connection problem.";
    return this.awaitRetry();
  }

  private awaitRetry(): Promise<void> {
    return new Promise((resolve) => {
      this.retryButton.hidden = false;
      this.retryButton.onclick = () => {
        this.retryButton.hidden = true;
        this.retryButton.onclick = null;
        resolve();
      };
    });
  }

  showDone(outcome: SessionOutcome): void {
    this.detachKeyboard();
    this.root.textContent = "";
    const done = this.el("p", "done",
        `Thank you! All ${outcome.total} responses were recorded.`);
    done.className = "done";
  }

  showFatal(err: unknown): void {
    this.detachKeyboard();
    this.status.textContent = `Something went wrong: ${String(err)}`;
  }
}
