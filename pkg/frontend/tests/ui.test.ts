// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import { CHOICE_ONE, CHOICE_TWO } from "../src/api.js";
import { AudioFactory } from "../src/player.js";
import { LABEL_ONE_SPEAKER, LABEL_TWO_SPEAKERS, ListenerUi } from "../src/ui.js";

const CONDITION_TOKENS = ["M<F", "F<M", "SSt", "vU", "condition"];

beforeEach(() => {
  document.body.innerHTML = "";
});

function manualAudio() {
  let release: () => void = () => {};
  const factory: AudioFactory = () => ({
    play: () =>
      new Promise<void>((resolve) => {
        release = resolve;
      }),
  });
  return { factory, finish: () => release() };
}

function makeUi(factory: AudioFactory, askDemographics = false) {
  const root = document.createElement("div");
  document.body.append(root);
  const ui = new ListenerUi({ root, audioFactory: factory, askDemographics,
                              interStimulusPauseMs: 0 });
  const button = (role: string) =>
    root.querySelector(`[data-role="${role}"]`) as HTMLButtonElement;
  return { ui, root, button };
}

describe("listener UI", () => {
  it("renders the two verbatim choice labels", () => {
    const { button } = makeUi(manualAudio().factory);
    expect(button("choice-one").textContent).toBe(LABEL_ONE_SPEAKER);
    expect(button("choice-two").textContent).toBe(LABEL_TWO_SPEAKERS);
  });

  it("keeps choices disabled until playback completes", async () => {
    const audio = manualAudio();
    const { ui, button } = makeUi(audio.factory);
    const playback = ui.hooks.playback("/stimuli/s1/audio", 1);
    expect(button("choice-one").disabled).toBe(true);
    expect(button("choice-two").disabled).toBe(true);
    button("choice-one").click(); // ignored: still disabled
    audio.finish();
    await playback;
    const pending = ui.hooks.chooseResponse({ answered: 0, total: 25 });
    expect(button("choice-one").disabled).toBe(false);
    button("choice-one").click();
    expect(await pending).toBe(CHOICE_ONE);
  });

  it("a double click produces one submission and disables both buttons", async () => {
    const audio = manualAudio();
    const { ui, button } = makeUi(audio.factory);
    const playback = ui.hooks.playback("/stimuli/s1/audio", 1);
    audio.finish();
    await playback;
    const pending = ui.hooks.chooseResponse({ answered: 0, total: 25 });
    button("choice-two").click();
    button("choice-two").click();
    button("choice-one").click();
    expect(await pending).toBe(CHOICE_TWO);
    expect(button("choice-one").disabled).toBe(true);
    expect(button("choice-two").disabled).toBe(true);
  });

  it("maps keyboard 1/2 to the two choices", async () => {
    const audio = manualAudio();
    const { ui } = makeUi(audio.factory);
    const playback = ui.hooks.playback("/stimuli/s1/audio", 1);
    audio.finish();
    await playback;
    const pending = ui.hooks.chooseResponse({ answered: 0, total: 25 });
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "2" }));
    expect(await pending).toBe(CHOICE_TWO);
  });

  it("offers a replay only while plays remain", async () => {
    let plays = 0;
    const factory: AudioFactory = () => ({
      play: async () => {
        plays += 1;
      },
    });
    const { ui, button } = makeUi(factory);
    await ui.hooks.playback("/stimuli/s1/audio", 2);
    const replay = button("replay");
    expect(replay.hidden).toBe(false);
    expect(replay.textContent).toContain("1 left");
    replay.click();
    await new Promise((r) => setTimeout(r, 0));
    expect(plays).toBe(2);
    expect(button("replay").hidden).toBe(true);
  });

  it("hides the replay button entirely at limit 1", async () => {
    const audio = manualAudio();
    const { ui, button } = makeUi(audio.factory);
    const playback = ui.hooks.playback("/stimuli/s1/audio", 1);
    audio.finish();
    await playback;
    expect(button("replay").hidden).toBe(true);
  });

  it("audio load failure surfaces a retry that then succeeds", async () => {
    let failures = 1;
    const factory: AudioFactory = () => ({
      play: async () => {
        if (failures > 0) {
          failures -= 1;
          throw new Error("audio failed to load");
        }
      },
    });
    const { ui, button } = makeUi(factory);
    const playback = ui.hooks.playback("/stimuli/s1/audio", 1);
    await new Promise((r) => setTimeout(r, 0));
    const retry = button("retry");
    expect(retry.hidden).toBe(false);
    retry.click();
    await playback; // resolves after the retried play completes
  });

  it("collects or skips demographics", async () => {
    const first = makeUi(manualAudio().factory, true);
    const pending = first.ui.collectSubject();
    (first.root.querySelector('[data-role="age-band"]') as HTMLSelectElement)
      .value = "18-30";
    first.button("start").click();
    expect(await pending).toEqual({ age_band: "18-30", gender: undefined });

    const second = makeUi(manualAudio().factory, true);
    const pending2 = second.ui.collectSubject();
    second.button("skip").click();
    expect(await pending2).toBeUndefined();
  });

  it("never puts condition information into the DOM", async () => {
    const audio = manualAudio();
    const { ui, button } = makeUi(audio.factory);
    const check = () => {
      for (const token of CONDITION_TOKENS) {
        expect(document.body.innerHTML).not.toContain(token);
      }
    };
    check();
    const playback = ui.hooks.playback("/stimuli/s1/audio", 1);
    check();
    audio.finish();
    await playback;
    const pending = ui.hooks.chooseResponse({ answered: 3, total: 25 });
    check();
    button("choice-one").click();
    await pending;
    ui.showDone({ sessionId: "x", answered: 25, total: 25 });
    check();
  });
});
