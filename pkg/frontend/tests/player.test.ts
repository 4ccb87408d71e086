import { describe, expect, it } from "vitest";

import { AudioFactory, PlaybackController } from "../src/player.js";

function instantAudio(log: string[]): AudioFactory {
  return (url) => ({
    play: async () => {
      log.push(url);
    },
  });
}

describe("playback controller", () => {
  it("limit 1 forbids a replay", async () => {
    const log: string[] = [];
    const player = new PlaybackController(instantAudio(log), 1, "/a.wav");
    await player.play();
    expect(player.remaining).toBe(0);
    await expect(player.play()).rejects.toThrow("playback limit");
    expect(log).toEqual(["/a.wav"]);
  });

  it("limit 2 allows exactly one replay", async () => {
    const log: string[] = [];
    const player = new PlaybackController(instantAudio(log), 2, "/a.wav");
    await player.play();
    expect(player.remaining).toBe(1);
    await player.play();
    expect(player.remaining).toBe(0);
    await expect(player.play()).rejects.toThrow();
  });

  it("failed loads do not consume a play", async () => {
    let failures = 1;
    const factory: AudioFactory = (url) => ({
      play: async () => {
        if (failures > 0) {
          failures -= 1;
          throw new Error(`audio failed to load: ${url}`);
        }
      },
    });
    const player = new PlaybackController(factory, 1, "/bad.wav");
    await expect(player.play()).rejects.toThrow("failed to load");
    expect(player.remaining).toBe(1);
    await player.play(); // retry succeeds and consumes the single play
    expect(player.remaining).toBe(0);
  });
});
