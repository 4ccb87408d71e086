import { ServiceClient } from "./api.js";
import { htmlAudioFactory } from "./player.js";
import { runSessionFlow } from "./session.js";
import { ListenerUi } from "./ui.js";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app element");
  }
  const ui = new ListenerUi({ root, audioFactory: htmlAudioFactory,
                              askDemographics: true });
  const client = new ServiceClient("");
  const subject = await ui.collectSubject();
  try {
    const outcome = await runSessionFlow(client, ui.hooks, subject);
    ui.showDone(outcome);
  } catch (err) {
    ui.showFatal(err);
  }
}

void boot();
