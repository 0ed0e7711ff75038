/* Entry point: subject sign-in, then the rating loop. */

import { ApiClient } from "./api.js";
import { runSession } from "./session.js";
import { buildPanel } from "./ui.js";

async function start(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");

  const api = new ApiClient("");

  root.innerHTML = `
    <form id="signin">
      <h1>Quality rating session</h1>
      <label>Subject id <input id="subject" required autofocus
        placeholder="e.g. s07" pattern="[A-Za-z0-9_-]+" /></label>
      <button>Start</button>
    </form>
  `;
  const form = document.getElementById("signin") as HTMLFormElement;
  const subjectInput = document.getElementById("subject") as HTMLInputElement;

  form.onsubmit = async (ev) => {
    ev.preventDefault();
    const subject = subjectInput.value.trim();
    if (!subject) return;
    const session = await api.createSession(subject);
    const panel = buildPanel(root);
    await runSession(api, session.session_id, {
      present: (stimulus) => panel.present(stimulus, (p) => api.imageUrl(p)),
      completed: (exportUrl, submitted) => panel.showCompletion(exportUrl, submitted),
      notify: (message) => panel.notify(message),
    });
  };
}

start().catch((err) => {
  document.body.textContent = `failed to start: ${err}`;
});
