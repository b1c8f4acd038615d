// Entry point: wire a session into the page and flush any queued
// submissions when connectivity returns.

import { SurveyApi } from "./api.js";
import { SurveySession } from "./session.js";

function participantKey(): string {
  const existing = sessionStorage.getItem("participant");
  if (existing) return existing;
  const key = Math.random().toString(36).slice(2, 12);
  sessionStorage.setItem("participant", key);
  return key;
}

export function boot(root: HTMLElement): SurveySession {
  const api = new SurveyApi("");
  window.addEventListener("online", () => void api.flushQueue());
  const session = new SurveySession(api, participantKey(), root);
  void session.run().catch((err) => {
    root.replaceChildren();
    const msg = document.createElement("p");
    msg.className = "error";
    msg.textContent = `Something went wrong: ${err}. Please reload.`;
    root.appendChild(msg);
  });
  return session;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot(document.getElementById("app")!);
}
