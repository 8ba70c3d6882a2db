/** Browser bootstrap: read connection details from the query string,
 * build the client/controller/renderer stack, and start polling. */

import { ApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { TaskRenderer } from "./views.js";

function requireParam(params: URLSearchParams, name: string): string {
  const value = params.get(name);
  if (!value) {
    throw new Error(`missing ?${name}= in the page URL`);
  }
  return value;
}

export function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient(params.get("api") ?? "http://127.0.0.1:8800");
  const sessionId = requireParam(params, "session");
  const slot = Number(params.get("slot") ?? "0");
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app element");
  }
  let renderer: TaskRenderer;
  const controller = new SessionController(api, sessionId, {
    showTask: (task) => renderer.showTask(task),
    showWaiting: (stage) => renderer.showWaiting(stage),
    showDone: (result) => renderer.showDone(result),
    showError: (message) => renderer.showError(message),
  }, { slot });
  renderer = new TaskRenderer(root, controller);
  void controller.refresh();
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.addEventListener("DOMContentLoaded", bootstrap);
}
