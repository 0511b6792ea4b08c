// Bootstrap: #review (default) or #report, with the API base URL and
// annotator id taken from query parameters.

import { ReviewApi } from "./api.js";
import { renderReport } from "./report.js";
import { ReviewView } from "./review.js";
import { VoteSession } from "./state.js";

function setting(name: string, fallback: string): string {
  const params = new URLSearchParams(window.location.search);
  return params.get(name) ?? fallback;
}

export async function start(root: HTMLElement): Promise<void> {
  const api = new ReviewApi(setting("api", ""));
  if (window.location.hash === "#report") {
    await renderReport(root, api);
    return;
  }
  const annotator = setting("annotator", "");
  if (!annotator) {
    root.innerHTML = `<p class="error">Add ?annotator=YOUR_ID to the URL to start reviewing.</p>`;
    return;
  }
  const view = new ReviewView(root, api, new VoteSession(api, annotator));
  window.addEventListener("keydown", (event) => view.handleKey(event.key));
  await view.load();
}

const root = document.getElementById("app");
if (root) {
  void start(root);
}
