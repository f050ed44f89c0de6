import { ApiClient } from "./api.js";
import { SessionController } from "./state.js";
import { renderApp, renderDashboard } from "./render.js";

/** Browser entry point. Everything testable lives in the other modules;
 * this file only wires DOM events to the controller and animates the
 * re-rank with the usual first/last/invert/play trick. */

const api = new ApiClient("");
const controller = new SessionController(api, 50);

const params = new URLSearchParams(window.location.search);
const dataset = params.get("dataset") ?? "demo";

const root = document.getElementById("app");
const dashRoot = document.getElementById("dashboard");
const fileUrl = (ref: string) => api.fileUrl(dataset, ref);

function capturePositions(): Map<string, DOMRect> {
  const rects = new Map<string, DOMRect>();
  if (!root) return rects;
  for (const el of root.querySelectorAll<HTMLElement>("[data-item-id]")) {
    const id = el.dataset.itemId;
    if (id) rects.set(id, el.getBoundingClientRect());
  }
  return rects;
}

function playMoves(before: Map<string, DOMRect>): void {
  if (!root) return;
  for (const el of root.querySelectorAll<HTMLElement>("[data-item-id]")) {
    const id = el.dataset.itemId;
    const prev = id ? before.get(id) : undefined;
    if (!prev) continue;
    const next = el.getBoundingClientRect();
    const dx = prev.left - next.left;
    const dy = prev.top - next.top;
    if (dx === 0 && dy === 0) continue;
    el.style.transform = `translate(${dx}px, ${dy}px)`;
    el.style.transition = "none";
    requestAnimationFrame(() => {
      el.style.transform = "";
      el.style.transition = "transform 240ms ease";
    });
  }
}

function draw(): void {
  if (!root) return;
  const before = capturePositions();
  root.innerHTML = renderApp(controller.getState(), fileUrl);
  playMoves(before);
}

async function drawDashboard(): Promise<void> {
  const sid = controller.getState().sessionId;
  if (!dashRoot || !sid) return;
  try {
    dashRoot.innerHTML = renderDashboard(await api.report(sid));
  } catch {
    // dashboard is best-effort; the main view already surfaces errors
  }
}

controller.subscribe(draw);

root?.addEventListener("click", (ev) => {
  const target = (ev.target as HTMLElement).closest<HTMLElement>("[data-action]");
  if (!target) return;
  const action = target.dataset.action;
  if (action === "advance") {
    void controller.advance().then(drawDashboard);
    return;
  }
  const itemId = target.dataset.itemId;
  if (!itemId) return;
  const label = action === "match" ? "true_match" : "strong_negative";
  void controller.submitFeedback(itemId, label).then(drawDashboard);
});

void controller.open(dataset).then(drawDashboard).catch(() => {
  // controller already posted the error notice
});
