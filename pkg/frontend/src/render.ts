import { glyphSvg } from "./glyph.js";
import type {
  ProbeInfo,
  RankingEntry,
  RankingPayload,
  SessionReport,
} from "./types.js";
import type { Notice, ViewState } from "./state.js";

/** Renderers are pure string -> string so the grid order and the counters
 * can be asserted verbatim against recorded server payloads. */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function thumb(digest: string, imageRef: string, fileUrl: (ref: string) => string): string {
  if (imageRef) {
    return `<img class="thumb" src="${escapeHtml(fileUrl(imageRef))}" alt="item image" loading="lazy">`;
  }
  return `<span class="thumb">${glyphSvg(digest, 64)}</span>`;
}

export function renderProbeCard(
  probe: ProbeInfo,
  fileUrl: (ref: string) => string,
): string {
  if (probe.complete) {
    return `<section class="probe-card done"><h2>session complete</h2>
<p>all ${probe.probes_total} probes reviewed</p></section>`;
  }
  const closed = probe.closed
    ? `<span class="badge closed">closed${probe.close_reason ? `: ${escapeHtml(probe.close_reason)}` : ""}</span>`
    : "";
  return `<section class="probe-card" data-probe-id="${escapeHtml(probe.probe_id ?? "")}">
${thumb(probe.feature_digest ?? "", probe.image_ref ?? "", fileUrl)}
<div class="probe-meta">
<h2>probe ${escapeHtml(probe.probe_id ?? "")}</h2>
<p>person ${escapeHtml(probe.person_id ?? "")} &middot; camera ${escapeHtml(probe.camera_id ?? "")}</p>
<p>probe ${(probe.index ?? 0) + 1} of ${probe.probes_total}</p>
${renderRoundCounter(probe.rounds_used ?? 0, probe.rounds_budget ?? 0)}
${closed}
</div></section>`;
}

export function renderRoundCounter(used: number, budget: number): string {
  return `<p class="rounds" data-rounds-used="${used}" data-rounds-budget="${budget}">rounds ${used} / ${budget}</p>`;
}

function entryCard(
  entry: RankingEntry,
  windowK: number,
  actionable: boolean,
  fileUrl: (ref: string) => string,
): string {
  const inWindow = entry.position < windowK;
  const buttons = inWindow && actionable
    ? `<div class="actions">
<button type="button" data-action="match" data-item-id="${escapeHtml(entry.item_id)}">match</button>
<button type="button" data-action="reject" data-item-id="${escapeHtml(entry.item_id)}">not the one</button>
</div>`
    : `<div class="actions muted">${inWindow ? "closed" : "outside window"}</div>`;
  return `<li class="entry${inWindow ? "" : " dimmed"}" data-item-id="${escapeHtml(entry.item_id)}" data-position="${entry.position}">
${thumb(entry.feature_digest, entry.image_ref, fileUrl)}
<div class="entry-meta">
<span class="rank">#${entry.position + 1}</span>
<span class="score">${entry.score.toFixed(4)}</span>
<span class="camera">cam ${escapeHtml(entry.camera_id)}</span>
</div>
${buttons}
</li>`;
}

export function renderGrid(
  ranking: RankingPayload | null,
  fileUrl: (ref: string) => string,
): string {
  if (!ranking) return `<p class="empty">no ranking to show</p>`;
  if (ranking.entries.length === 0) {
    return `<p class="empty" data-empty-gallery>gallery is empty; nothing to rank</p>`;
  }
  const actionable = !ranking.closed && ranking.rounds_used < ranking.rounds_budget;
  const cards = ranking.entries
    .map((e) => entryCard(e, ranking.window_k, actionable, fileUrl))
    .join("\n");
  return `<ol class="grid" data-token="${escapeHtml(ranking.token)}" data-probe-id="${escapeHtml(ranking.probe_id)}">
${cards}
</ol>`;
}

export function renderNotice(notice: Notice | null): string {
  if (!notice) return "";
  return `<p class="notice ${notice.tone}" role="status">${escapeHtml(notice.text)}</p>`;
}

export function renderDashboard(report: SessionReport): string {
  if (report.probes_total === 0 || report.effort.empty) {
    return `<section class="dashboard" data-zero-state>
<h2>session ${escapeHtml(report.session_id)}</h2>
<p class="empty">no probes reviewed yet</p>
</section>`;
  }
  const e = report.effort;
  const rows: Array<[string, string]> = [
    ["probes closed", `${report.probes_closed} / ${report.probes_total}`],
    ["verified matches", String(report.verified_matches)],
    ["updates applied", String(report.updates_applied)],
    ["found matches", `${(e.found_matches_pct ?? 0).toFixed(1)}%`],
    ["mean browsed", (e.mean_browsed ?? 0).toFixed(2)],
    ["mean feedback", (e.mean_feedback ?? 0).toFixed(2)],
  ];
  const cells = rows
    .map(([k, v]) => `<div class="stat"><dt>${k}</dt><dd>${v}</dd></div>`)
    .join("\n");
  return `<section class="dashboard">
<h2>session ${escapeHtml(report.session_id)}</h2>
<dl class="stats">
${cells}
</dl>
</section>`;
}

export function renderApp(
  state: ViewState,
  fileUrl: (ref: string) => string,
): string {
  const probe = state.probe
    ? renderProbeCard(state.probe, fileUrl)
    : `<p class="empty">no session open</p>`;
  const advance =
    state.probe && !state.probe.complete && state.ranking?.closed
      ? `<button type="button" class="advance" data-action="advance">next probe</button>`
      : "";
  return `${renderNotice(state.notice)}
${probe}
${advance}
${state.probe?.complete ? "" : renderGrid(state.ranking, fileUrl)}`;
}
