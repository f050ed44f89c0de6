import { ApiClient, ApiError } from "./api.js";
import type {
  FeedbackLabel,
  ProbeInfo,
  RankingPayload,
  UpdateInfo,
} from "./types.js";

/** Reasons the client refuses to even send a judgment. These mirror the
 * server contract; the server would reject the same requests, but the
 * console must not produce them in the first place. */
export type GuardRefusal =
  | { kind: "unknown_item"; itemId: string }
  | { kind: "outside_window"; position: number; windowK: number }
  | { kind: "budget_exhausted"; used: number; budget: number }
  | { kind: "probe_closed"; reason: string | null }
  | { kind: "busy" };

export interface Notice {
  tone: "info" | "success" | "warn" | "error";
  text: string;
}

export interface ViewState {
  sessionId: string | null;
  probe: ProbeInfo | null;
  ranking: RankingPayload | null;
  lastUpdate: UpdateInfo | null;
  notice: Notice | null;
  busy: boolean;
}

export type SubmitResult =
  | { ok: true; closed: boolean; advanced: boolean }
  | { ok: false; refusal?: GuardRefusal; stale?: boolean; error?: ApiError };

function refusalText(r: GuardRefusal): string {
  switch (r.kind) {
    case "unknown_item":
      return `item ${r.itemId} is not in the current ranking`;
    case "outside_window":
      return `item at position ${r.position} is outside the ${r.windowK}-item window`;
    case "budget_exhausted":
      return `all ${r.budget} judgments for this probe are spent`;
    case "probe_closed":
      return `probe is closed${r.reason ? ` (${r.reason})` : ""}; advance to continue`;
    case "busy":
      return "previous action still in flight";
  }
}

export class SessionController {
  private state: ViewState = {
    sessionId: null,
    probe: null,
    ranking: null,
    lastUpdate: null,
    notice: null,
    busy: false,
  };

  private listeners: Array<(s: ViewState) => void> = [];

  constructor(
    private readonly api: ApiClient,
    private readonly topK: number = 50,
  ) {}

  subscribe(listener: (s: ViewState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      const i = this.listeners.indexOf(listener);
      if (i >= 0) this.listeners.splice(i, 1);
    };
  }

  getState(): ViewState {
    return { ...this.state };
  }

  private set(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const l of this.listeners) l(this.state);
  }

  async open(datasetId: string, options = {}): Promise<void> {
    this.set({ busy: true, notice: null });
    try {
      const opened = await this.api.createSession(datasetId, options);
      const ranking = opened.probe.complete
        ? null
        : await this.api.ranking(opened.session_id, this.topK);
      this.set({
        sessionId: opened.session_id,
        probe: opened.probe,
        ranking,
        lastUpdate: null,
        busy: false,
      });
    } catch (err) {
      this.set({ busy: false, notice: toNotice(err) });
      throw err;
    }
  }

  /** Pure client-side mirror of the server's feedback preconditions. */
  guardFeedback(itemId: string): GuardRefusal | null {
    const { ranking, busy } = this.state;
    if (busy) return { kind: "busy" };
    if (!ranking) return { kind: "unknown_item", itemId };
    if (ranking.closed) return { kind: "probe_closed", reason: ranking.close_reason };
    if (ranking.rounds_used >= ranking.rounds_budget) {
      return {
        kind: "budget_exhausted",
        used: ranking.rounds_used,
        budget: ranking.rounds_budget,
      };
    }
    const entry = ranking.entries.find((e) => e.item_id === itemId);
    if (!entry) return { kind: "unknown_item", itemId };
    if (entry.position >= ranking.window_k) {
      return { kind: "outside_window", position: entry.position, windowK: ranking.window_k };
    }
    return null;
  }

  async submitFeedback(itemId: string, label: FeedbackLabel): Promise<SubmitResult> {
    const refusal = this.guardFeedback(itemId);
    if (refusal) {
      this.set({ notice: { tone: "warn", text: refusalText(refusal) } });
      return { ok: false, refusal };
    }
    const { sessionId, ranking } = this.state;
    if (!sessionId || !ranking) return { ok: false };
    this.set({ busy: true, notice: null });
    try {
      const resp = await this.api.feedback(
        sessionId, ranking.probe_id, itemId, label, ranking.token, this.topK,
      );
      const { update, ...next } = resp;
      this.set({ ranking: next, lastUpdate: update, busy: false });
      let advanced = false;
      if (label === "true_match" && resp.closed) {
        this.set({ notice: { tone: "success", text: `match ${itemId} verified` } });
        await this.advance();
        advanced = true;
      } else if (resp.closed) {
        this.set({
          notice: { tone: "info", text: "budget spent for this probe; advance to continue" },
        });
      }
      return { ok: true, closed: resp.closed, advanced };
    } catch (err) {
      if (err instanceof ApiError && err.code === "stale_ranking") {
        // the model moved under us: show the fresh list, ask for a re-click
        await this.refreshRanking();
        this.set({
          busy: false,
          notice: { tone: "warn", text: "ranking changed while you were looking; try again" },
        });
        return { ok: false, stale: true };
      }
      this.set({ busy: false, notice: toNotice(err) });
      return { ok: false, error: err instanceof ApiError ? err : undefined };
    }
  }

  async advance(): Promise<void> {
    const { sessionId } = this.state;
    if (!sessionId) return;
    this.set({ busy: true });
    try {
      const probe = await this.api.advance(sessionId);
      const ranking = probe.complete ? null : await this.api.ranking(sessionId, this.topK);
      this.set({ probe, ranking, lastUpdate: null, busy: false });
    } catch (err) {
      this.set({ busy: false, notice: toNotice(err) });
    }
  }

  async refreshRanking(): Promise<void> {
    const { sessionId } = this.state;
    if (!sessionId) return;
    const ranking = await this.api.ranking(sessionId, this.topK);
    const probe = await this.api.probe(sessionId);
    this.set({ ranking, probe });
  }
}

function toNotice(err: unknown): Notice {
  if (err instanceof ApiError) {
    return { tone: "error", text: `${err.code}: ${err.message}` };
  }
  return { tone: "error", text: String(err) };
}
