/** Wire types of the session service. Field names mirror the JSON exactly. */

export type FeedbackLabel = "true_match" | "strong_negative";

export interface ProbeInfo {
  complete: boolean;
  probe_id?: string;
  person_id?: string;
  camera_id?: string;
  image_ref?: string;
  feature_digest?: string;
  index?: number;
  probes_total: number;
  rounds_used?: number;
  rounds_budget?: number;
  closed?: boolean;
  close_reason?: string | null;
}

export interface RankingEntry {
  item_id: string;
  score: number;
  position: number;
  camera_id: string;
  image_ref: string;
  feature_digest: string;
}

export interface RankingPayload {
  probe_id: string;
  token: string;
  window_k: number;
  rounds_used: number;
  rounds_budget: number;
  closed: boolean;
  close_reason: string | null;
  entries: RankingEntry[];
}

export interface UpdateInfo {
  applied: boolean;
  rank_at_selection: number;
  loss: number;
  violator_id: string | null;
}

/** Feedback responses are a fresh ranking plus what the update did. */
export interface FeedbackResponse extends RankingPayload {
  update: UpdateInfo;
}

export interface SessionOpened {
  session_id: string;
  probe: ProbeInfo;
}

export interface EffortStats {
  n_probes: number;
  found_matches_pct: number;
  mean_browsed: number;
  mean_feedback: number;
  mean_search_time_sec: number;
  empty?: boolean;
}

export interface SessionReport {
  kind: "session";
  session_id: string;
  config: Record<string, unknown>;
  probes_total: number;
  probes_closed: number;
  complete: boolean;
  verified_matches: number;
  updates_applied: number;
  effort: EffortStats;
}

export interface DatasetBenchSummary {
  median_l2_rank1?: number;
  median_hvil_rank1?: number;
  median_rank1_gain_pp?: number;
  median_er_ratio?: number;
  [key: string]: unknown;
}

export interface BenchReport {
  kind?: string;
  summary?: DatasetBenchSummary;
  [key: string]: unknown;
}

export interface ErrorBody {
  error: string;
  detail: string;
}
