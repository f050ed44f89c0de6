"""Search-session state, persistence, and the simulated benchmark.

A session walks a fixed probe order over one dataset, carrying a single
metric model that every accepted feedback event updates in place. Probe
closes (match confirmed, budget exhausted, or manually advanced) snapshot
the model into a weak-model series for later ensemble training. All
mutations go straight to disk, so a process restart resumes with
byte-identical state and therefore identical subsequent rankings.
"""

from __future__ import annotations

import json
import statistics
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import (
    Dataset,
    FeedbackEvent,
    FeedbackLabel,
    append_event_jsonl,
    feature_digest,
    load_dataset,
    read_events_jsonl,
)
from .evaluation import (
    cmc,
    effort_stats,
    exhaustive_browsed,
    expected_rank,
    mean_average_precision,
    report_to_json,
    write_cmc_csv,
    write_report,
)
from .hvil import (
    HvilConfig,
    MetricModel,
    ModelNotPositiveDefinite,
    ProbeOutcome,
    hvil_update,
    load_model,
    rank_gallery,
    run_probe_session,
    save_model,
)
from .oracle import OraclePolicy, SimulatedAnnotator
from .ranking import RankedList, order_by_score, rank_of
from .rmel import (
    EnsembleModel,
    RmelConfig,
    average_ensemble,
    build_training_pairs,
    distance_matrix,
    ensemble_scores,
    save_ensemble,
    train_rmel,
)
from .synthetic import SyntheticSpec, gen_synthetic


class SessionError(Exception):
    """Session-protocol violation with a machine-readable code."""

    def __init__(self, code: str, message: str, http_status: int = 409):
        super().__init__(message)
        self.code = code
        self.http_status = http_status


@dataclass(frozen=True)
class SessionConfig:
    dataset_id: str
    eta: float = 0.5
    margin: float = 1.0
    max_rounds_per_probe: int = 3
    window_k: int = 50
    top_k_default: int = 50
    seed: int = 0

    def hvil(self) -> HvilConfig:
        return HvilConfig(
            eta=self.eta,
            margin=self.margin,
            max_rounds_per_probe=self.max_rounds_per_probe,
            window_k=self.window_k,
        )

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "eta": self.eta,
            "margin": self.margin,
            "max_rounds_per_probe": self.max_rounds_per_probe,
            "window_k": self.window_k,
            "top_k_default": self.top_k_default,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(raw: dict) -> "SessionConfig":
        return SessionConfig(
            dataset_id=raw["dataset_id"],
            eta=float(raw.get("eta", 0.5)),
            margin=float(raw.get("margin", 1.0)),
            max_rounds_per_probe=int(raw.get("max_rounds_per_probe", 3)),
            window_k=int(raw.get("window_k", 50)),
            top_k_default=int(raw.get("top_k_default", 50)),
            seed=int(raw.get("seed", 0)),
        )


@dataclass
class ProbeState:
    rounds_used: int = 0
    closed: bool = False
    close_reason: Optional[str] = None


class Session:
    """One interactive search session. Not thread-safe on its own; the
    store serialises all mutating calls through a per-session lock."""

    def __init__(self, session_id: str, root: Path, dataset: Dataset, config: SessionConfig):
        self.id = session_id
        self.root = root
        self.dataset = dataset
        self.config = config
        self.model = MetricModel.identity(dataset.dim)
        self.cursor = 0
        self.probe_states = [ProbeState() for _ in dataset.probes]
        self.verified: list[tuple[str, str]] = []  # (probe_id, item_id)
        self.weak_count = 0
        self.lock = threading.Lock()

    # -- properties ---------------------------------------------------------

    @property
    def complete(self) -> bool:
        return self.cursor >= len(self.dataset.probes)

    def _current_probe(self):
        if self.complete:
            return None
        return self.dataset.probes[self.cursor]

    def _token(self) -> str:
        state = self.probe_states[self.cursor] if not self.complete else None
        rounds = state.rounds_used if state else 0
        probe = self._current_probe()
        pid = probe.item_id if probe else "-"
        return f"{pid}:{self.model.updates_applied}:{rounds}"

    # -- read ops ------------------------------------------------------------

    def probe_info(self) -> dict:
        probe = self._current_probe()
        if probe is None:
            return {"complete": True, "probes_total": len(self.dataset.probes)}
        state = self.probe_states[self.cursor]
        return {
            "complete": False,
            "probe_id": probe.item_id,
            "person_id": probe.person_id,
            "camera_id": probe.camera_id,
            "image_ref": probe.image_ref,
            "feature_digest": feature_digest(probe.feature),
            "index": self.cursor,
            "probes_total": len(self.dataset.probes),
            "rounds_used": state.rounds_used,
            "rounds_budget": self.config.max_rounds_per_probe,
            "closed": state.closed,
            "close_reason": state.close_reason,
        }

    def ranking(self, top_k: Optional[int] = None) -> dict:
        probe = self._current_probe()
        if probe is None:
            raise SessionError("session_complete", "all probes are closed", 409)
        k = top_k if top_k is not None else self.config.top_k_default
        if k < 1:
            raise SessionError("bad_top_k", "top_k must be at least 1", 422)
        ranked = rank_gallery(probe, self.dataset.gallery, self.model)
        return self._ranking_payload(probe, ranked, k)

    def _ranking_payload(self, probe, ranked: RankedList, k: int) -> dict:
        state = self.probe_states[self.cursor]
        top = ranked.top(k)
        entries = []
        for pos, iid in enumerate(top.ids):
            item = self.dataset.gallery.item(iid)
            entries.append(
                {
                    "item_id": iid,
                    "score": float(top.scores[pos]),
                    "position": pos,
                    "camera_id": item.camera_id,
                    "image_ref": item.image_ref,
                    "feature_digest": feature_digest(item.feature),
                }
            )
        return {
            "probe_id": probe.item_id,
            "token": self._token(),
            "window_k": self.config.window_k,
            "rounds_used": state.rounds_used,
            "rounds_budget": self.config.max_rounds_per_probe,
            "closed": state.closed,
            "close_reason": state.close_reason,
            "entries": entries,
        }

    # -- mutations -----------------------------------------------------------

    def submit_feedback(self, probe_id: str, item_id: str, label: FeedbackLabel,
                        token: str, top_k: Optional[int] = None) -> dict:
        probe = self._current_probe()
        if probe is None:
            raise SessionError("session_complete", "all probes are closed", 409)
        if probe_id != probe.item_id:
            raise SessionError(
                "wrong_probe", f"current probe is {probe.item_id!r}, not {probe_id!r}", 409
            )
        state = self.probe_states[self.cursor]
        if state.closed:
            raise SessionError("probe_closed", f"probe {probe_id!r} is closed", 409)
        if token != self._token():
            raise SessionError(
                "stale_ranking", "ranking token is stale; re-fetch the ranking", 409
            )
        if state.rounds_used >= self.config.max_rounds_per_probe:
            raise SessionError("budget_exhausted", "feedback budget for this probe is spent", 409)
        if item_id not in self.dataset.gallery.index:
            raise SessionError("unknown_item", f"no gallery item {item_id!r}", 404)
        ranked = rank_gallery(probe, self.dataset.gallery, self.model)
        position = ranked.position_of(item_id)
        if position >= self.config.window_k:
            raise SessionError(
                "outside_window",
                f"item {item_id!r} at position {position} is outside the "
                f"presented window of {self.config.window_k}",
                422,
            )
        event = FeedbackEvent(
            probe_id=probe_id,
            item_id=item_id,
            label=label,
            rank_at_selection=rank_of(ranked, item_id),
            wall_time=time.time(),
        )
        try:
            self.model, ctx = hvil_update(self.model, probe, self.dataset.gallery, event,
                                          self.config.hvil())
        except ModelNotPositiveDefinite as exc:
            # refuse atomically: no round charged, no event logged, and the
            # token stays valid, so the annotator can label something else
            raise SessionError("model_diverged", str(exc), 409) from exc
        state.rounds_used += 1
        append_event_jsonl(self.root / "events.jsonl", event)
        if label is FeedbackLabel.TRUE_MATCH:
            self.verified.append((probe_id, item_id))
            self._close_probe(state, "true_match")
        elif state.rounds_used >= self.config.max_rounds_per_probe:
            self._close_probe(state, "budget_exhausted")
        self._save()
        k = top_k if top_k is not None else self.config.top_k_default
        payload = self._ranking_payload(probe, rank_gallery(probe, self.dataset.gallery, self.model), k)
        payload["update"] = {
            "applied": ctx.applied,
            "rank_at_selection": event.rank_at_selection,
            "loss": ctx.loss,
            "violator_id": ctx.violator_id,
        }
        return payload

    def advance(self) -> dict:
        if not self.complete:
            state = self.probe_states[self.cursor]
            if not state.closed:
                self._close_probe(state, "advanced")
            self.cursor += 1
            self._save()
        return self.probe_info()

    def _close_probe(self, state: ProbeState, reason: str) -> None:
        state.closed = True
        state.close_reason = reason
        weak_dir = self.root / "weak"
        weak_dir.mkdir(exist_ok=True)
        save_model(weak_dir / f"{self.weak_count:05d}.hvm", self.model)
        self.weak_count += 1

    def train_ensemble(self, config: RmelConfig = RmelConfig()) -> dict:
        weak = self.weak_models()
        if not weak:
            raise SessionError("no_weak_models", "no completed probes to ensemble", 409)
        if not self.verified:
            raise SessionError("no_verified_pairs", "no confirmed matches to train on", 409)
        probes_by_id = {p.item_id: p for p in self.dataset.probes}
        identities = {probes_by_id[pid].person_id for pid, _ in self.verified}
        if len(identities) < 2:
            raise SessionError(
                "degenerate_identities",
                "ensemble training needs verified matches from at least 2 identities",
                409,
            )
        p_feats = np.stack([probes_by_id[pid].feature for pid, _ in self.verified])
        p_persons = [probes_by_id[pid].person_id for pid, _ in self.verified]
        g_feats = np.stack([self.dataset.gallery.item(gid).feature for _, gid in self.verified])
        g_persons = [self.dataset.gallery.item(gid).person_id for _, gid in self.verified]
        d_rows, same = build_training_pairs(p_feats, p_persons, g_feats, g_persons, weak)
        result = train_rmel(d_rows, same, config)
        ensemble = EnsembleModel(result.weights, weak)
        ens_dir = self.root / "ensembles"
        ens_dir.mkdir(exist_ok=True)
        ensemble_id = f"ens-{uuid.uuid4().hex[:12]}"
        save_ensemble(ens_dir / f"{ensemble_id}.rme", ensemble)
        return {
            "ensemble_id": ensemble_id,
            "n_weak_models": len(weak),
            "n_pairs": int(d_rows.shape[0]),
            "objective_initial": result.objective_initial,
            "objective_final": result.objective_final,
            "iterations": result.iterations,
        }

    def weak_models(self) -> list[MetricModel]:
        weak_dir = self.root / "weak"
        if not weak_dir.exists():
            return []
        return [load_model(p) for p in sorted(weak_dir.glob("*.hvm"))]

    def report(self) -> dict:
        events = self.events()
        n = len(self.dataset.probes)
        closed = sum(1 for s in self.probe_states if s.closed)
        return {
            "kind": "session",
            "session_id": self.id,
            "config": self.config.to_dict(),
            "probes_total": n,
            "probes_closed": closed,
            "complete": self.complete,
            "verified_matches": len(self.verified),
            "updates_applied": self.model.updates_applied,
            "effort": effort_stats(events, n).to_dict(),
        }

    def events(self) -> list[FeedbackEvent]:
        path = self.root / "events.jsonl"
        return read_events_jsonl(path) if path.exists() else []

    # -- persistence ---------------------------------------------------------

    def _save(self) -> None:
        save_model(self.root / "model.hvm", self.model)
        state = {
            "session_id": self.id,
            "config": self.config.to_dict(),
            "cursor": self.cursor,
            "weak_count": self.weak_count,
            "verified": self.verified,
            "probe_states": [
                {"rounds_used": s.rounds_used, "closed": s.closed, "close_reason": s.close_reason}
                for s in self.probe_states
            ],
        }
        tmp = self.root / "session.json.tmp"
        tmp.write_text(json.dumps(state, sort_keys=True, indent=2))
        tmp.replace(self.root / "session.json")

    @staticmethod
    def load(root: Path, dataset: Dataset) -> "Session":
        raw = json.loads((root / "session.json").read_text())
        config = SessionConfig.from_dict(raw["config"])
        sess = Session(raw["session_id"], root, dataset, config)
        sess.model = load_model(root / "model.hvm")
        sess.cursor = raw["cursor"]
        sess.weak_count = raw["weak_count"]
        sess.verified = [tuple(v) for v in raw["verified"]]
        sess.probe_states = [
            ProbeState(s["rounds_used"], s["closed"], s["close_reason"])
            for s in raw["probe_states"]
        ]
        return sess


class SessionStore:
    """Directory-backed registry of datasets and sessions."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "datasets").mkdir(parents=True, exist_ok=True)
        (self.root / "reports").mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._datasets: dict[str, Dataset] = {}
        # reentrant: session() loads datasets via dataset() while holding it
        self._lock = threading.RLock()

    def dataset_dir(self, dataset_id: str) -> Path:
        return self.root / "datasets" / dataset_id

    def dataset(self, dataset_id: str) -> Dataset:
        with self._lock:
            if dataset_id not in self._datasets:
                path = self.dataset_dir(dataset_id)
                if not path.exists():
                    raise SessionError("unknown_dataset", f"no dataset {dataset_id!r}", 404)
                self._datasets[dataset_id] = load_dataset(path)
            return self._datasets[dataset_id]

    def create_session(self, config: SessionConfig) -> Session:
        dataset = self.dataset(config.dataset_id)
        session_id = f"sess-{uuid.uuid4().hex[:12]}"
        root = self.root / "sessions" / session_id
        root.mkdir(parents=True)
        sess = Session(session_id, root, dataset, config)
        sess._save()
        with self._lock:
            self._sessions[session_id] = sess
        return sess

    def session(self, session_id: str) -> Session:
        with self._lock:
            if session_id not in self._sessions:
                root = self.root / "sessions" / session_id
                if not (root / "session.json").exists():
                    raise SessionError("unknown_session", f"no session {session_id!r}", 404)
                raw = json.loads((root / "session.json").read_text())
                dataset = self.dataset(raw["config"]["dataset_id"])
                self._sessions[session_id] = Session.load(root, dataset)
            return self._sessions[session_id]

    def report_path(self, report_id: str) -> Path:
        return self.root / "reports" / f"{report_id}.json"


# ---------------------------------------------------------------------------
# simulated benchmark

@dataclass(frozen=True)
class BenchmarkConfig:
    """Protocol constants for the simulated-feedback benchmark.

    The defaults are the calibrated acceptance protocol: a two-view
    synthetic population hard enough that plain L2 lands in the 10-30%
    Rank-1 band, a learning rate low enough that long strong-negative
    streaks cannot inflate the metric without bound, and an ensemble
    phase that pools the finals of several independent sessions so the
    weak models are genuinely diverse."""

    synthetic: SyntheticSpec = SyntheticSpec(
        n_identities=300, dim=64, sigma_min=0.1, sigma_max=2.4,
        view_skew=3.5, skew_rank=8,
    )
    eta: float = 0.1
    margin: float = 1.0
    max_rounds_per_probe: int = 3
    window_k: int = 50
    noise_rate: float = 0.0
    strongness_quantile: float = 0.9
    n_hil_probes: int = 100
    ensemble_sessions: int = 6
    seeds: tuple[int, ...] = tuple(range(10))
    rmel: RmelConfig = RmelConfig(nu=0.1, step=1e-10, max_iters=50, tol=1e-12)
    dataset_path: Optional[str] = None  # use an on-disk dataset instead of synthesising

    def hvil(self) -> HvilConfig:
        return HvilConfig(eta=self.eta, margin=self.margin,
                          max_rounds_per_probe=self.max_rounds_per_probe,
                          window_k=self.window_k)

    def oracle(self, seed: int) -> OraclePolicy:
        return OraclePolicy(window_k=self.window_k, max_rounds=self.max_rounds_per_probe,
                            noise_rate=self.noise_rate,
                            strongness_quantile=self.strongness_quantile, seed=seed)

    def to_dict(self) -> dict:
        d = {
            "synthetic": {
                "n_identities": self.synthetic.n_identities,
                "dim": self.synthetic.dim,
                "sigma_min": self.synthetic.sigma_min,
                "sigma_max": self.synthetic.sigma_max,
                "view_skew": self.synthetic.view_skew,
                "skew_rank": self.synthetic.skew_rank,
                "normalize": self.synthetic.normalize,
            },
            "eta": self.eta,
            "margin": self.margin,
            "max_rounds_per_probe": self.max_rounds_per_probe,
            "window_k": self.window_k,
            "noise_rate": self.noise_rate,
            "strongness_quantile": self.strongness_quantile,
            "n_hil_probes": self.n_hil_probes,
            "ensemble_sessions": self.ensemble_sessions,
            "seeds": list(self.seeds),
            "rmel": {
                "nu": self.rmel.nu,
                "step": self.rmel.step,
                "max_iters": self.rmel.max_iters,
                "tol": self.rmel.tol,
                "init": self.rmel.init,
                "seed": self.rmel.seed,
            },
            "dataset_path": self.dataset_path,
        }
        return d

    @staticmethod
    def from_dict(raw: dict) -> "BenchmarkConfig":
        syn = raw.get("synthetic", {})
        rmel = raw.get("rmel", {})
        return BenchmarkConfig(
            synthetic=SyntheticSpec(
                n_identities=int(syn.get("n_identities", 300)),
                dim=int(syn.get("dim", 64)),
                sigma_min=float(syn.get("sigma_min", 0.1)),
                sigma_max=float(syn.get("sigma_max", 2.4)),
                view_skew=float(syn.get("view_skew", 3.5)),
                skew_rank=int(syn.get("skew_rank", 8)),
                normalize=bool(syn.get("normalize", True)),
            ),
            eta=float(raw.get("eta", 0.1)),
            margin=float(raw.get("margin", 1.0)),
            max_rounds_per_probe=int(raw.get("max_rounds_per_probe", 3)),
            window_k=int(raw.get("window_k", 50)),
            noise_rate=float(raw.get("noise_rate", 0.0)),
            strongness_quantile=float(raw.get("strongness_quantile", 0.9)),
            n_hil_probes=int(raw.get("n_hil_probes", 100)),
            ensemble_sessions=int(raw.get("ensemble_sessions", 6)),
            seeds=tuple(int(s) for s in raw.get("seeds", range(10))),
            rmel=RmelConfig(
                nu=float(rmel.get("nu", 0.1)),
                step=float(rmel.get("step", 1e-10)),
                max_iters=int(rmel.get("max_iters", 50)),
                tol=float(rmel.get("tol", 1e-12)),
                init=str(rmel.get("init", "identity")),
                seed=int(rmel.get("seed", 0)),
            ),
            dataset_path=raw.get("dataset_path"),
        )


def _benchmark_dataset(config: BenchmarkConfig, seed: int) -> Dataset:
    if config.dataset_path:
        return load_dataset(config.dataset_path)
    return gen_synthetic(config.synthetic, seed)


@dataclass
class SeedRun:
    """Everything one seed produced, before report flattening."""

    seed: int
    outcomes: list[ProbeOutcome]
    events: list[FeedbackEvent]
    l2_lists: dict[str, RankedList]
    final_lists: dict[str, RankedList]
    matches: dict[str, frozenset[str]]
    weak: list[MetricModel]
    verified: list[tuple[str, str]]


def _run_hil_pass(
    dataset: Dataset,
    probes: Sequence,
    hvil_cfg: HvilConfig,
    source_factory,
    seed: int,
) -> SeedRun:
    """Shared core for live benchmark runs and log replays: the source
    factory decides where feedback comes from."""
    gallery = dataset.gallery
    matches = {p.item_id: dataset.matches_of(p) for p in probes}
    model = MetricModel.identity(dataset.dim)
    l2_lists = {p.item_id: rank_gallery(p, gallery, None) for p in probes}
    outcomes: list[ProbeOutcome] = []
    events: list[FeedbackEvent] = []
    final_lists: dict[str, RankedList] = {}
    weak: list[MetricModel] = []
    verified: list[tuple[str, str]] = []
    for i, probe in enumerate(probes):
        source = source_factory(i, probe)
        outcome = run_probe_session(model, probe, gallery, source, hvil_cfg,
                                    match_ids=matches[probe.item_id])
        model = outcome.model
        weak.append(model.copy())
        final_lists[probe.item_id] = rank_gallery(probe, gallery, model)
        outcomes.append(outcome)
        events.extend(outcome.events)
        if outcome.verified_match is not None:
            verified.append((probe.item_id, outcome.verified_match))
    return SeedRun(seed, outcomes, events, l2_lists, final_lists, matches, weak, verified)


def _quartile_prefeedback(outcomes: Sequence[ProbeOutcome]) -> tuple[float, float]:
    """Mean 1-based pre-feedback rank of the best match over the first
    and last quartile of the probe order."""
    ranks = [o.initial_rank_of_match for o in outcomes if o.initial_rank_of_match is not None]
    q = max(1, len(ranks) // 4)
    first = sum(r + 1 for r in ranks[:q]) / q
    last = sum(r + 1 for r in ranks[-q:]) / q
    return first, last


def _rank1(lists: dict[str, RankedList], matches: dict[str, frozenset[str]]) -> float:
    return float(cmc(lists, matches, max_rank=1)[0])


def _split_shares(n_probes: int, n_sessions: int) -> list[list[int]]:
    """Contiguous near-equal shares of the probe order, empty ones dropped."""
    if n_sessions < 1:
        raise ValueError("ensemble_sessions must be at least 1")
    shares = np.array_split(np.arange(n_probes), n_sessions)
    return [[int(i) for i in share] for share in shares if len(share)]


def _pool_from_splits(split_runs: Sequence[SeedRun]) -> tuple[list[MetricModel], list[tuple[str, str]]]:
    """Weak pool for the ensemble phase: the final metric of each split
    session, plus the union of the pairs those sessions verified. Every
    probe belongs to exactly one split, so the union is a plain merge."""
    pool = [r.weak[-1] for r in split_runs]
    verified = sorted(pair for r in split_runs for pair in r.verified)
    return pool, verified


def _seed_report(run: SeedRun, config: BenchmarkConfig, dataset: Dataset,
                 hol_probes: Sequence, pool: Sequence[MetricModel],
                 pool_verified: Sequence[tuple[str, str]]) -> dict:
    matches = run.matches
    l2_rank1 = _rank1(run.l2_lists, matches)
    hvil_rank1 = _rank1(run.final_lists, matches)
    l2_er = expected_rank(run.l2_lists, matches)
    hvil_er = expected_rank(run.final_lists, matches)
    first_q, last_q = _quartile_prefeedback(run.outcomes)
    effort = effort_stats(run.events, n_probes=len(run.outcomes))
    report = {
        "seed": run.seed,
        "hil": {
            "l2_rank1": l2_rank1,
            "hvil_rank1": hvil_rank1,
            "l2_er": l2_er,
            "hvil_er": hvil_er,
            "l2_map": mean_average_precision(run.l2_lists, matches),
            "hvil_map": mean_average_precision(run.final_lists, matches),
            "prefeedback_er_first_quartile": first_q,
            "prefeedback_er_last_quartile": last_q,
            "es_browsed": exhaustive_browsed(run.l2_lists, matches),
            "effort": effort.to_dict(),
            "verified_matches": len(run.verified),
        },
    }

    if hol_probes and pool:
        hol_matches = {p.item_id: dataset.matches_of(p) for p in hol_probes}
        gallery = dataset.gallery
        pool = list(pool)
        m_tau = pool[-1]
        m_avg = average_ensemble(pool)
        variants = {
            "l2": {p.item_id: rank_gallery(p, gallery, None) for p in hol_probes},
            "m_tau": {p.item_id: rank_gallery(p, gallery, m_tau) for p in hol_probes},
            "m_avg": {p.item_id: rank_gallery(p, gallery, m_avg) for p in hol_probes},
        }
        hol: dict = {
            name: {"rank1": _rank1(lists, hol_matches), "er": expected_rank(lists, hol_matches)}
            for name, lists in variants.items()
        }
        if pool_verified:
            probes_by_id = {p.item_id: p for p in dataset.probes}
            p_feats = np.stack([probes_by_id[pid].feature for pid, _ in pool_verified])
            p_persons = [probes_by_id[pid].person_id for pid, _ in pool_verified]
            g_feats = np.stack([gallery.item(gid).feature for _, gid in pool_verified])
            g_persons = [gallery.item(gid).person_id for _, gid in pool_verified]
            d_rows, same = build_training_pairs(p_feats, p_persons, g_feats, g_persons, pool)
            result = train_rmel(d_rows, same, config.rmel)
            ensemble = EnsembleModel(result.weights, pool)
            hol_feats = np.stack([p.feature for p in hol_probes])
            cube = distance_matrix(hol_feats, gallery.features, pool)
            flat = cube.reshape(-1, len(pool))
            score_rows = ensemble_scores(flat, result.weights).reshape(len(hol_probes), -1)
            rmel_lists = {}
            for idx, p in enumerate(hol_probes):
                order = order_by_score(gallery.ids, score_rows[idx])
                rmel_lists[p.item_id] = RankedList(
                    tuple(gallery.ids[j] for j in order), score_rows[idx][order]
                )
            min_eig = float(np.linalg.eigvalsh((result.weights + result.weights.T) / 2).min())
            hol["rmel"] = {
                "rank1": _rank1(rmel_lists, hol_matches),
                "er": expected_rank(rmel_lists, hol_matches),
                "objective_initial": result.objective_initial,
                "objective_final": result.objective_final,
                "iterations": result.iterations,
                "weights_min_eigenvalue": min_eig,
                "n_models": len(pool),
                "n_pairs": int(d_rows.shape[0]),
            }
        report["hol"] = hol
    return report


def run_simulated_benchmark(config: BenchmarkConfig, out_dir: str | Path) -> dict:
    """Run the oracle-driven protocol over every seed, write logs, CMC
    exports, and a canonical report.json; returns the report dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = []
    curves: dict[str, np.ndarray] = {}
    for seed in config.seeds:
        dataset = _benchmark_dataset(config, seed)
        probes = dataset.probes[: config.n_hil_probes]
        hol_probes = dataset.probes[config.n_hil_probes:]
        policy = config.oracle(seed)

        def live_source(i: int, probe):
            return SimulatedAnnotator(dataset, probe, policy, probe_index=i)

        run = _run_hil_pass(dataset, probes, config.hvil(), live_source, seed)

        # Ensemble phase: the same probes again, partitioned into fresh
        # independent sessions whose finals form the weak-model pool.
        shares = _split_shares(len(probes), config.ensemble_sessions)
        split_runs = []
        for share in shares:
            def split_source(j: int, probe, _share=share):
                return SimulatedAnnotator(dataset, probe, policy, probe_index=_share[j])

            split_runs.append(
                _run_hil_pass(dataset, [probes[i] for i in share],
                              config.hvil(), split_source, seed)
            )
        pool, pool_verified = _pool_from_splits(split_runs)

        seed_dir = out / "runs" / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        with open(seed_dir / "events.jsonl", "w") as fh:
            for ev in run.events:
                fh.write(ev.to_json() + "\n")
        (seed_dir / "run.json").write_text(
            report_to_json({
                "seed": seed,
                "config": config.to_dict(),
                "probe_order": [p.item_id for p in probes],
                "splits": [[probes[i].item_id for i in share] for share in shares],
            })
        )
        weak_dir = seed_dir / "weak"
        weak_dir.mkdir(exist_ok=True)
        for i, m in enumerate(run.weak):
            save_model(weak_dir / f"{i:05d}.hvm", m)
        (seed_dir / "verified.json").write_text(
            json.dumps(run.verified, sort_keys=True, indent=2)
        )
        pool_dir = seed_dir / "pool"
        pool_dir.mkdir(exist_ok=True)
        for k, (split, m) in enumerate(zip(split_runs, pool)):
            split_dir = seed_dir / "splits" / f"{k:02d}"
            split_dir.mkdir(parents=True, exist_ok=True)
            with open(split_dir / "events.jsonl", "w") as fh:
                for ev in split.events:
                    fh.write(ev.to_json() + "\n")
            save_model(pool_dir / f"{k:02d}.hvm", m)
        (pool_dir / "verified.json").write_text(
            json.dumps(pool_verified, sort_keys=True, indent=2)
        )
        per_seed.append(_seed_report(run, config, dataset, hol_probes, pool, pool_verified))
        if seed == config.seeds[0]:
            curves["l2"] = cmc(run.l2_lists, run.matches)
            curves["hvil"] = cmc(run.final_lists, run.matches)

    report = {
        "kind": "benchmark",
        "config": config.to_dict(),
        "per_seed": per_seed,
        "summary": summarise_benchmark(per_seed),
    }
    write_report(out / "report.json", report)
    for name, curve in curves.items():
        write_cmc_csv(out / f"cmc_{name}.csv", curve)
    return report


def summarise_benchmark(per_seed: list[dict]) -> dict:
    """Cross-seed medians plus the cumulative-learning seed count."""
    def med(path: str) -> float:
        vals = []
        for s in per_seed:
            node = s
            for key in path.split("."):
                node = node[key]
            vals.append(node)
        return float(statistics.median(vals))

    summary = {
        "median_l2_rank1": med("hil.l2_rank1"),
        "median_hvil_rank1": med("hil.hvil_rank1"),
        "median_rank1_gain_pp": float(statistics.median(
            [100.0 * (s["hil"]["hvil_rank1"] - s["hil"]["l2_rank1"]) for s in per_seed]
        )),
        "median_l2_er": med("hil.l2_er"),
        "median_hvil_er": med("hil.hvil_er"),
        "median_er_ratio": float(statistics.median(
            [s["hil"]["hvil_er"] / s["hil"]["l2_er"] for s in per_seed]
        )),
        "cumulative_improved_seeds": sum(
            1 for s in per_seed
            if s["hil"]["prefeedback_er_last_quartile"] < s["hil"]["prefeedback_er_first_quartile"]
        ),
        "n_seeds": len(per_seed),
    }
    if all("hol" in s for s in per_seed) and per_seed:
        for variant in ("l2", "m_tau", "m_avg", "rmel"):
            if all(variant in s["hol"] for s in per_seed):
                summary[f"median_hol_{variant}_rank1"] = med(f"hol.{variant}.rank1")
    return summary


def _replay_factory(path: Path):
    """Source factory that feeds back the recorded events for each probe
    in order, then falls silent."""
    by_probe: dict[str, list[FeedbackEvent]] = {}
    for ev in read_events_jsonl(path):
        by_probe.setdefault(ev.probe_id, []).append(ev)

    def factory(i: int, probe):
        queue = list(by_probe.get(probe.item_id, []))

        def source(round_idx: int, ranked) -> Optional[FeedbackEvent]:
            return queue.pop(0) if queue else None

        return source

    return factory


def replay_benchmark(config: BenchmarkConfig, out_dir: str | Path) -> dict:
    """Recompute the benchmark report purely from recorded event logs.
    Produces byte-identical output to the original run because updates
    are a deterministic function of (dataset, config, events)."""
    out = Path(out_dir)
    per_seed = []
    curves: dict[str, np.ndarray] = {}
    for seed in config.seeds:
        dataset = _benchmark_dataset(config, seed)
        probes = dataset.probes[: config.n_hil_probes]
        hol_probes = dataset.probes[config.n_hil_probes:]
        seed_dir = out / "runs" / f"seed_{seed}"
        run = _run_hil_pass(dataset, probes, config.hvil(),
                            _replay_factory(seed_dir / "events.jsonl"), seed)
        shares = _split_shares(len(probes), config.ensemble_sessions)
        split_runs = [
            _run_hil_pass(dataset, [probes[i] for i in share], config.hvil(),
                          _replay_factory(seed_dir / "splits" / f"{k:02d}" / "events.jsonl"),
                          seed)
            for k, share in enumerate(shares)
        ]
        pool, pool_verified = _pool_from_splits(split_runs)
        per_seed.append(_seed_report(run, config, dataset, hol_probes, pool, pool_verified))
        if seed == config.seeds[0]:
            curves["l2"] = cmc(run.l2_lists, run.matches)
            curves["hvil"] = cmc(run.final_lists, run.matches)
    report = {
        "kind": "benchmark",
        "config": config.to_dict(),
        "per_seed": per_seed,
        "summary": summarise_benchmark(per_seed),
    }
    return report
