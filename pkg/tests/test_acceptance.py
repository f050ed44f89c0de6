"""Release gate: every advertised guarantee at its stated tolerance.

Each criterion is one test that prints a single PASS/FAIL line (visible
with ``pytest tests/test_acceptance.py -s``) and asserts the same
condition. The interactive-benefit criteria share one run of the
calibrated benchmark protocol, so the whole gate stays inside its
runtime budgets.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

import oracles
from rankloop.config import load_config_file
from rankloop.data import FeedbackEvent, FeedbackLabel, Gallery, GalleryItem, Probe
from rankloop.hvil import HvilConfig, MetricModel, hvil_update
from rankloop.evaluation import cmc, expected_rank, mean_average_precision
from rankloop.losses import rank_loss
from rankloop.oracle import OraclePolicy, SimulatedAnnotator
from rankloop.ranking import RankedList, order_by_score, rank_gallery
from rankloop.rmel import rmel_gradient, rmel_objective
from rankloop.sessions import BenchmarkConfig, replay_benchmark, run_simulated_benchmark
from rankloop.synthetic import SyntheticSpec, gen_synthetic

TM = FeedbackLabel.TRUE_MATCH
SN = FeedbackLabel.STRONG_NEGATIVE

REPO_ROOT = Path(__file__).resolve().parent.parent


def _gate(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def random_pd(rng, d, scale=1.0):
    a = rng.normal(size=(d, d))
    return a @ a.T / d + scale * np.eye(d)


def random_scene(rng, d, n_g=12):
    """Probe, gallery, and a random feedback event for one update."""
    probe = Probe("p", "idA", "c0", rng.normal(size=d))
    items = [
        GalleryItem(f"g{k:03d}", "idA" if k == 0 else f"id{k}", "c1", rng.normal(size=d))
        for k in range(n_g)
    ]
    gallery = Gallery(items)
    selected = items[int(rng.integers(n_g))].item_id
    label = TM if rng.random() < 0.5 else SN
    return probe, gallery, FeedbackEvent("p", selected, label, 0, 0.0)


@pytest.fixture(scope="module")
def calibrated_run(tmp_path_factory):
    """One full run of the default benchmark protocol, plus its runtime."""
    out = tmp_path_factory.mktemp("gate") / "bench"
    t0 = time.monotonic()
    report = run_simulated_benchmark(BenchmarkConfig(), out)
    elapsed = time.monotonic() - t0
    return report, out, elapsed


# ---------------------------------------------------------------------------
# core update guarantees


# Session-shaped worlds per dimension, tuned so a meaningful share of the
# 10,000 steps genuinely moves the matrix. Unstructured random feedback is
# the wrong stress here: it contains judgments no annotator would make
# (branding a near-duplicate dissimilar), under which the metric is meant
# to run away and refuse. Feedback consistent with some ground truth is
# what the update is specified over, and sessions provide exactly that.
PSD_WORLDS = {
    4: dict(n_identities=40, sigma_max=0.8, view_skew=2.0, skew_rank=2),
    32: dict(n_identities=150, sigma_max=1.8, view_skew=3.5, skew_rank=8),
    128: dict(n_identities=300, sigma_max=2.4, view_skew=3.5, skew_rank=8),
}


def test_psd_preserved_across_long_randomized_update_runs():
    """10,000 update steps per dimension, drawn from randomized annotator
    sessions on fresh synthetic worlds, each trajectory started at the
    identity. Every output must be bit-symmetric and admit a Cholesky
    factorization."""
    config = HvilConfig(eta=0.1)
    t0 = time.monotonic()
    violations = 0
    totals = {}
    for dim, world in PSD_WORLDS.items():
        steps = applied = world_idx = 0
        while steps < 10_000:
            seed = dim * 1000 + world_idx
            spec = SyntheticSpec(dim=dim, sigma_min=0.1, normalize=True, **world)
            dataset = gen_synthetic(spec, seed=seed)
            policy = OraclePolicy(window_k=50, max_rounds=3, noise_rate=0.1, seed=seed)
            model = MetricModel.identity(dim)
            for probe_index, probe in enumerate(dataset.probes):
                if steps >= 10_000:
                    break
                annotator = SimulatedAnnotator(dataset, probe, policy, probe_index)
                for round_idx in range(policy.max_rounds):
                    ranked = rank_gallery(probe, dataset.gallery, model)
                    event = annotator(round_idx, ranked)
                    if event is None:
                        break
                    model, ctx = hvil_update(model, probe, dataset.gallery, event, config)
                    steps += 1
                    applied += ctx.applied
                    if not np.array_equal(model.matrix, model.matrix.T):
                        violations += 1
                    else:
                        try:
                            np.linalg.cholesky(model.matrix)
                        except np.linalg.LinAlgError:
                            violations += 1
                    if steps >= 10_000 or event.label is TM:
                        break
            world_idx += 1
        totals[dim] = applied
    elapsed = time.monotonic() - t0
    _gate(
        "psd-preservation",
        violations == 0 and all(a > 2500 for a in totals.values()) and elapsed < 120.0,
        f"10000 session-driven steps per d in (4, 32, 128), applied "
        f"{tuple(totals.values())}, {violations} PD violations, "
        f"{elapsed:.1f}s (budget 120s)",
    )


def test_post_update_score_solves_its_defining_equation():
    rng = np.random.default_rng(99)
    checked = 0
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(2, 17))
        eta = float(rng.uniform(0.05, 2.0))
        model = MetricModel(random_pd(rng, d, 0.5))
        probe, gallery, event = random_scene(rng, d)
        _, ctx = hvil_update(model, probe, gallery, event, HvilConfig(eta=eta))
        if not ctx.applied:
            continue
        k = eta * ctx.loss
        lhs = ctx.f_t * (1.0 + k * (ctx.f_t - ctx.f_v - ctx.b) * ctx.f_hat)
        worst = max(worst, abs(lhs - ctx.f_hat) / abs(ctx.f_hat))
        checked += 1
    _gate(
        "update-fixed-point",
        worst <= 1e-9 and checked > 400,
        f"{checked}/1000 applied instances, worst relative residual {worst:.2e} "
        f"(tolerance 1e-9)",
    )


def test_rank_one_update_matches_explicit_inverse_space_step():
    rng = np.random.default_rng(17)
    checked = 0
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(2, 9))
        eta = float(rng.uniform(0.1, 1.5))
        model = MetricModel(random_pd(rng, d, 0.5))
        probe, gallery, event = random_scene(rng, d, n_g=8)
        out, ctx = hvil_update(model, probe, gallery, event, HvilConfig(eta=eta))
        if not ctx.applied:
            continue
        want = oracles.inverse_space_update(
            model.matrix, ctx.z, eta, ctx.loss, ctx.f_t, ctx.f_v, ctx.b)
        worst = max(worst, np.linalg.norm(out.matrix - want) / max(1.0, np.linalg.norm(want)))
        checked += 1
    _gate(
        "inverse-space-equivalence",
        worst <= 1e-8 and checked > 400,
        f"{checked}/1000 applied instances on d <= 8, worst Frobenius error "
        f"{worst:.2e} (tolerance 1e-8)",
    )


def test_rank_losses_match_direct_summation_and_shapes():
    worst = 0.0
    shape_ok = True
    pairs = 0
    for n_g in range(2, 201):
        harmonic = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, n_g))])
        flat = np.cumsum(np.full(n_g, 1.0 / (n_g - 1))[::-1])[::-1]
        tm = np.array([rank_loss(r, n_g, TM) for r in range(n_g)])
        sn = np.array([rank_loss(r, n_g, SN) for r in range(n_g)])
        pairs += 2 * n_g
        worst = max(
            worst,
            float(np.max(np.abs(tm - harmonic) / np.maximum(harmonic, 1e-300))),
            float(np.max(np.abs(sn - flat) / flat)),
        )
        tm_steps = np.diff(tm)
        shape_ok &= bool(np.all(tm_steps > 0.0))  # increasing
        shape_ok &= bool(np.all(np.diff(tm_steps) < 0.0)) if n_g > 2 else True  # concave
        sn_steps = np.diff(sn)
        shape_ok &= np.allclose(sn_steps, -1.0 / (n_g - 1), rtol=1e-9)  # linear decrease
    _gate(
        "rank-loss-oracle",
        worst <= 1e-12 and shape_ok,
        f"{pairs} (rank, label) pairs on n_g <= 200, worst relative deviation "
        f"{worst:.2e}; concave-increasing and linear-decreasing shapes hold: {shape_ok}",
    )


def test_ensemble_gradient_matches_finite_differences():
    rng = np.random.default_rng(13)
    worst = 0.0
    ok = True
    for _ in range(20):
        tau = int(rng.integers(2, 7))
        d_rows = np.abs(rng.normal(size=(20, tau)))
        same = rng.random(20) < 0.5
        nu = float(rng.uniform(0.0, 0.5))
        w = random_pd(rng, tau, 0.1)
        got = rmel_gradient(d_rows, same, w, nu)
        fd = oracles.objective_fd_gradient(
            lambda m: rmel_objective(d_rows, same, m, nu), w)
        fd = (fd + fd.T) / 2.0  # the analytic gradient is the symmetrised one
        ok &= bool(np.allclose(got, fd, rtol=1e-5, atol=1e-7))
        denom = np.maximum(np.abs(fd), 1e-7)
        worst = max(worst, float(np.max(np.abs(got - fd) / denom)))
    _gate(
        "ensemble-gradient",
        ok,
        f"20 instances with tau <= 6 and 20 pairs, worst relative deviation "
        f"{worst:.2e} (tolerance 1e-5)",
    )


# ---------------------------------------------------------------------------
# calibrated benchmark criteria (one shared run)


def test_feedback_beats_l2_baseline_on_calibrated_benchmark(calibrated_run):
    report, _, elapsed = calibrated_run
    summary = report["summary"]
    gain = summary["median_rank1_gain_pp"]
    ratio = summary["median_er_ratio"]
    _gate(
        "interactive-benefit",
        gain >= 10.0 and ratio < 0.5 and len(report["per_seed"]) == 10 and elapsed < 600.0,
        f"median rank-1 gain {gain:+.1f}pp (need >= +10), median ER ratio "
        f"{ratio:.3f} (need < 0.5), 10 seeds in {elapsed:.0f}s (budget 600s)",
    )


def test_prefeedback_effort_drops_across_the_session(calibrated_run):
    report, _, _ = calibrated_run
    improved = report["summary"]["cumulative_improved_seeds"]
    n_seeds = len(report["per_seed"])
    _gate(
        "cumulative-learning",
        improved >= 8 and n_seeds == 10,
        f"pre-feedback expected rank lower in the last probe quartile than the "
        f"first in {improved}/{n_seeds} seeds (need >= 8)",
    )


def test_trained_ensemble_orders_at_least_as_well_as_averaging(calibrated_run):
    report, _, _ = calibrated_run
    hol = [s["hol"] for s in report["per_seed"]]
    med = lambda variant: float(np.median([h[variant]["rank1"] for h in hol]))
    rmel, avg, tau = med("rmel"), med("m_avg"), med("m_tau")
    psd_ok = all(h["rmel"]["weights_min_eigenvalue"] >= -1e-10 for h in hol)
    descent_ok = all(h["rmel"]["objective_final"] <= h["rmel"]["objective_initial"]
                     for h in hol)
    _gate(
        "ensemble-ordering",
        rmel >= avg and rmel >= tau - 0.02 and psd_ok and descent_ok,
        f"held-out median rank-1: trained {rmel:.4f} vs averaged {avg:.4f} and "
        f"last-session {tau:.4f} (-2pp bound {tau - 0.02:.4f}); weights PSD: "
        f"{psd_ok}; objective non-increasing: {descent_ok}",
    )


# ---------------------------------------------------------------------------
# evaluation, complexity, determinism


def test_evaluation_metrics_equal_brute_force_exactly():
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(50):
        n_items = int(rng.integers(4, 16))
        ids = [f"g{j:02d}" for j in range(n_items)]
        n_probes = int(rng.integers(1, 7))
        lists, matches = {}, {}
        ranked_ids, truths = [], []
        for p in range(n_probes):
            # scores on a small integer grid so ties are common
            scores = rng.integers(-5, 1, size=n_items).astype(np.float64)
            perm = order_by_score(ids, scores)
            order = [ids[i] for i in perm]
            ranked = RankedList(tuple(order), scores[perm])
            truth = set(rng.choice(ids, size=int(rng.integers(1, 4)), replace=False))
            pid = f"p{p}"
            lists[pid], matches[pid] = ranked, frozenset(truth)
            ranked_ids.append(order)
            truths.append(truth)

        want_cmc = oracles.cmc_by_scan(ranked_ids, truths, n_items)
        want_er = oracles.expected_rank_by_scan(ranked_ids, truths)
        want_map = sum(oracles.average_precision_by_scan(i, t)
                       for i, t in zip(ranked_ids, truths)) / n_probes
        mismatches += not np.array_equal(cmc(lists, matches), want_cmc)
        mismatches += expected_rank(lists, matches) != want_er
        mismatches += mean_average_precision(lists, matches) != want_map
    _gate(
        "evaluation-oracles",
        mismatches == 0,
        f"CMC, expected rank, and mAP equal brute force bit-for-bit on 50 "
        f"tied-score instances ({mismatches} mismatches)",
    )


def test_update_cost_scales_quadratically_with_dimension():
    rng = np.random.default_rng(3)
    config = HvilConfig(eta=0.5)

    def median_ms(dim, reps=300, warmup=20):
        ident = MetricModel.identity(dim)
        times = []
        for r in range(reps + warmup):
            u = rng.normal(size=dim)
            u /= np.linalg.norm(u)
            items = [GalleryItem("g000", "p000", "c1", u + 1e-3 * rng.normal(size=dim))]
            for i in range(1, 8):
                v = rng.normal(size=dim)
                items.append(GalleryItem(f"g{i:03d}", f"p{i:03d}", "c1", v / np.linalg.norm(v)))
            gallery = Gallery(items)
            probe = Probe("q", "p999", "c0", u)
            event = FeedbackEvent("q", "g000", SN, 0, 0.0)
            t0 = time.perf_counter_ns()
            _, ctx = hvil_update(ident, probe, gallery, event, config)
            t1 = time.perf_counter_ns()
            assert ctx.applied
            if r >= warmup:
                times.append(t1 - t0)
        return float(np.median(times)) / 1e6

    t256 = median_ms(256)
    t512 = median_ms(512)
    ratio = t512 / t256
    _gate(
        "update-cost-envelope",
        ratio <= 6.0,
        f"median update {t256:.3f} ms at d=256 vs {t512:.3f} ms at d=512, "
        f"ratio {ratio:.2f} (bound 6.0)",
    )


def test_benchmark_rerun_reproduces_artifacts_bit_for_bit(calibrated_run, tmp_path):
    report, out, _ = calibrated_run
    again = tmp_path / "again"
    run_simulated_benchmark(BenchmarkConfig(), again)

    first = sorted(p.relative_to(out) for p in out.rglob("*") if p.is_file())
    second = sorted(p.relative_to(again) for p in again.rglob("*") if p.is_file())
    same_files = first == second
    diffs = sum((out / rel).read_bytes() != (again / rel).read_bytes() for rel in first)

    replayed = replay_benchmark(BenchmarkConfig(), out)
    replay_ok = json.dumps(replayed, sort_keys=True) == json.dumps(report, sort_keys=True)
    _gate(
        "replay-determinism",
        same_files and diffs == 0 and replay_ok,
        f"fresh re-run reproduced all {len(first)} artifact files byte-for-byte "
        f"({diffs} differing) and log replay rebuilt the report exactly: {replay_ok}",
    )


def test_checked_in_protocol_matches_defaults():
    """The calibrated thresholds live in the repo; the config file must stay
    in lockstep with the defaults the gate actually runs."""
    raw = load_config_file(REPO_ROOT / "configs" / "acceptance_benchmark.toml")
    assert BenchmarkConfig.from_dict(raw) == BenchmarkConfig()
