"""Command-line entry points.

Commands succeed with exit code 0; any failure prints a single
machine-readable JSON object to stderr and exits nonzero.

Usage:
    rankloop gen-synthetic --out-dir data/run0 --seed 0
    rankloop bench --config configs/benchmark.toml --out-dir out/bench
    rankloop eval --out-dir out/bench
    rankloop ensemble --run-dir out/bench/runs/seed_0 --out ens.rme
    rankloop export --out-dir out/bench --export-dir out/curves
    rankloop serve --store /tmp/store --port 8000
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import deep_merge, load_config_file
from .data import load_dataset, read_events_jsonl, save_dataset
from .evaluation import report_to_json, write_cmc_csv
from .hvil import load_model
from .rmel import EnsembleModel, RmelConfig, build_training_pairs, save_ensemble, train_rmel
from .sessions import BenchmarkConfig, replay_benchmark, run_simulated_benchmark
from .synthetic import SyntheticSpec, gen_synthetic


class CliError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Accepts comma lists and dash ranges: "0,1,2" or "0-9" or both."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise CliError("bad_seeds", f"could not parse seeds from {text!r}")
    return tuple(seeds)


def _load_base_config(args) -> dict:
    if getattr(args, "config", None):
        return load_config_file(args.config)
    return {}


def _benchmark_config(args) -> BenchmarkConfig:
    raw = _load_base_config(args)
    overrides: dict = {}
    if args.dataset:
        overrides["dataset_path"] = str(args.dataset)
    if args.eta is not None:
        overrides["eta"] = args.eta
    if args.budget is not None:
        overrides["max_rounds_per_probe"] = args.budget
    if args.top_k is not None:
        overrides["window_k"] = args.top_k
    if args.nu is not None:
        overrides["rmel"] = {"nu": args.nu}
    if args.seeds is not None:
        overrides["seeds"] = list(_parse_seeds(args.seeds))
    elif args.seed is not None:
        overrides["seeds"] = [args.seed]
    return BenchmarkConfig.from_dict(deep_merge(raw, overrides))


def cmd_gen_synthetic(args) -> int:
    raw = _load_base_config(args)
    syn = raw.get("synthetic", raw)  # accept flat or nested config
    spec = SyntheticSpec(
        n_identities=int(args.n_identities or syn.get("n_identities", 300)),
        dim=int(args.dim or syn.get("dim", 64)),
        sigma_min=float(syn.get("sigma_min", 0.0) if args.sigma_min is None else args.sigma_min),
        sigma_max=float(syn.get("sigma_max", 0.0) if args.sigma_max is None else args.sigma_max),
        view_skew=float(syn.get("view_skew", 0.0) if args.view_skew is None else args.view_skew),
        skew_rank=int(args.skew_rank or syn.get("skew_rank", 8)),
        normalize=not args.no_normalize if args.no_normalize is not None else bool(syn.get("normalize", True)),
    )
    ds = gen_synthetic(spec, seed=args.seed or 0)
    out = save_dataset(ds, args.out_dir)
    print(f"wrote dataset with {len(ds.probes)} probes and {len(ds.gallery)} gallery items to {out}")
    return 0


def cmd_bench(args) -> int:
    config = _benchmark_config(args)
    report = run_simulated_benchmark(config, args.out_dir)
    summary = report["summary"]
    print(f"report: {Path(args.out_dir) / 'report.json'}")
    for key in sorted(summary):
        print(f"  {key}: {summary[key]}")
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out_dir)
    report_path = out / "report.json"
    if not report_path.exists():
        raise CliError("missing_report", f"no report.json under {out}")
    original = report_path.read_bytes()
    config = BenchmarkConfig.from_dict(json.loads(original)["config"])
    replayed = replay_benchmark(config, out)
    replay_bytes = report_to_json(replayed).encode()
    replay_path = out / "report_replay.json"
    replay_path.write_bytes(replay_bytes)
    if replay_bytes == original:
        print(f"replay matches: {replay_path} is byte-identical to {report_path}")
        return 0
    raise CliError("replay_mismatch", f"replayed report differs from {report_path}")


def cmd_ensemble(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "run.json").exists():
        raise CliError(
            "missing_run",
            f"{run_dir} has no run.json; point --run-dir at one of OUT/runs/seed_*",
        )
    run_meta = json.loads((run_dir / "run.json").read_text())
    config = BenchmarkConfig.from_dict(run_meta["config"])
    seed = int(run_meta["seed"])
    if config.dataset_path:
        dataset = load_dataset(config.dataset_path)
    else:
        dataset = gen_synthetic(config.synthetic, seed)
    pool_dir = run_dir / "pool"
    weak = [load_model(p) for p in sorted(pool_dir.glob("*.hvm"))]
    if not weak:
        raise CliError("no_weak_models", f"no weak models under {pool_dir}")
    verified = [tuple(v) for v in json.loads((pool_dir / "verified.json").read_text())]
    if not verified:
        raise CliError("no_verified_pairs", "run has no confirmed matches to train on")
    probes_by_id = {p.item_id: p for p in dataset.probes}
    p_feats = np.stack([probes_by_id[pid].feature for pid, _ in verified])
    p_persons = [probes_by_id[pid].person_id for pid, _ in verified]
    g_feats = np.stack([dataset.gallery.item(gid).feature for _, gid in verified])
    g_persons = [dataset.gallery.item(gid).person_id for _, gid in verified]
    d_rows, same = build_training_pairs(p_feats, p_persons, g_feats, g_persons, weak)
    rmel_cfg = RmelConfig(
        nu=args.nu if args.nu is not None else config.rmel.nu,
        step=args.step if args.step is not None else config.rmel.step,
        max_iters=args.max_iters if args.max_iters is not None else config.rmel.max_iters,
        tol=config.rmel.tol,
        init=config.rmel.init,
        seed=config.rmel.seed,
    )
    result = train_rmel(d_rows, same, rmel_cfg)
    save_ensemble(args.out, EnsembleModel(result.weights, weak))
    print(json.dumps({
        "out": str(args.out),
        "n_weak_models": len(weak),
        "n_pairs": int(d_rows.shape[0]),
        "objective_initial": result.objective_initial,
        "objective_final": result.objective_final,
        "iterations": result.iterations,
    }, sort_keys=True))
    return 0


def cmd_export(args) -> int:
    out = Path(args.out_dir)
    export_dir = Path(args.export_dir or out)
    export_dir.mkdir(parents=True, exist_ok=True)
    wrote = []
    for csv_path in sorted(out.glob("cmc_*.csv")):
        target = export_dir / csv_path.name
        if target != csv_path:
            target.write_bytes(csv_path.read_bytes())
        wrote.append(target)
    if not wrote:
        raise CliError("nothing_to_export", f"no cmc_*.csv files under {out}")
    for path in wrote:
        print(f"exported {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    raw = _load_base_config(args)
    store = args.store or raw.get("store")
    if not store:
        raise CliError("missing_store", "serve needs --store or a config with a store path")
    bind = os.environ.get("RANKLOOP_BIND", "")
    host = raw.get("host", "127.0.0.1")
    port = int(raw.get("port", 8000))
    if bind:
        host, _, bind_port = bind.partition(":")
        if bind_port:
            port = int(bind_port)
    if args.host:
        host = args.host
    if args.port:
        port = args.port
    ui_dir = args.ui or raw.get("ui")
    app = create_app(store, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankloop")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic two-view dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-identities", type=int, dest="n_identities")
    p.add_argument("--dim", type=int)
    p.add_argument("--sigma-min", type=float, dest="sigma_min")
    p.add_argument("--sigma-max", type=float, dest="sigma_max")
    p.add_argument("--view-skew", type=float, dest="view_skew")
    p.add_argument("--skew-rank", type=int, dest="skew_rank")
    p.add_argument("--no-normalize", action="store_const", const=True, dest="no_normalize")
    p.set_defaults(func=cmd_gen_synthetic, no_normalize=None)

    p = sub.add_parser("bench", help="run the oracle-driven benchmark")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--dataset")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds")
    p.add_argument("--eta", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--budget", type=int)
    p.add_argument("--top-k", type=int, dest="top_k")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="replay recorded logs and verify the report")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble", help="train an ensemble from one recorded run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nu", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("export", help="collect plot-ready CMC CSV exports")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--export-dir")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--store")
    p.add_argument("--config")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(json.dumps({"error": exc.code, "detail": str(exc)}), file=sys.stderr)
        return 1
    except Exception as exc:  # keep failures machine-readable
        print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
