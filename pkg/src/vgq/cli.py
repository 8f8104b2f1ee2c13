"""Command-line entry point: one binary, one subcommand per pipeline stage.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure. All
randomness flows from --seed through named substreams, so any stage can be
re-run independently and reproduces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("vgq")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vgq", description="grasp-quality dataset, training and inference toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", action="append", default=[], help="config file (repeatable; later wins)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="config override (repeatable)")
        p.add_argument("--seed", type=int, default=None, help="top-level seed (overrides config)")
        p.add_argument("--workers", type=int, default=None, help="parallel workers (overrides config)")
        return p

    p = add("meshes", "generate procedural primitive meshes as OBJ files")
    p.add_argument("--count", type=int, default=None, help="number of meshes (default from config)")
    p.add_argument("--out", required=True, help="output directory")

    p = add("render", "render depth images and labeled grasp records")
    p.add_argument("--mesh-dir", default=None, help="directory of OBJ meshes (default: procedural set)")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = add("sample", "filter, rebalance and undersample rendered records")
    p.add_argument("--data", required=True, help="rendered dataset directory")
    p.add_argument("--out", required=True, help="output directory for sampled records")
    p.add_argument("--psi-max", type=float, default=None, help="override psi filter bound")
    p.add_argument("--target-pos", type=float, default=None, help="override target positivity rate")

    p = add("split", "object-wise train/val/test split")
    p.add_argument("--data", required=True, help="rendered dataset directory")
    p.add_argument("--out", required=True, help="output split manifest path")

    p = add("train", "train a grasp quality network")
    p.add_argument("--data", required=True, help="rendered dataset directory")
    p.add_argument("--records", required=True, help="sampled records file")
    p.add_argument("--split", required=True, help="split manifest path")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log-csv", default=None, help="training curve CSV path")

    p = add("eval", "evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="rendered dataset directory")
    p.add_argument("--records", required=True, help="sampled records file")
    p.add_argument("--split", required=True, help="split manifest path")
    p.add_argument("--out-dir", required=True, help="report output directory")
    p.add_argument("--subset", default="full", choices=["full", "top_grasp"])
    p.add_argument("--threshold", type=float, default=None,
                   help="decision threshold (default: the checkpoint's validation-calibrated cut)")

    p = add("bench", "preprocessing/prediction latency of both pipelines")
    p.add_argument("--checkpoint-vgq", default=None, help="trained per-grasp checkpoint (default: random init)")
    p.add_argument("--checkpoint-fvgq", default=None, help="trained decoupled checkpoint (default: random init)")
    p.add_argument("--k", default=None, help="comma-separated batch sizes (overrides config)")
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--out", required=True, help="CSV output path")

    p = add("ablate", "train-many ablation experiment")
    p.add_argument("--kind", required=True, choices=["dataset_size", "extra_fc", "kappa"])
    p.add_argument("--grid", required=True, help="comma-separated grid points")
    p.add_argument("--data", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--iterations", type=int, default=1500, help="training iterations per run")

    p = add("report", "summarize the artifacts in a run directory")
    p.add_argument("--run-dir", required=True)

    p = add("config-keys", "list every config key with type and default")
    return parser


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("VGQ_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _resolve_config(args):
    from .config import load_config

    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"workers={args.workers}")
    cfg = load_config(args.config, overrides)
    log.info("config hash %s, seed %d", cfg.config_hash(), cfg["seed"])
    log.debug("resolved config:\n%s", cfg.echo())
    return cfg


def run(argv) -> int:
    """Entry point used by tests; returns the process exit code."""
    _setup_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # --help paths exit 0
        return 0 if e.code in (0, None) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        from .config import ConfigError

        try:
            cfg = _resolve_config(args) if args.command != "config-keys" else None
            return _dispatch(args, cfg)
        except ConfigError as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
    except Exception as e:  # runtime failure
        log.error("%s", e, exc_info=log.isEnabledFor(logging.DEBUG))
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


# ---------------------------------------------------------------------------
# subcommand implementations


def _dispatch(args, cfg) -> int:
    return {
        "meshes": _cmd_meshes,
        "render": _cmd_render,
        "sample": _cmd_sample,
        "split": _cmd_split,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "bench": _cmd_bench,
        "ablate": _cmd_ablate,
        "report": _cmd_report,
        "config-keys": _cmd_config_keys,
    }[args.command](args, cfg)


def _cmd_config_keys(args, cfg) -> int:
    from .config import describe_keys

    print(describe_keys())
    return 0


def _load_meshes(args, cfg):
    from .meshes import generate_primitive_set, load_mesh

    if getattr(args, "mesh_dir", None):
        paths = sorted(Path(args.mesh_dir).glob("*.obj"))
        if not paths:
            raise FileNotFoundError(f"no .obj files in {args.mesh_dir}")
        return [load_mesh(p) for p in paths]
    return generate_primitive_set(cfg["mesh_count"], seed=cfg["seed"])


def _cmd_meshes(args, cfg) -> int:
    from .meshes import generate_primitive_set, save_obj

    count = args.count if args.count is not None else cfg["mesh_count"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meshes = generate_primitive_set(count, seed=cfg["seed"])
    for m in meshes:
        save_obj(m, out / f"{m.object_id}.obj")
    log.info("wrote %d meshes to %s", len(meshes), out)
    return 0


def _cmd_render(args, cfg) -> int:
    from .dataset import render_dataset, write_dataset

    meshes = _load_meshes(args, cfg)
    shards = render_dataset(meshes, cfg.render(), seed=cfg["seed"], workers=cfg["workers"])
    manifest = write_dataset(shards, args.out, seed=cfg["seed"], config_echo=cfg.values)
    n = sum(e["n_records"] for e in manifest["shards"])
    log.info("rendered %d records over %d objects into %s", n, len(manifest["shards"]), args.out)
    return 0


def _cmd_sample(args, cfg) -> int:
    from .dataset import (
        balance_positivity,
        filter_psi,
        load_dataset,
        records_of,
        uniform_bin_undersample,
        write_records,
    )
    from .seeding import substream

    overrides = {}
    if args.psi_max is not None:
        overrides["psi_max"] = args.psi_max
    if args.target_pos is not None:
        overrides["target_pos_rate"] = args.target_pos
    balance = cfg.balance()
    if overrides:
        from dataclasses import replace

        balance = replace(balance, **overrides)

    records = records_of(load_dataset(args.data))
    n0 = len(records)
    kept_psi = filter_psi(records, balance.psi_max)
    balanced = balance_positivity(kept_psi, balance, substream(cfg["seed"], "sample", "balance"))
    uniform = uniform_bin_undersample(balanced, balance, substream(cfg["seed"], "sample", "uniform"))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(uniform, out / "records.jsonl")
    counts = {
        "rendered": n0,
        "psi_removed": n0 - len(kept_psi),
        "after_psi": len(kept_psi),
        "after_balance": len(balanced),
        "after_uniform": len(uniform),
        "positives": int(sum(r.positive for r in uniform)),
    }
    manifest = {
        "seed": cfg["seed"],
        "balance": {
            "target_pos_rate": balance.target_pos_rate,
            "beta_bin": balance.beta_bin,
            "elev_bin": balance.elev_bin,
            "psi_max": balance.psi_max,
            "zero_pos_floor": balance.zero_pos_floor,
        },
        "counts": counts,
    }
    with open(out / "sampling_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("sampled %d -> %d records (%.1f%% positive)", n0, len(uniform),
             100.0 * counts["positives"] / max(len(uniform), 1))
    return 0


def _cmd_split(args, cfg) -> int:
    from .dataset import load_dataset, split_objects
    from .seeding import substream

    shards = load_dataset(args.data)
    object_ids = [s.meta["object_id"] for s in shards]
    manifest = split_objects(object_ids, cfg.split_fractions(), substream(cfg["seed"], "split"))
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("split %d objects into %d/%d/%d", len(object_ids), len(manifest.train),
             len(manifest.val), len(manifest.test))
    return 0


def _load_pipeline_inputs(args):
    from .dataset import SplitManifest, load_dataset, read_records

    shards = load_dataset(args.data)
    records = read_records(args.records)
    with open(args.split, "r", encoding="utf-8") as fh:
        manifest = SplitManifest.from_dict(json.load(fh))
    return shards, records, manifest


def _cmd_train(args, cfg) -> int:
    from .nn import fvgq_spec, save_checkpoint, train, vgq_spec
    from .seeding import substream
    from .training_data import build_training_data

    shards, records, manifest = _load_pipeline_inputs(args)
    variant = cfg["variant"]
    spec = (fvgq_spec if variant == "fvgq" else vgq_spec)(scaled=cfg["scaled"])
    data, _, _ = build_training_data(
        shards, records, manifest, variant, cfg.crop(), substream(cfg["seed"], "train", "crops")
    )
    result = train(spec, data, cfg.train_config(), log_path=args.log_csv)
    save_checkpoint(result.checkpoint, args.out)
    log.info("trained %s (best val BA %.3f at iteration %d) -> %s",
             variant, result.best_val_ba, result.checkpoint.iteration, args.out)
    return 0


def _cmd_eval(args, cfg) -> int:
    from .evaluation import evaluate, grid_report, subset_eval
    from .nn import load_checkpoint
    from .seeding import substream
    from .training_data import split_records

    shards, records, manifest = _load_pipeline_inputs(args)
    ckpt = load_checkpoint(args.checkpoint)
    _, _, test_recs = split_records(records, manifest)
    from .evaluation import build_eval_set

    rng = substream(cfg["seed"], "eval", "crops")
    evalset = build_eval_set(shards, test_recs, ckpt.spec.variant, cfg.crop(), rng)
    threshold = args.threshold if args.threshold is not None else ckpt.threshold
    preds, m = evaluate(ckpt, evalset, threshold)
    grid = grid_report(preds, test_recs, r_min=cfg["r_min"], threshold=threshold)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "grid.csv").write_text(grid.to_csv(), encoding="utf-8")
    (out / "grid_tpr.matrix").write_text(grid.to_matrix("tpr"), encoding="utf-8")
    (out / "grid_tnr.matrix").write_text(grid.to_matrix("tnr"), encoding="utf-8")
    s = grid.summary()
    lines = [
        f"records: {len(test_recs)}",
        f"tpr: {m.tpr:.4f}",
        f"tnr: {m.tnr:.4f}",
        f"balanced_accuracy: {m.balanced_accuracy:.4f}",
        f"accuracy: {m.accuracy:.4f}",
        f"grid tpr mean/std: {s['tpr_mean']:.4f} {s['tpr_std']:.4f}",
        f"grid tnr mean/std: {s['tnr_mean']:.4f} {s['tnr_std']:.4f}",
        f"grid tpr weighted mean: {s['tpr_weighted_mean']:.4f}",
        f"grid tnr weighted mean: {s['tnr_weighted_mean']:.4f}",
    ]
    if args.subset != "full":
        sub = subset_eval(ckpt, evalset, preset=args.subset)
        if sub.metrics is None:
            lines.append(f"subset {args.subset}: n={sub.n} undefined ({sub.note})")
        else:
            lines.append(f"subset {args.subset}: n={sub.n} BA {sub.metrics.balanced_accuracy:.4f}")
    (out / "metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info("evaluation BA %.4f -> %s", m.balanced_accuracy, out)
    return 0


def _cmd_bench(args, cfg) -> int:
    from .inference import bench
    from .nn import fvgq_spec, load_checkpoint, random_checkpoint, vgq_spec
    from .seeding import substream

    rng = substream(cfg["seed"], "bench")
    ck_vgq = (
        load_checkpoint(args.checkpoint_vgq)
        if args.checkpoint_vgq
        else random_checkpoint(vgq_spec(scaled=cfg["scaled"]), rng)
    )
    ck_fvgq = (
        load_checkpoint(args.checkpoint_fvgq)
        if args.checkpoint_fvgq
        else random_checkpoint(fvgq_spec(scaled=cfg["scaled"]), rng)
    )
    ks = cfg.bench_ks() if args.k is None else tuple(int(s) for s in args.k.split(","))
    repeats = args.repeats if args.repeats is not None else cfg["bench_repeats"]
    report = bench(
        {"vgq": ck_vgq, "fvgq": ck_fvgq},
        ks=ks,
        repeats=repeats,
        warmup=cfg["bench_warmup"],
        crop=cfg.crop(),
        image_px=cfg["image_size"],
        seed=cfg["seed"],
    )
    Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    for k in ks:
        log.info(
            "k=%d: predict %.1fx, preprocess %.1fx faster with the shared encoder",
            k, report.speedup("predict", k), report.speedup("preprocess", k),
        )
    return 0


def _cmd_ablate(args, cfg) -> int:
    from dataclasses import replace

    from .evaluation import AblationConfig, run_ablation

    shards, records, manifest = _load_pipeline_inputs(args)
    if args.kind == "extra_fc":
        grid = [s.strip().lower() in ("1", "true", "yes", "on") for s in args.grid.split(",")]
    else:
        grid = [float(s) for s in args.grid.split(",")]
    acfg = AblationConfig(
        seeds=cfg["ablation_seeds"],
        train_cfg=replace(cfg.train_config(), max_iterations=args.iterations),
        crop=cfg.crop(),
        scaled=cfg["scaled"],
    )
    report = run_ablation(args.kind, grid, shards, records, manifest, acfg, seed=cfg["seed"])
    Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    print(report.summary_text(), end="")
    return 0


def _cmd_report(args, cfg) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"{run_dir} is not a directory")
    print(f"run directory: {run_dir}")
    for name in ("manifest.json", "sampling_manifest.json"):
        p = run_dir / name
        if p.exists():
            with open(p, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
            if name == "manifest.json":
                n = sum(e.get("n_records", 0) for e in doc.get("shards", []))
                print(f"  rendered dataset: {len(doc.get('shards', []))} shards, {n} records, seed {doc.get('seed')}")
            else:
                print(f"  sampling counts: {doc.get('counts')}")
    for csv in sorted(run_dir.glob("*.csv")):
        print(f"  table: {csv.name} ({sum(1 for _ in open(csv)) - 1} rows)")
    for txt in sorted(run_dir.glob("*.txt")):
        print(f"  report: {txt.name}")
        for line in Path(txt).read_text(encoding="utf-8").splitlines():
            print(f"    {line}")
    return 0


if __name__ == "__main__":
    main()
