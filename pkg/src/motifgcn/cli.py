"""Command-line entry point: ``motifgcn <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from motifgcn.data import (
    SyntheticSpec,
    generate_planted_motif,
    generate_synthetic,
    load_cora_format,
    pca_reduce,
    save_dataset,
    subsample,
)
from motifgcn.experiment import ExperimentConfig, run_eval, run_selection, run_sweep, run_train
from motifgcn.graph import load_edge_list, save_edge_list
from motifgcn.motifs import ALL_MOTIFS, MotifId, TriadCensus, projection_adjacency

log = logging.getLogger("motifgcn")


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="root random seed (overrides the config)")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise SystemExit("error: --config is required for this command")
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _require_out(args) -> Path:
    if not args.out:
        raise SystemExit("error: --out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_motifs_count(args) -> int:
    out = _require_out(args)
    g = load_edge_list(args.graph)
    motifs = [MotifId.parse(m) for m in args.motifs.split(",")] if args.motifs else list(ALL_MOTIFS)
    census = TriadCensus(g) if any(m.is_triad for m in motifs) else None
    summary = {"n": g.n, "edges": g.num_edges, "motifs": {}}
    if census is not None:
        summary["weakly_connected_triads"] = len(census)
        totals = census.totals()
    for m in motifs:
        adj = census.adjacency(m) if m.is_triad else projection_adjacency(g, m)
        if m.is_triad:
            instances = totals[m]
        elif m is MotifId.U:
            instances = adj.matrix.nnz // 2
        else:
            instances = adj.matrix.nnz
        summary["motifs"][m.value] = {"instances": instances, "density": adj.density, "nnz": adj.matrix.nnz}
        save_edge_list(adj.matrix, out / f"motif_{m.value}.tsv", header={"motif": m.value})
    _write_json(out / "motif_summary.json", summary)
    print(json.dumps({k: v["instances"] for k, v in summary["motifs"].items()}))
    return 0


def cmd_preprocess_pca(args) -> int:
    out = _require_out(args)
    ds = load_cora_format(args.dataset)
    ds = ds.with_features(pca_reduce(ds.features, args.dims))
    save_dataset(ds, out)
    print(f"wrote {ds.n} x {ds.num_features} features to {out}")
    return 0


def cmd_subsample(args) -> int:
    out = _require_out(args)
    ds = load_cora_format(args.dataset)
    seed = 0 if args.seed is None else args.seed
    ds = subsample(ds, args.n, largest_component=args.largest_wcc, seed=seed)
    save_dataset(ds, out)
    print(f"kept {ds.n} vertices, {ds.graph.num_edges} edges")
    return 0


def cmd_synth_generate(args) -> int:
    out = _require_out(args)
    seed = 0 if args.seed is None else args.seed
    if args.planted_motif:
        kw = {"n": args.n} if args.n is not None else {}
        ds = generate_planted_motif(motif=args.planted_motif, seed=seed, **kw)
    else:
        params = {}
        if args.config:
            params = json.loads(Path(args.config).read_text(encoding="utf-8"))
            params = params.get("dataset", {}).get("synthetic", params)
        params.setdefault("seed", seed)
        for key in ("n", "blocks", "noise", "pattern", "directionality", "p_forward"):
            val = getattr(args, key)
            if val is not None:
                params[key] = val
        ds = generate_synthetic(SyntheticSpec(**params))
    save_dataset(ds, out)
    print(f"wrote synthetic dataset: n={ds.n}, edges={ds.graph.num_edges}, classes={ds.num_classes}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    report = run_train(cfg)
    print(json.dumps({k: report[k] for k in ("status", "test_accuracy", "best_epoch") if k in report}))
    return 0 if report.get("status") == "ok" else 2


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    res = run_eval(cfg, args.checkpoint)
    if args.out:
        out = _require_out(args)
        _write_json(out / "eval.json", res)
    print(json.dumps(res))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if args.orders:
        cfg.sweep["orders"] = [int(p) for p in args.orders.split(",")]
    rows = run_sweep(cfg, threads=args.threads)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} cells, {failed} failed -> {Path(cfg.out) / 'sweep.csv'}")
    return 0


def cmd_select_motifs(args) -> int:
    cfg = _load_config(args)
    doc = run_selection(cfg)
    print(json.dumps({"selected": doc["selected"], "ranking": doc["ranking"][:5]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="motifgcn", description="Motif-Laplacian graph CNN experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    motifs = sub.add_parser("motifs", help="motif adjacency tools")
    msub = motifs.add_subparsers(dest="action", required=True)
    mc = msub.add_parser("count", parents=[common], help="count motifs and write motif adjacencies")
    mc.add_argument("--graph", required=True, help="edge-list file")
    mc.add_argument("--motifs", default=None, help="comma-separated motif ids (default: all 16)")
    mc.set_defaults(func=cmd_motifs_count)

    pre = sub.add_parser("preprocess", help="feature preprocessing")
    psub = pre.add_subparsers(dest="action", required=True)
    pca = psub.add_parser("pca", parents=[common], help="reduce features with PCA")
    pca.add_argument("--dataset", required=True)
    pca.add_argument("--dims", type=int, default=130)
    pca.set_defaults(func=cmd_preprocess_pca)

    ss = sub.add_parser("subsample", parents=[common], help="extract a connected sub-dataset")
    ss.add_argument("--dataset", required=True)
    ss.add_argument("--largest-wcc", action="store_true")
    ss.add_argument("--n", type=int, default=None)
    ss.set_defaults(func=cmd_subsample)

    tr = sub.add_parser("train", parents=[common], help="train one model")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", parents=[common], help="accuracy versus order for each family")
    sw.add_argument("--orders", default=None, help="comma-separated orders (default 1..8)")
    sw.set_defaults(func=cmd_sweep)

    sm = sub.add_parser("select-motifs", parents=[common], help="attention-based motif selection")
    sm.set_defaults(func=cmd_select_motifs)

    syn = sub.add_parser("synth", help="synthetic data")
    ssub = syn.add_subparsers(dest="action", required=True)
    gen = ssub.add_parser("generate", parents=[common], help="write a synthetic dataset directory")
    gen.add_argument("--n", type=int, default=None)
    gen.add_argument("--blocks", type=int, default=None)
    gen.add_argument("--noise", type=float, default=None)
    gen.add_argument("--pattern", choices=["cycle", "bipartite"], default=None)
    gen.add_argument("--directionality", type=float, default=None)
    gen.add_argument("--p-forward", dest="p_forward", type=float, default=None)
    gen.add_argument("--planted-motif", default=None, help="plant this triad motif instead")
    gen.set_defaults(func=cmd_synth_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
