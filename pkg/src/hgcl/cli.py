"""``hgcl`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .evaluation import (
    DEFAULT_RATIOS,
    EvalReport,
    evaluate_classification,
    evaluate_clustering,
    evaluate_majority_baseline,
    format_summary,
    write_reports_csv,
)
from .experiments import (
    ABLATIONS,
    DEFAULT_LEVELS,
    PERTURBATIONS,
    ablation_suite,
    delta_grid,
    grid_values,
    parameter_sweep,
    robustness_suite,
    write_degradation_csv,
)
from .graph import DatasetError, format_statistics_table, graph_statistics, load_graph, load_statistics, save_graph
from .synthetic import SyntheticSpec, benchmark_spec, generate_synthetic
from .trainer import (
    ConfigError,
    TrainConfig,
    TrainingError,
    export_embeddings,
    read_embeddings,
    save_checkpoint,
    save_loss_history,
    train,
)

log = logging.getLogger("hgcl")


class CLIError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _config(args) -> TrainConfig:
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    cfg.validate()
    return cfg


def _graph(args):
    if not args.data:
        raise CLIError("a dataset directory is required (-d/--data)")
    return load_graph(args.data)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_reports(reports: Sequence[EvalReport], out: Path, stem: str, extra=None) -> None:
    write_reports_csv(reports, out / f"{stem}.csv", extra)
    text = format_summary(reports)
    (out / f"{stem}_summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


# ---------------------------------------------------------------- subcommands


def cmd_synth(args) -> None:
    base = benchmark_spec()
    spec = SyntheticSpec(
        num_classes=args.classes,
        per_class=args.per_class,
        aux_sizes=base.aux_sizes,
        edge_probs=base.edge_probs,
        target_dim=args.target_dim,
        aux_dim=base.aux_dim,
        signal_to_noise=args.snr,
        seed=0 if args.seed is None else args.seed,
        name=args.name,
    )
    g = generate_synthetic(spec)
    save_graph(g, _out(args))
    print(f"wrote {g.name}: {g.num_nodes} nodes, {g.num_edges} edges to {args.out}")


def cmd_train(args) -> None:
    cfg = _config(args)
    g = _graph(args)
    out = _out(args)
    model = train(g, cfg, on_epoch=lambda e, v: log.info("epoch %d loss %.6f", e, v))
    export_embeddings(model, out / "embeddings.csv")
    save_checkpoint(model, out / "checkpoint.npz")
    save_loss_history(model, out / "loss_history.csv")
    (out / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    manifest = {
        "config_hash": cfg.hash(),
        "dataset": g.name,
        "epochs_run": len(model.loss_history),
        "stopped_early": model.stopped_early,
        "final_loss": model.loss_history[-1] if model.loss_history else None,
        "embedding_shape": list(model.embeddings.shape),
        "files": ["embeddings.csv", "checkpoint.npz", "loss_history.csv", "config.json"],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"trained {len(model.loss_history)} epochs (config {cfg.hash()}); artifacts in {out}")


def _embeddings_for(args):
    """Embeddings plus the config hash recorded next to them (if any)."""
    path = Path(args.embeddings)
    if path.is_dir():
        path = path / "embeddings.csv"
    if not path.is_file():
        raise CLIError(f"embedding file not found: {path}")
    manifest = path.parent / "manifest.json"
    h = json.loads(manifest.read_text(encoding="utf-8")).get("config_hash", "") if manifest.is_file() else ""
    return read_embeddings(path), h


def _labels(g, z):
    if g.labels is None:
        raise CLIError(f"dataset {g.name!r} has no labels for target type {g.target_type!r}")
    if z.shape[0] != g.labels.size:
        raise CLIError(f"embeddings have {z.shape[0]} rows but the dataset has {g.labels.size} target nodes")
    return g.labels


def cmd_classify(args) -> None:
    g = _graph(args)
    z, h = _embeddings_for(args)
    seed = 0 if args.seed is None else args.seed
    rep = evaluate_classification(z, _labels(g, z), args.ratios, args.repeats, seed, config_hash=h)
    _write_reports([rep], _out(args), "classification")


def cmd_cluster(args) -> None:
    g = _graph(args)
    z, h = _embeddings_for(args)
    seed = 0 if args.seed is None else args.seed
    rep = evaluate_clustering(z, _labels(g, z), args.k, args.repeats, seed, config_hash=h)
    _write_reports([rep], _out(args), "clustering")


def cmd_robustness(args) -> None:
    cfg, g, out = _config(args), _graph(args), _out(args)
    kinds = PERTURBATIONS if args.perturbation == "all" else (args.perturbation,)
    reports = []
    for kind in kinds:
        reports.extend(robustness_suite(g, cfg, kind, args.levels, args.ratios, args.repeats))
    write_degradation_csv(reports, out / "degradation.csv")
    # reference row: training-majority prediction on the very same splits
    reports.append(evaluate_majority_baseline(g.labels, args.ratios, args.repeats, cfg.seed))
    extra = {"perturbation": [r.metadata.get("perturbation", "none") for r in reports],
             "level": [r.metadata.get("level", "") for r in reports]}
    _write_reports(reports, out, "robustness", extra)


def cmd_ablate(args) -> None:
    cfg, g, out = _config(args), _graph(args), _out(args)
    reports = ablation_suite(g, cfg, args.variants, args.ratios, args.repeats)
    _write_reports(reports, out, "ablation")


def cmd_sweep(args) -> None:
    cfg, g, out = _config(args), _graph(args), _out(args)
    names = [m.name for m in g.metapaths]
    table = parameter_sweep(g, cfg, delta_grid(names, args.deltas), args.eps_a, args.ratios, args.repeats)
    table.to_csv(out / "sweep.csv")
    text = table.format()
    (out / "sweep_summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_inspect(args) -> None:
    rows = []
    for target in args.paths:
        p = Path(target)
        if p.is_dir():
            rows.append(graph_statistics(load_graph(p)))
        else:
            rows.append(load_statistics(p))
    print(format_statistics_table(rows))


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgcl", description="Heterogeneous graph contrastive learning toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, config=True, data=True, out=True):
        if config:
            p.add_argument("-c", "--config", help="TrainConfig JSON (defaults when omitted)")
        if data:
            p.add_argument("-d", "--data", help="dataset directory")
        if out:
            p.add_argument("-o", "--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="root seed override")

    def eval_opts(p):
        p.add_argument("--ratios", type=_floats, default=list(DEFAULT_RATIOS), help="training ratios, e.g. 0.2,0.8")
        p.add_argument("--repeats", type=int, default=10)

    p = sub.add_parser("synth", help="write a synthetic heterogeneous dataset")
    common(p, config=False, data=False)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=150)
    p.add_argument("--target-dim", type=int, default=64)
    p.add_argument("--snr", type=float, default=benchmark_spec().signal_to_noise)
    p.add_argument("--name", default="synthetic")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and export embeddings, checkpoint and loss history")
    common(p)
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (("classify", cmd_classify, "node classification on exported embeddings"),
                                  ("cluster", cmd_cluster, "k-means clustering on exported embeddings")):
        p = sub.add_parser(name, help=help_text)
        common(p, config=False)
        p.add_argument("-e", "--embeddings", required=True, help="embeddings.csv or a train output directory")
        p.add_argument("--repeats", type=int, default=10)
        if name == "classify":
            p.add_argument("--ratios", type=_floats, default=list(DEFAULT_RATIOS))
        else:
            p.add_argument("--k", type=int, default=None, help="clusters (default: number of classes)")
        p.set_defaults(func=func)

    p = sub.add_parser("robustness", help="edge deletion / attribute masking degradation curves")
    common(p)
    eval_opts(p)
    p.add_argument("--levels", type=_floats, default=list(DEFAULT_LEVELS))
    p.add_argument("--perturbation", choices=PERTURBATIONS + ("all",), default="all")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("ablate", help="compare the model with its single-view and sampling variants")
    common(p)
    eval_opts(p)
    p.add_argument("--variants", type=lambda s: s.split(","), default=list(ABLATIONS))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="meta-path weight x attribute threshold sensitivity grid")
    common(p)
    eval_opts(p)
    p.add_argument("--deltas", type=_floats, default=grid_values(0.0, 1.0, 0.2),
                   help="values tried for every meta-path weight (cartesian product)")
    p.add_argument("--eps-a", type=_floats, default=grid_values(0.2, 0.9, 0.1))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inspect", help="print dataset statistics")
    p.add_argument("paths", nargs="+", help="dataset directories or statistics JSON files")
    p.set_defaults(func=cmd_inspect)
    return parser


def _error_line(exc: BaseException) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, DatasetError):
        payload.update({"path": exc.path, "line": exc.line})
    return json.dumps(payload, sort_keys=True)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, DatasetError, ConfigError, TrainingError, ValueError, OSError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
