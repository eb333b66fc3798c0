"""Command-line entry point.

Subcommands: ``stats``, ``train``, ``evaluate``, ``compare``,
``export-scores``, ``sweep``. Exit codes: 0 on success, 1 for validation
problems (bad flags, bad config, missing or malformed files), 2 for runtime
or numeric failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import config as config_mod
from . import evaluation, graph as graph_mod, training
from .scorers import load_embeddings, save_embeddings

SWEEP_AXES = {
    "lambda": ("decay_epochs", int),
    "eta": ("eta", int),
    "k": ("k", int),
    "lr": ("learning_rate", float),
    "gamma": ("gamma", float),
}


class _Parser(argparse.ArgumentParser):
    # Argument problems are validation errors: exit 1, not argparse's 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", default=None,
                        help="JSON file with RunConfig fields; flags override it")
    for f in dataclasses.fields(config_mod.RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            parser.add_argument(flag, dest=f.name, default=None,
                                action=argparse.BooleanOptionalAction)
        elif f.type in ("int", int):
            parser.add_argument(flag, dest=f.name, type=int, default=None)
        elif f.type in ("float", float):
            parser.add_argument(flag, dest=f.name, type=float, default=None)
        else:
            parser.add_argument(flag, dest=f.name, default=None)


def _resolve_config(args) -> config_mod.RunConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(config_mod.RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return config_mod.load_run_config(args.config, overrides)


def _load_graph(cfg: config_mod.RunConfig) -> graph_mod.KnowledgeGraph:
    g = graph_mod.build_graph(
        graph_mod.load_triples(cfg.train_path, weighted=cfg.weighted),
        graph_mod.load_triples(cfg.valid_path, weighted=cfg.weighted),
        graph_mod.load_triples(cfg.test_path, weighted=cfg.weighted),
    )
    return graph_mod.normalize_weights(g, cfg.weight_normalization)


def _load_checkpoint(path, kg: graph_mod.KnowledgeGraph):
    table = load_embeddings(path)
    if table.n_entities != kg.n_entities or table.n_relations != kg.n_relations:
        raise ValueError(
            f"checkpoint {path} was trained on {table.n_entities} entities / "
            f"{table.n_relations} relations, dataset has {kg.n_entities} / "
            f"{kg.n_relations}"
        )
    return table


def cmd_stats(args) -> int:
    cfg = _resolve_config(args)
    cfg.validate()
    kg = _load_graph(cfg)
    stats = graph_mod.dataset_stats(kg, cfg.eval_fraction)
    width = max(len(k) for k in stats)
    for key, value in stats.items():
        print(f"{key:<{width}}  {value}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    cfg.validate()
    kg = _load_graph(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    config_mod.write_snapshot(cfg, cfg.output_dir)
    table, trace = training.train(
        kg, cfg.to_train_config(),
        checkpoint_dir=cfg.output_dir,
        checkpoint_every=cfg.checkpoint_every,
    )
    training.save_loss_trace(trace, os.path.join(cfg.output_dir, "loss_trace.csv"))
    model_path = os.path.join(cfg.output_dir, "model.kge")
    save_embeddings(table, model_path)
    print(f"trained {cfg.scorer} for {cfg.epochs} epochs; "
          f"final mean loss {trace[-1].mean_loss:.6f}")
    print(f"wrote {model_path}")
    return 0


def _print_report_table(reports: dict) -> None:
    print(f"{'split':<8} {'n':>8} {'MR':>10} {'MRR':>8} {'Hits@1':>8} {'Hits@10':>8}")
    for name, report in reports.items():
        print(f"{name:<8} {report.n_triples:>8} {report.mr:>10.2f} "
              f"{report.mrr:>8.4f} {report.hits1:>8.4f} {report.hits10:>8.4f}")


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    cfg.validate()
    kg = _load_graph(cfg)
    table = _load_checkpoint(args.checkpoint, kg)
    wanted = [s.strip() for s in args.splits.split(",") if s.strip()]
    unknown = set(wanted) - {"full", "top", "bottom"}
    if unknown:
        raise ValueError(f"unknown split name(s): {', '.join(sorted(unknown))}")
    reports = {}
    for name in wanted:
        if name == "full":
            split = kg.test
        else:
            split = graph_mod.split_by_weight(
                kg.test, graph_mod.SplitSelector(cfg.eval_fraction, name))
        reports[name] = evaluation.evaluate(table, split, kg.filter_index, cfg.tie_mode)
    _print_report_table(reports)
    os.makedirs(cfg.output_dir, exist_ok=True)
    config_mod.write_snapshot(cfg, cfg.output_dir)
    metrics_path = os.path.join(cfg.output_dir, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump({name: r.as_dict() for name, r in reports.items()}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {metrics_path}")
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve_config(args)
    cfg.validate()
    kg = _load_graph(cfg)
    table = _load_checkpoint(args.checkpoint, kg)
    report = evaluation.compare_splits(table, kg.test, kg.filter_index,
                                       cfg.eval_fraction, cfg.tie_mode)
    _print_report_table({"top": report.top, "bottom": report.bottom})
    print(f"delta MRR    {report.delta_mrr:+.4f}")
    print(f"delta median {report.delta_median:.4f}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    config_mod.write_snapshot(cfg, cfg.output_dir)
    out_path = os.path.join(cfg.output_dir, "comparison.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out_path}")
    return 0


def cmd_export_scores(args) -> int:
    cfg = _resolve_config(args)
    cfg.validate()
    kg = _load_graph(cfg)
    table = _load_checkpoint(args.checkpoint, kg)
    top = graph_mod.split_by_weight(kg.test, graph_mod.SplitSelector(cfg.eval_fraction, "top"))
    bottom = graph_mod.split_by_weight(
        kg.test, graph_mod.SplitSelector(cfg.eval_fraction, "bottom"))
    os.makedirs(cfg.output_dir, exist_ok=True)
    config_mod.write_snapshot(cfg, cfg.output_dir)
    out = args.out or os.path.join(cfg.output_dir, "scores.csv")
    delta_median = evaluation.export_scores(table, top, bottom, out)
    print(f"wrote {out}")
    print(f"delta median {delta_median:.6f}")
    return 0


def _sweep_one(cfg_dict: dict, field_name: str, value):
    """Train and evaluate one sweep point; runs in-process or in a worker."""
    cfg = config_mod.RunConfig(**cfg_dict)
    setattr(cfg, field_name, value)
    cfg.validate()
    kg = _load_graph(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    config_mod.write_snapshot(cfg, cfg.output_dir)
    table, trace = training.train(kg, cfg.to_train_config())
    training.save_loss_trace(trace, os.path.join(cfg.output_dir, "loss_trace.csv"))
    save_embeddings(table, os.path.join(cfg.output_dir, "model.kge"))
    top = graph_mod.split_by_weight(
        kg.test, graph_mod.SplitSelector(cfg.eval_fraction, "top"))
    report = evaluation.evaluate(table, top, kg.filter_index, cfg.tie_mode)
    return report.mrr


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    cfg.validate()
    field_name, value_type = SWEEP_AXES[args.axis]
    values = [value_type(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("sweep needs at least one value")
    base_dir = cfg.output_dir
    os.makedirs(base_dir, exist_ok=True)

    jobs = []
    for value in values:
        run_cfg = dataclasses.asdict(cfg)
        run_cfg["output_dir"] = os.path.join(base_dir, f"sweep_{args.axis}_{value}")
        jobs.append((run_cfg, field_name, value))

    rows = []
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_one, *job) for job in jobs]
            for value, future in zip(values, futures):
                try:
                    rows.append((value, "ok", future.result()))
                except Exception as exc:  # a failed point must not kill the sweep
                    print(f"sweep point {args.axis}={value} failed: {exc}", file=sys.stderr)
                    rows.append((value, "failed", ""))
    else:
        for (run_cfg, field_name_, value) in jobs:
            try:
                rows.append((value, "ok", _sweep_one(run_cfg, field_name_, value)))
            except Exception as exc:
                print(f"sweep point {args.axis}={value} failed: {exc}", file=sys.stderr)
                rows.append((value, "failed", ""))

    sweep_path = os.path.join(base_dir, "sweep.csv")
    with open(sweep_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("axis,value,status,top_mrr\n")
        for value, status, mrr in rows:
            mrr_text = repr(mrr) if status == "ok" else ""
            fh.write(f"{args.axis},{value},{status},{mrr_text}\n")
    for value, status, mrr in rows:
        print(f"{args.axis}={value}: {status}" + (f" top MRR {mrr:.4f}" if status == "ok" else ""))
    print(f"wrote {sweep_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="focuskge",
                     description="Train and evaluate weighted knowledge graph embeddings")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_stats = sub.add_parser("stats", help="print dataset statistics")
    _add_config_flags(p_stats)
    p_stats.set_defaults(func=cmd_stats)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="filtered ranking metrics for a checkpoint")
    _add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--splits", default="full,top,bottom",
                        help="comma list out of full,top,bottom")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="top- vs bottom-weight split comparison")
    _add_config_flags(p_cmp)
    p_cmp.add_argument("--checkpoint", required=True)
    p_cmp.set_defaults(func=cmd_compare)

    p_exp = sub.add_parser("export-scores", help="dump raw scores of both weight tails")
    _add_config_flags(p_exp)
    p_exp.add_argument("--checkpoint", required=True)
    p_exp.add_argument("--out", default=None, help="CSV path (default: <output_dir>/scores.csv)")
    p_exp.set_defaults(func=cmd_export_scores)

    p_sweep = sub.add_parser("sweep", help="train/evaluate once per hyperparameter value")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values for the chosen axis")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel sweep points (default 1)")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except training.TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
