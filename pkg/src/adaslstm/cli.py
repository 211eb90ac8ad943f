"""Command-line surface.

Subcommands: ingest-check, synth, train, eval, bench, depths, ablate.
Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter

import numpy as np

from . import bench as bench_mod
from . import data as data_mod
from . import experiment, figures, training
from .config import _FIELDS, ExperimentConfig, apply_settings, load_config
from .errors import ConfigError, DataFormatError, NumericalError
from .reports import write_depth_records


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment config file (key = value lines)")
    parser.epilog = ("any config key is also accepted as a flag, e.g. "
                     "--epochs 8 or --hidden-size 128; flags beat the file")
    group = parser.add_argument_group("config overrides")
    for key in sorted(_FIELDS):
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}",
                           metavar="V", help=argparse.SUPPRESS)


def _gather_config(args) -> ExperimentConfig:
    overrides = {}
    for key in _FIELDS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = value
    if args.config:
        config = load_config(args.config, overrides=overrides)
    else:
        config = ExperimentConfig()
        apply_settings(config, overrides)
    config.validate()
    return config


def _cmd_ingest_check(args) -> int:
    ds = data_mod.ingest(args.data, args.format)
    lengths = [len(r.tokens) for r in ds.records]
    counts = Counter(r.label for r in ds.records)
    print(f"records: {len(ds)}")
    print(f"labels:  {', '.join(f'{lab}={counts[lab]}' for lab in ds.labels)}")
    print(f"tokens:  mean {np.mean(lengths):.1f}, min {min(lengths)}, max {max(lengths)}")
    return 0


_SYNTH_TASKS = {
    "trigger": data_mod.make_trigger_corpus,
    "questions": data_mod.make_question_corpus,
}


def _cmd_synth(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    if args.task == "memorize":
        ds = data_mod.make_memorization_corpus(seed=args.seed)
        path = os.path.join(args.out_dir, "train.tsv")
        data_mod.write_tsv(ds, path)
        print(f"wrote {path} ({len(ds)} records)")
        return 0
    if args.task not in _SYNTH_TASKS:
        raise ConfigError(f"unknown task {args.task!r}")
    train, test = _SYNTH_TASKS[args.task](seed=args.seed)
    for name, ds in (("train", train), ("test", test)):
        path = os.path.join(args.out_dir, f"{name}.tsv")
        data_mod.write_tsv(ds, path)
        print(f"wrote {path} ({len(ds)} records)")
    return 0


def _cmd_train(args) -> int:
    config = _gather_config(args)
    last = {}

    def log(row):
        last.update(row)
        dev = f"  dev {row['dev_accuracy']:.4f}" if "dev_accuracy" in row else ""
        print(f"epoch {row['epoch']:>3}  loss {row['train_loss']:.4f}  "
              f"train {row['train_accuracy']:.4f}{dev}", flush=True)

    report, _ = experiment.run_experiment(config, log=log)
    out = config.output_dir
    if report.test_accuracy is not None:
        print(f"test accuracy: {report.test_accuracy:.4f}")
    print(f"report: {os.path.join(out, 'report.json')}")
    print(f"checkpoint: {os.path.join(out, 'checkpoint.npz')}")
    return 0


def _load_eval_batches(args, model):
    ds = data_mod.ingest(args.data, args.format)
    missing = set(ds.labels) - set(model.labels)
    if missing:
        raise DataFormatError(f"labels not in checkpoint: {sorted(missing)}")
    ds.labels = model.labels
    ds.label_to_id = {lab: i for i, lab in enumerate(model.labels)}
    return ds, data_mod.make_batches(ds, model.vocab, args.batch_size,
                                     model.config.max_word_len)


def _cmd_eval(args) -> int:
    model = training.load_checkpoint(args.checkpoint)
    _, batches = _load_eval_batches(args, model)
    stats = training.evaluate(model, batches, eval_seed=args.seed)
    print(json.dumps({k: stats[k] for k in
                      ("accuracy", "loss", "mean_depth",
                       "word_transitions", "global_transitions")}))
    return 0


def _cmd_bench(args) -> int:
    model = training.load_checkpoint(args.checkpoint)
    _, batches = _load_eval_batches(args, model)
    result = bench_mod.benchmark_speed(model, batches, warmup=args.warmup,
                                       repeats=args.repeats, eval_seed=args.seed)
    print(json.dumps(result))
    print(f"samples/sec: {result['samples_per_sec']:.2f} "
          f"± {result['samples_per_sec_std']:.2f} over {args.repeats} repeats")
    return 0


def _cmd_depths(args) -> int:
    model = training.load_checkpoint(args.checkpoint)
    _, batches = _load_eval_batches(args, model)
    hist = bench_mod.depth_histogram(model, batches, eval_seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    records_path = os.path.join(args.out_dir, "depth_records.jsonl")
    write_depth_records(hist["records"], records_path)
    json_path = os.path.join(args.out_dir, "depth_histogram.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"counts": {str(k): v for k, v in sorted(hist["counts"].items())},
                   "total": hist["total"], "mean_depth": hist["mean_depth"]},
                  fh, indent=2)
        fh.write("\n")
    png_path = os.path.join(args.out_dir, "depth_histogram.png")
    figures.depth_histogram_figure(hist["counts"], png_path)
    print(bench_mod.text_bar_chart(hist["counts"]))
    print(f"mean depth: {hist['mean_depth']:.3f} over {hist['total']} tokens")
    print(f"records: {records_path}")
    return 0


def _cmd_ablate(args) -> int:
    config = _gather_config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    result = experiment.run_ablation(config, variants, seeds)
    print(result["text"])
    print(f"reports under: {config.output_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaslstm",
        description="Depth-adaptive graph-recurrent sentence classifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-check", help="parse a dataset and print statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="tsv", choices=("tsv", "csv", "jsonl"))
    p.set_defaults(fn=_cmd_ingest_check)

    p = sub.add_parser("synth", help="write a synthetic corpus as TSV")
    p.add_argument("--task", required=True, choices=("trigger", "memorize", "questions"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=13)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train per config and write report files")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="tsv", choices=("tsv", "csv", "jsonl"))
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="measure eval throughput of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="tsv", choices=("tsv", "csv", "jsonl"))
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("depths", help="export per-token executed depths")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="tsv", choices=("tsv", "csv", "jsonl"))
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_depths)

    p = sub.add_parser("ablate", help="run the ablation suite")
    _add_config_flags(p)
    p.add_argument("--variants",
                   default=",".join(experiment.ABLATION_VARIANTS),
                   help="comma-separated variant names")
    p.add_argument("--seeds", default="13,14,15", help="comma-separated seeds")
    p.set_defaults(fn=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
