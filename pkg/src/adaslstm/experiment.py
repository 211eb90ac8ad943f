"""Experiment runner: config in, trained model plus report files out."""

from __future__ import annotations

import os
import time

import numpy as np

from . import bench, data, figures, training
from .config import ExperimentConfig
from .embedding import Vocab, load_pretrained
from .errors import ConfigError
from .model import AdaptiveClassifier
from .reports import RunReport, format_table, write_jsonl
from .tensor import Tensor

# Each ablation variant is a set of flat config overrides on the base run.
ABLATION_VARIANTS = {
    "full": {},
    "no_adaptive": {"adaptive_depth": False},
    "no_bilstm": {"sequential": "none"},
    "pe_sinusoidal": {"sequential": "sinusoidal"},
    "pe_learned": {"sequential": "learned"},
    "hard_selection": {"selection": "hard"},
    "soft_selection": {"selection": "soft"},
}


def _load_datasets(config: ExperimentConfig):
    if not config.train_data:
        raise ConfigError("train_data is required")
    if not os.path.exists(config.train_data):
        raise ConfigError(f"train_data path does not exist: {config.train_data}")
    train = data.ingest(config.train_data, config.data_format)
    dev = test = None
    if config.dev_data:
        dev = data.ingest(config.dev_data, config.data_format)
    if config.test_data:
        test = data.ingest(config.test_data, config.data_format)
    labels = sorted(set(train.labels)
                    | (set(dev.labels) if dev else set())
                    | (set(test.labels) if test else set()))
    for ds in (train, dev, test):
        if ds is not None:
            ds.labels = labels
            ds.label_to_id = {lab: i for i, lab in enumerate(labels)}
    return train, dev, test


def build_model(config: ExperimentConfig, train_set: data.TextDataset,
                labels: list[str]) -> AdaptiveClassifier:
    vocab = Vocab.from_corpus(train_set.sentences(), min_freq=config.train.min_freq)
    word_table = None
    if config.word_vectors:
        rng = np.random.default_rng(config.train.seed)
        table, _ = load_pretrained(config.word_vectors, vocab,
                                   config.model.word_dim, rng,
                                   dtype=config.model.np_dtype)
        # pretrained rows stay fixed during training
        word_table = Tensor(table, requires_grad=False)
    return AdaptiveClassifier(config.model, vocab, labels,
                              seed=config.train.seed, word_table=word_table)


def run_experiment(config: ExperimentConfig, out_dir: str | None = None,
                   log=None) -> tuple[RunReport, AdaptiveClassifier]:
    """Train per config, evaluate, benchmark, and write the report files.

    Writes report.json, summary.txt, curves.png, and checkpoint.npz under
    the output directory.
    """
    config.validate()
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    train, dev, test = _load_datasets(config)
    model = build_model(config, train, train.labels)
    history = training.fit(model, train, config.train, dev_set=dev, log=log)

    report = RunReport(config=config.to_dict(), history=history["epochs"],
                       best_dev_accuracy=history["best_dev_accuracy"])
    if config.train.cv_folds >= 2:
        cv = training.cross_validate(train, config.model, config.train,
                                     config.train.cv_folds)
        report.extras["cv_fold_accuracies"] = cv["fold_accuracies"]
        report.extras["cv_mean_accuracy"] = cv["mean_accuracy"]
    if test is not None:
        test_batches = data.make_batches(test, model.vocab, config.train.batch_size,
                                         config.model.max_word_len,
                                         max_len=config.train.max_len)
        stats = training.evaluate(model, test_batches, eval_seed=config.train.seed)
        report.test_accuracy = stats["accuracy"]
        report.mean_depth = stats["mean_depth"]
        report.word_transitions = stats["word_transitions"]
        report.global_transitions = stats["global_transitions"]
        speed = bench.benchmark_speed(model, test_batches, warmup=1, repeats=3,
                                      eval_seed=config.train.seed)
        report.samples_per_sec = speed["samples_per_sec"]
        report.samples_per_sec_std = speed["samples_per_sec_std"]
    report.wall_clock_seconds = time.time() - t0

    report.save_json(os.path.join(out_dir, "report.json"))
    report.save_summary(os.path.join(out_dir, "summary.txt"))
    if report.history:
        figures.training_curves(report.history, os.path.join(out_dir, "curves.png"))
    training.save_checkpoint(model, os.path.join(out_dir, "checkpoint.npz"))
    return report, model


def run_ablation(config: ExperimentConfig, variants: list[str], seeds: list[int],
                 out_dir: str | None = None, log=None) -> dict:
    """Run each variant once per seed; aggregate accuracy and speed.

    Writes ablation.json, ablation.jsonl (one row per run), ablation.txt
    (aligned table), and ablation.png.
    """
    from .config import config_from_dict

    unknown = [v for v in variants if v not in ABLATION_VARIANTS]
    if unknown:
        raise ConfigError(f"unknown ablation variants {unknown}; "
                          f"choose from {sorted(ABLATION_VARIANTS)}")
    if not seeds:
        raise ConfigError("ablation needs at least one seed")
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    base = config.to_dict()
    runs = []
    table = {}
    for variant in variants:
        accs, rates, proxies = [], [], []
        for seed in seeds:
            overrides = dict(base)
            overrides.update(ABLATION_VARIANTS[variant])
            overrides["seed"] = seed
            vconf = config_from_dict(overrides)
            vconf.validate()
            run_dir = os.path.join(out_dir, f"{variant}_seed{seed}")
            report, _ = run_experiment(vconf, out_dir=run_dir, log=log)
            runs.append({"variant": variant, "seed": seed,
                         "test_accuracy": report.test_accuracy,
                         "samples_per_sec": report.samples_per_sec,
                         "word_transitions": report.word_transitions,
                         "mean_depth": report.mean_depth})
            accs.append(report.test_accuracy)
            rates.append(report.samples_per_sec)
            proxies.append(report.word_transitions)
        table[variant] = {
            "accuracy_mean": float(np.mean(accs)),
            "accuracy_std": float(np.std(accs)),
            "samples_per_sec_mean": float(np.mean(rates)),
            "samples_per_sec_std": float(np.std(rates)),
            "word_transitions": int(proxies[0]),
        }

    result = {"variants": table, "runs": runs, "seeds": seeds}
    write_jsonl(runs, os.path.join(out_dir, "ablation.jsonl"))
    with open(os.path.join(out_dir, "ablation.json"), "w", encoding="utf-8") as fh:
        import json
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    headers = ["variant", "accuracy", "samples/sec", "word transitions"]
    rows = [[v,
             f"{t['accuracy_mean']:.4f} ± {t['accuracy_std']:.4f}",
             f"{t['samples_per_sec_mean']:.2f} ± {t['samples_per_sec_std']:.2f}",
             str(t["word_transitions"])] for v, t in table.items()]
    text = format_table(headers, rows)
    with open(os.path.join(out_dir, "ablation.txt"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    figures.ablation_figure(list(table), [t["accuracy_mean"] for t in table.values()],
                            [t["accuracy_std"] for t in table.values()],
                            os.path.join(out_dir, "ablation.png"))
    result["text"] = text
    return result
