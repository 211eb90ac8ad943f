"""Timed throughput measurement and depth histogram export."""

from __future__ import annotations

import time

import numpy as np

from .data import TokenBatch
from .model import AdaptiveClassifier


def benchmark_speed(model: AdaptiveClassifier, batches: list[TokenBatch],
                    warmup: int = 2, repeats: int = 5, eval_seed: int = 0) -> dict:
    """Eval-mode forward passes, timed after warmup.

    Returns samples/sec mean and stddev over the repeats, plus the
    hardware-independent transition counters from one pass.
    """
    if repeats < 1:
        raise ValueError("repeats must be positive")
    n_samples = sum(b.size for b in batches)

    def one_pass():
        rng = None
        if model.config.adaptive_depth and model.config.selection == "gumbel":
            rng = np.random.default_rng(eval_seed)
        words = globals_ = 0
        for batch in batches:
            result = model.forward(batch, training=False, rng=rng)
            words += result.word_transitions
            globals_ += result.global_transitions
        return words, globals_

    for _ in range(warmup):
        counters = one_pass()
    rates = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        counters = one_pass()
        rates.append(n_samples / (time.perf_counter() - t0))
    rates = np.asarray(rates)
    return {
        "samples_per_sec": float(rates.mean()),
        "samples_per_sec_std": float(rates.std()),
        "samples": n_samples,
        "word_transitions": counters[0],
        "global_transitions": counters[1],
    }


def depth_histogram(model: AdaptiveClassifier, batches: list[TokenBatch],
                    eval_seed: int = 0) -> dict:
    """Per-token executed depths plus the aggregate frequency table."""
    if not model.config.adaptive_depth:
        raise ValueError("depth histogram needs an adaptive-depth model")
    rng = None
    if model.config.selection == "gumbel":
        rng = np.random.default_rng(eval_seed)
    records: list[tuple[str, int]] = []
    for batch in batches:
        result = model.forward(batch, training=False, rng=rng)
        depths = result.assignment.depths
        for i, toks in enumerate(batch.tokens):
            for j, tok in enumerate(toks):
                records.append((tok, int(depths[i, j])))
    counts: dict[int, int] = {}
    for _, d in records:
        counts[d] = counts.get(d, 0) + 1
    return {"records": records, "counts": counts,
            "total": len(records),
            "mean_depth": float(np.mean([d for _, d in records]))}


def text_bar_chart(counts: dict[int, int], width: int = 40) -> str:
    """Plain-text depth frequency bars."""
    if not counts:
        return "(no tokens)"
    peak = max(counts.values())
    total = sum(counts.values())
    lines = []
    for depth in sorted(counts):
        n = counts[depth]
        bar = "#" * max(1, round(n / peak * width)) if n else ""
        lines.append(f"depth {depth:>2}  {n:>8}  {n / total:6.1%}  {bar}")
    return "\n".join(lines)
