"""Run reports: JSON documents, JSONL records, aligned text tables."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class RunReport:
    """Everything needed to reproduce and summarize one training run."""

    config: dict                 # full flat config snapshot, seed included
    history: list[dict]          # per-epoch metric rows
    test_accuracy: float | None = None
    best_dev_accuracy: float | None = None
    samples_per_sec: float | None = None
    samples_per_sec_std: float | None = None
    mean_depth: float | None = None
    word_transitions: int = 0
    global_transitions: int = 0
    wall_clock_seconds: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "history": self.history,
            "test_accuracy": self.test_accuracy,
            "best_dev_accuracy": self.best_dev_accuracy,
            "samples_per_sec": self.samples_per_sec,
            "samples_per_sec_std": self.samples_per_sec_std,
            "mean_depth": self.mean_depth,
            "word_transitions": self.word_transitions,
            "global_transitions": self.global_transitions,
            "wall_clock_seconds": self.wall_clock_seconds,
            "extras": self.extras,
        }

    def save_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def summary_text(self) -> str:
        rows = [("test accuracy", _fmt(self.test_accuracy)),
                ("best dev accuracy", _fmt(self.best_dev_accuracy)),
                ("mean executed depth", _fmt(self.mean_depth)),
                ("samples / sec", _fmt_pm(self.samples_per_sec, self.samples_per_sec_std)),
                ("word transitions", str(self.word_transitions)),
                ("global transitions", str(self.global_transitions)),
                ("wall clock (s)", f"{self.wall_clock_seconds:.1f}"),
                ("epochs run", str(len(self.history)))]
        lines = ["run summary", "-----------"]
        lines += [f"{k:<22}{v}" for k, v in rows]
        if self.history:
            lines.append("")
            heads = ["epoch", "train_loss", "train_acc", "dev_acc", "lr"]
            table = [[str(r.get("epoch", "")),
                      _fmt(r.get("train_loss"), 4),
                      _fmt(r.get("train_accuracy"), 4),
                      _fmt(r.get("dev_accuracy"), 4),
                      _fmt(r.get("learning_rate"), 6)] for r in self.history]
            lines.append(format_table(heads, table))
        lines.append("")
        lines.append("config")
        lines.append("------")
        lines += [f"{k} = {self.config[k]}" for k in sorted(self.config)]
        return "\n".join(lines) + "\n"

    def save_summary(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.summary_text())


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _fmt_pm(mean, std) -> str:
    if mean is None:
        return "-"
    if std is None:
        return f"{mean:.2f}"
    return f"{mean:.2f} ± {std:.2f}"


def format_table(headers: list[str], rows: list[list[str]]) -> str:
    """Aligned columns, two spaces between, header underlined."""
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out)


def write_jsonl(records: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def write_depth_records(records: list[tuple[str, int]], path: str) -> None:
    """One {"token": ..., "depth": ...} object per line."""
    write_jsonl([{"token": t, "depth": int(d)} for t, d in records], path)
