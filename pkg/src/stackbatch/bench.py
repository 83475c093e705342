"""Training throughput across batch sizes and Amdahl parallel fraction."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ParserModel
from .trainer import TrainConfig, Trainer, oracle_corpus
from .treebank import Sentence

log = logging.getLogger(__name__)

CSV_HEADER = ["batch_size", "sent_per_s", "trans_per_s", "speedup", "parallel_fraction", "stddev"]


@dataclass
class BenchResult:
    batch_size: int
    sentences_per_second: float
    transitions_per_second: float
    epoch_seconds: float
    stddev: float
    speedup: float = math.nan
    parallel_fraction: float = math.nan


def amdahl_fraction(speedup: float, batch: int) -> float:
    """Parallel fraction p solving ``S = 1 / ((1 - p) + p / b)``."""
    if batch < 2:
        raise ValueError("amdahl_fraction needs batch >= 2")
    if speedup < 1:
        raise ValueError("speedup must be at least 1")
    if speedup > batch:
        warnings.warn(f"super-linear speedup {speedup:.3g} at batch {batch}; fraction exceeds 1")
    return (1.0 - 1.0 / speedup) / (1.0 - 1.0 / batch)


def amdahl_speedup(fraction: float, batch: int) -> float:
    return 1.0 / ((1.0 - fraction) + fraction / batch)


def measure(model: ParserModel, corpus: Sequence[Sentence], batch_sizes: Sequence[int],
            repeats: int = 1, seed: int = 1, warmup_epochs: int = 1,
            lr: float = 5e-4) -> list[BenchResult]:
    """Time full training epochs (forward, backward, update) per batch size.

    Every batch size starts from a copy of ``model`` with the same seed, so
    the runs differ only in how lanes are grouped. The first
    ``warmup_epochs`` epochs are run but not timed.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if 1 not in batch_sizes:
        raise ValueError("batch_sizes must include 1")
    sents, oracles, _ = oracle_corpus(model, corpus)
    results = []
    for b in sorted(set(batch_sizes)):
        trainer = Trainer(model.copy(), TrainConfig(batch_size=b, seed=seed))
        try:
            for e in range(warmup_epochs):
                trainer.run_epoch(sents, oracles, e, fixed_lr=lr)
            runs = [trainer.run_epoch(sents, oracles, warmup_epochs + r, fixed_lr=lr)
                    for r in range(repeats)]
        except MemoryError:
            log.warning("batch size %d does not fit in memory; skipped", b)
            continue
        tps = np.array([r.transitions / r.seconds for r in runs])
        sps = np.array([r.sentences / r.seconds for r in runs])
        results.append(BenchResult(b, float(sps.mean()), float(tps.mean()),
                                   float(np.mean([r.seconds for r in runs])),
                                   float(tps.std(ddof=1)) if len(runs) > 1 else 0.0))
    base = next((r for r in results if r.batch_size == 1), None)
    for r in results:
        if base is None:
            continue
        r.speedup = r.transitions_per_second / base.transitions_per_second
        if r.batch_size == 1:
            r.speedup = 1.0
        elif r.speedup >= 1.0:
            r.parallel_fraction = amdahl_fraction(r.speedup, r.batch_size)
    return results


def write_csv(results: Sequence[BenchResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in sorted(results, key=lambda r: r.batch_size):
            w.writerow([r.batch_size, repr(r.sentences_per_second), repr(r.transitions_per_second),
                        repr(r.speedup), repr(r.parallel_fraction), repr(r.stddev)])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "batch_size" else float(v)) for k, v in row.items()} for row in rows]


def format_table(results: Sequence[BenchResult]) -> str:
    lines = [f"{'batch':>6} {'sent/s':>10} {'trans/s':>11} {'stddev':>9} {'speedup':>8} {'parallel':>9}"]
    for r in results:
        frac = "-" if math.isnan(r.parallel_fraction) else f"{100 * r.parallel_fraction:.2f}%"
        lines.append(f"{r.batch_size:>6} {r.sentences_per_second:>10.2f} {r.transitions_per_second:>11.1f} "
                     f"{r.stddev:>9.1f} {r.speedup:>8.2f} {frac:>9}")
    return "\n".join(lines)
