"""Adam with batch-size-scaled linear warmup, plateau halving, global-norm
clipping and coupled L2, plus the epoch loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ParserModel, forward_batch, parse_corpus, plan_batch
from .transitions import NonProjectiveError, Transition, static_oracle
from .treebank import Sentence, evaluate

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch\tlr\ttrain_loss\tdev_loss\tdev_UAS\tdev_LAS\twallclock_s"


@dataclass
class TrainConfig:
    base_lr: float = 5e-4
    warmup_epochs: float = 5.0
    lr_cap: float = 0.02
    batch_size: int = 8
    clip_norm: float = 5.0
    l2: float = 1e-6
    plateau_factor: float = 0.5
    plateau_patience: int = 1
    max_epochs: int = 20
    seed: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # wallclock is the one non-reproducible column; off gives byte-stable logs
    log_wallclock: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        for name in ("base_lr", "lr_cap", "clip_norm", "plateau_factor", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.warmup_epochs < 0 or self.l2 < 0 or self.plateau_patience < 1:
            raise ValueError("invalid warmup_epochs, l2 or plateau_patience")


def target_lr(config: TrainConfig) -> float:
    return min(config.base_lr * config.batch_size, config.lr_cap)


def plateau_events(config: TrainConfig, dev_history: Sequence[float]) -> int:
    """Number of halvings triggered by ``dev_history`` (dev loss after each
    completed epoch). Only epochs finishing after warmup can trigger one."""
    best = math.inf
    bad = events = 0
    for epoch, loss in enumerate(dev_history, start=1):
        if loss < best:
            best, bad = loss, 0
            continue
        if epoch <= config.warmup_epochs:
            continue
        bad += 1
        if bad >= config.plateau_patience:
            events += 1
            bad = 0
    return events


def lr_at(config: TrainConfig, epoch: float, dev_history: Sequence[float] = ()) -> float:
    """Learning rate at fractional ``epoch`` (0 = start of training)."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    target = target_lr(config)
    if epoch < config.warmup_epochs:
        return config.base_lr + (target - config.base_lr) * (epoch / config.warmup_epochs)
    return target * config.plateau_factor ** plateau_events(config, dev_history)


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most
    ``clip_norm``; returns the scale applied."""
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm <= clip_norm:
        return 1.0
    scale = clip_norm / norm
    for g in grads.values():
        g *= scale
    return scale


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              lr: float, l2: float = 0.0) -> None:
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for name in sorted(params):
        theta = params[name]
        g = grads[name] + l2 * theta if l2 else grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def oracle_corpus(model: ParserModel, sentences: Sequence[Sentence]) -> tuple[list[Sentence], list[list[Transition]], int]:
    """Sentences with static-oracle sequences; non-projective ones are
    dropped and counted."""
    kept, seqs, skipped = [], [], 0
    for s in sentences:
        try:
            seqs.append(static_oracle(model.system, s.tree))
        except NonProjectiveError:
            skipped += 1
            continue
        kept.append(s)
    return kept, seqs, skipped


def batch_loss(model, sentences, oracles, unk_rng=None, singletons=frozenset(), requires_grad=True):
    batch = [model.encode(s, unk_rng, singletons) for s in sentences]
    plan = plan_batch(model, oracles, [s.n for s in batch])
    return forward_batch(model, batch, plan, requires_grad), plan


def dev_loss(model: ParserModel, sentences, oracles, batch_size: int = 32) -> float:
    total = count = 0.0
    for i in range(0, len(sentences), batch_size):
        res, plan = batch_loss(model, sentences[i:i + batch_size], oracles[i:i + batch_size],
                               requires_grad=False)
        steps = plan.loss_mask.sum()
        total += res.loss.value[0, 0] * steps
        count += steps
    return total / count if count else math.nan


def bucket_batches(rng: np.random.Generator, lengths: Sequence[int], batch_size: int) -> list[np.ndarray]:
    """Shuffle, stable-sort by length, cut into batches, shuffle batch order.

    Lanes in a batch then have similar lengths, so little work goes to
    padding hold steps.
    """
    order = rng.permutation(len(lengths))
    order = order[np.argsort(np.asarray(lengths)[order], kind="stable")]
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


@dataclass
class EpochStats:
    sentences: int
    transitions: int
    mean_loss: float
    seconds: float
    last_lr: float


class Trainer:
    """Owns the optimizer state and the data-order RNG for one model."""

    def __init__(self, model: ParserModel, config: TrainConfig):
        self.model = model
        self.config = config
        self.adam = AdamState(config.beta1, config.beta2, config.eps)
        self.rng = np.random.default_rng(config.seed)
        self.singletons = model.vocab.singletons()
        self.dev_history: list[float] = []
        self.updates = 0

    def run_epoch(self, sentences: Sequence[Sentence], oracles: Sequence[Sequence[Transition]],
                  epoch: int, fixed_lr: float | None = None) -> EpochStats:
        cfg = self.config
        batches = bucket_batches(self.rng, [len(s) for s in sentences], cfg.batch_size)
        losses, transitions, lr = [], 0, math.nan
        start = time.perf_counter()
        for k, idx in enumerate(batches):
            frac = epoch + k / len(batches)
            lr = fixed_lr if fixed_lr is not None else lr_at(cfg, frac, self.dev_history)
            res, plan = batch_loss(self.model, [sentences[i] for i in idx], [oracles[i] for i in idx],
                                   self.rng, self.singletons)
            loss = res.loss.value[0, 0]
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, batch {k}")
            res.graph.backward(res.loss)
            names = self.model.trainable()
            grads = {name: res.params[name].grad for name in names}
            clip_gradients(grads, cfg.clip_norm)
            adam_step(self.adam, {name: self.model.params[name] for name in names}, grads, lr, cfg.l2)
            self.updates += 1
            losses.append(loss)
            transitions += int(plan.loss_mask.sum())
        return EpochStats(len(sentences), transitions, float(np.mean(losses)) if losses else math.nan,
                          time.perf_counter() - start, lr)


def train(model: ParserModel, train_sents: Sequence[Sentence], dev_sents: Sequence[Sentence],
          config: TrainConfig, log_path=None) -> list[dict]:
    """Train in place; returns one metrics dict per epoch and appends the
    same rows, tab-separated, to ``log_path``."""
    sents, oracles, skipped = oracle_corpus(model, train_sents)
    if not sents:
        raise ValueError("no projective training sentences")
    if skipped:
        log.info("skipped %d non-projective training sentences", skipped)
    dev_proj, dev_oracles, _ = oracle_corpus(model, dev_sents)
    trainer = Trainer(model, config)
    rows = []
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write(METRICS_HEADER + "\n")
    start = time.perf_counter()
    for epoch in range(config.max_epochs):
        stats = trainer.run_epoch(sents, oracles, epoch)
        d_loss = dev_loss(model, dev_proj, dev_oracles) if dev_proj else math.nan
        uas = las = math.nan
        if dev_sents:
            uas, las = evaluate(dev_sents, parse_corpus(model, dev_sents))
        trainer.dev_history.append(d_loss)
        row = {"epoch": epoch + 1, "lr": stats.last_lr, "train_loss": stats.mean_loss, "dev_loss": d_loss,
               "dev_UAS": uas, "dev_LAS": las, "wallclock_s": time.perf_counter() - start}
        rows.append(row)
        log.info("epoch %d lr %.3g train %.4f dev %.4f UAS %.2f LAS %.2f", epoch + 1, stats.last_lr,
                 stats.mean_loss, d_loss, uas, las)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(format_metrics(row, config.log_wallclock) + "\n")
    return rows


def format_metrics(row: dict, wallclock: bool = True) -> str:
    clock = f"{row['wallclock_s']:.3f}" if wallclock else "-"
    return (f"{row['epoch']}\t{row['lr']:.8g}\t{row['train_loss']:.8f}\t{row['dev_loss']:.8f}\t"
            f"{row['dev_UAS']:.2f}\t{row['dev_LAS']:.2f}\t{clock}")
