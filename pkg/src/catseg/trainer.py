"""Batched teacher-forced training with dev-set model selection.

Every epoch shuffles token examples deterministically, averages the
cross-entropy per target position, and combines segmentation and label
losses as lambda * L_seg + (1 - lambda) * L_tag in joint mode. After each
epoch the dev set is decoded and scored; the parameters of the best epoch
are what the caller gets back.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Graph, backward, zero_grads
from .decoding import decode_corpus
from .evaluation import labeled_seg_f1, seg_prf
from .model import label_targets
from .optim import AdamState, adam_step, clip_global_norm
from .vocab import PAD

logger = logging.getLogger(__name__)


class TrainAbort(RuntimeError):
    """Training hit a non-finite loss and cannot continue."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = None  # None -> by corpus size (40 below 5000 sentences, else 20)
    lam: float = 0.2
    seed: int = 0
    dev_metric: str = "seg_f1"
    patience: int = None
    max_grad_norm: float = 5.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if self.dev_metric not in ("seg_f1", "labeled_f1"):
            raise ValueError(f"unknown dev metric {self.dev_metric!r}")


def default_epochs(n_train_sentences):
    return 40 if n_train_sentences < 5000 else 20


@dataclass
class StepRow:
    epoch: int
    batch: int
    seg_loss: float
    tag_loss: float
    loss: float


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    seg_loss: float
    tag_loss: float
    dev_seg_f1: float
    dev_labeled_f1: float


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    baseline_seg_f1: float = None
    baseline_labeled_f1: float = None
    best_epoch: int = 0
    best_metric: float = None
    wall_time: float = 0.0

    def to_tsv(self, header=None):
        lines = [f"# {h}" for h in header or []]
        labeled = any(r.dev_labeled_f1 is not None for r in self.rows)
        cols = ["epoch", "train_loss", "dev_seg_f1"] + (["dev_labeled_f1"] if labeled else [])
        lines.append("\t".join(cols))
        for r in self.rows:
            row = [str(r.epoch), f"{r.train_loss:.6f}", f"{r.dev_seg_f1:.6f}"]
            if labeled:
                row.append("" if r.dev_labeled_f1 is None else f"{r.dev_labeled_f1:.6f}")
            lines.append("\t".join(row))
        return "\n".join(lines) + "\n"


def make_batches(examples, batch_size, seed, epoch):
    """Deterministic (seed, epoch)-keyed shuffle, chunked to batch_size."""
    if not examples:
        raise ValueError("no training examples")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng(np.uint64(seed) * np.uint64(1_000_003) + np.uint64(epoch))
    order = rng.permutation(len(examples))
    shuffled = [examples[i] for i in order]
    return [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]


@dataclass
class TokenBatch:
    sentences: list  # distinct sentences used by this batch, in first-use order
    refs: list  # (sentence slot, token index) per example row
    char_ids: np.ndarray
    lengths: list
    tgt_ids: np.ndarray
    tgt_mask: np.ndarray
    label_ids: np.ndarray


def build_batch(sentences, examples, model):
    """Pad one batch of (sentence_index, token_index) examples into arrays."""
    slot_of = {}
    batch_sents = []
    refs = []
    entries = []
    for si, ti in examples:
        if si not in slot_of:
            slot_of[si] = len(batch_sents)
            batch_sents.append(sentences[si])
        refs.append((slot_of[si], ti))
        entries.append(sentences[si].tokens[ti])

    B = len(entries)
    lengths = [len(e.surface) for e in entries]
    char_ids = np.full((B, max(lengths)), PAD, dtype=np.int64)
    for b, e in enumerate(entries):
        char_ids[b, : lengths[b]] = model.char_vocab.encode_surface(e.surface)

    targets = [model.char_vocab.target_ids(e.segments) for e in entries]
    T = max(t.shape[0] for t in targets)
    tgt_ids = np.full((B, T), PAD, dtype=np.int64)
    tgt_mask = np.zeros((B, T), dtype=bool)
    label_ids = None
    if model.cfg.joint:
        label_ids = np.full((B, T), -1, dtype=np.int64)
    for b, (e, t) in enumerate(zip(entries, targets)):
        tgt_ids[b, : t.shape[0]] = t
        tgt_mask[b, : t.shape[0]] = True
        if model.cfg.joint:
            if e.labels is None:
                raise ValueError(f"joint training needs labels, token {e.surface!r} has none")
            labs = label_targets(e, model.char_vocab, model.label_vocab)
            label_ids[b, : labs.shape[0]] = labs
    return TokenBatch(batch_sents, refs, char_ids, lengths, tgt_ids, tgt_mask, label_ids)


def batch_loss(model, provider, batch, lam, graph=None):
    """Forward one batch; returns (combined, L_seg, L_tag) tensors."""
    g = graph if graph is not None else Graph()
    ctx = provider.batch_vectors(g, batch.sentences, batch.refs)
    sent = None
    if model.cfg.use_sentence_vector:
        sent = provider.batch_sentence_vectors(g, batch.sentences, [s for s, _ in batch.refs])
    L_seg, L_tag, _ = model.forward_batch(
        g,
        batch.char_ids,
        batch.lengths,
        ctx,
        batch.tgt_ids,
        batch.tgt_mask,
        label_ids=batch.label_ids,
        sent=sent,
    )
    if model.cfg.joint:
        if L_tag is None:
            raise ValueError("joint batch produced no label positions")
        L = g.add(g.scale(L_seg, lam), g.scale(L_tag, 1.0 - lam))
    else:
        L = L_seg
    return g, L, L_seg, L_tag


def _dev_scores(model, provider, corpus_dev, n_threads=1):
    pred, _ = decode_corpus(model, provider, corpus_dev, n_threads=n_threads)
    seg = seg_prf(pred, corpus_dev, n_threads=n_threads).f1
    labeled = None
    if model.cfg.joint:
        labeled = labeled_seg_f1(pred, corpus_dev, n_threads=n_threads).f1
    return seg, labeled


def train(model, corpus_train, corpus_dev, provider, cfg, n_threads=1):
    """Returns (best-dev model, TrainReport); the model is updated in place."""
    if cfg.dev_metric == "labeled_f1" and not model.cfg.joint:
        raise ValueError("labeled_f1 selection needs a joint model")
    if not corpus_dev.sentences:
        raise ValueError("dev corpus is empty; model selection needs one")
    examples = [
        (si, ti)
        for si, sent in enumerate(corpus_train.sentences)
        for ti in range(len(sent.tokens))
    ]
    if not examples:
        raise ValueError("training corpus has no tokens")
    epochs = cfg.epochs if cfg.epochs is not None else default_epochs(len(corpus_train.sentences))

    t0 = time.perf_counter()
    params = model.parameters() + provider.parameters()
    state = AdamState(params, learning_rate=cfg.learning_rate)
    report = TrainReport()
    report.baseline_seg_f1, report.baseline_labeled_f1 = _dev_scores(
        model, provider, corpus_dev, n_threads
    )
    logger.info("dev baseline before training: seg F1 %.4f", report.baseline_seg_f1)

    best_metric = -math.inf
    best_epoch = 0
    best_snapshot = None
    since_improved = 0
    for epoch in range(1, epochs + 1):
        sums = np.zeros(3)
        batches = make_batches(examples, cfg.batch_size, cfg.seed, epoch)
        for bi, chunk in enumerate(batches):
            batch = build_batch(corpus_train.sentences, chunk, model)
            g, L, L_seg, L_tag = batch_loss(model, provider, batch, cfg.lam)
            loss = L.data.item()
            if not math.isfinite(loss):
                raise TrainAbort(
                    f"non-finite loss at epoch {epoch}, batch {bi}, lr {cfg.learning_rate}"
                )
            zero_grads(params)
            backward(g, L)
            clip_global_norm(params, cfg.max_grad_norm)
            adam_step(params, state)
            seg = L_seg.data.item()
            tag = L_tag.data.item() if L_tag is not None else None
            report.steps.append(StepRow(epoch, bi, seg, tag, loss))
            sums += (loss, seg, tag or 0.0)

        nb = len(batches)
        dev_seg, dev_labeled = _dev_scores(model, provider, corpus_dev, n_threads)
        report.rows.append(
            EpochRow(
                epoch,
                sums[0] / nb,
                sums[1] / nb,
                sums[2] / nb if model.cfg.joint else None,
                dev_seg,
                dev_labeled,
            )
        )
        metric = dev_labeled if cfg.dev_metric == "labeled_f1" else dev_seg
        logger.info("epoch %d: train loss %.4f, dev %s %.4f", epoch, sums[0] / nb, cfg.dev_metric, metric)
        if metric > best_metric:
            best_metric = metric
            best_epoch = epoch
            best_snapshot = [p.data.copy() for p in params]
            since_improved = 0
        else:
            since_improved += 1
            if cfg.patience is not None and since_improved >= cfg.patience:
                logger.info("no dev improvement for %d epochs, stopping", cfg.patience)
                break

    if best_snapshot is not None:
        for p, arr in zip(params, best_snapshot):
            p.data = arr
        report.best_epoch = best_epoch
        report.best_metric = best_metric
    report.wall_time = time.perf_counter() - t0
    return model, report


def tune_lambda(grid, build, corpus_train, corpus_dev, cfg, n_threads=1):
    """Train one joint model per lambda; best dev labeled-F1 wins, ties go low.

    `build()` must return a fresh (model, provider) pair each call so every
    lambda starts from identical initialization.
    """
    lams = sorted({float(l) for l in grid})
    if not lams:
        raise ValueError("empty lambda grid")
    for lam in lams:
        if not 0.0 < lam < 1.0:
            raise ValueError(f"lambda {lam} outside (0, 1)")
    results = {}
    best_lam = None
    best_f1 = -math.inf
    for lam in lams:
        model, provider = build()
        _, rep = train(
            model,
            corpus_train,
            corpus_dev,
            provider,
            replace(cfg, lam=lam, dev_metric="labeled_f1"),
            n_threads,
        )
        results[lam] = rep.best_metric
        logger.info("lambda %.3f: dev labeled F1 %.4f", lam, rep.best_metric)
        if rep.best_metric > best_f1:
            best_lam, best_f1 = lam, rep.best_metric
    return best_lam, results
