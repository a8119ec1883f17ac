"""Segmentation scoring: four F1 metrics and a boundary-error taxonomy.

All metrics micro-average matched/predicted/gold counts over the corpus.
Matching units per task: surface segments (seg), (segment, label) pairs
(pos), form-head-relation triplets after edit-distance alignment of the
segment sequences (dep), and labeled entity spans decoded from BIOSE tags
(ner).
"""

import logging
import random
from collections import Counter
from concurrent import futures
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    task: str
    precision: float
    recall: float
    f1: float
    matched: int
    predicted: int
    gold: int

    @classmethod
    def from_counts(cls, task, matched, predicted, gold):
        p = matched / predicted if predicted else 0.0
        r = matched / gold if gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(task, p, r, f1, matched, predicted, gold)

    def format_lines(self):
        return [
            f"task {self.task}",
            f"precision {self.precision:.4f}",
            f"recall {self.recall:.4f}",
            f"F1 {self.f1:.4f}",
            f"matched {self.matched}",
            f"predicted {self.predicted}",
            f"gold {self.gold}",
        ]


def _sentence_pairs(pred, gold, check_tokens=True):
    if len(pred.sentences) != len(gold.sentences):
        raise ValueError(
            f"corpora differ in sentence count: {len(pred.sentences)} vs {len(gold.sentences)}"
        )
    pairs = list(zip(pred.sentences, gold.sentences))
    if check_tokens:
        for ps, gs in pairs:
            if len(ps.tokens) != len(gs.tokens):
                raise ValueError(
                    f"sentence {gs.sent_id!r}: token count mismatch "
                    f"({len(ps.tokens)} predicted vs {len(gs.tokens)} gold)"
                )
    return pairs


def _sum_counts(pairs, count_fn, n_threads=1):
    """Ordered reduction of per-sentence (matched, predicted, gold) counts."""
    if n_threads > 1 and len(pairs) > 1:
        chunks = np.array_split(np.arange(len(pairs)), n_threads)
        with futures.ThreadPoolExecutor(max_workers=n_threads) as pool:
            partials = list(
                pool.map(lambda idx: [count_fn(pairs[i]) for i in idx], chunks)
            )
        counts = [c for chunk in partials for c in chunk]
    else:
        counts = [count_fn(pair) for pair in pairs]
    m = sum(c[0] for c in counts)
    p = sum(c[1] for c in counts)
    g = sum(c[2] for c in counts)
    return m, p, g


def multiset_intersection_size(a, b):
    return sum((Counter(a) & Counter(b)).values())


def seg_prf(pred, gold, n_threads=1):
    """Per-token multiset overlap of predicted vs gold surface segments."""
    pairs = _sentence_pairs(pred, gold)

    def count(pair):
        ps, gs = pair
        m = p = g = 0
        for ptok, gtok in zip(ps.tokens, gs.tokens):
            m += multiset_intersection_size(ptok.segments, gtok.segments)
            p += len(ptok.segments)
            g += len(gtok.segments)
        return m, p, g

    return EvalReport.from_counts("seg", *_sum_counts(pairs, count, n_threads))


def labeled_seg_f1(pred, gold, n_threads=1):
    """seg_prf over (segment, label) pairs instead of bare segments."""
    pairs = _sentence_pairs(pred, gold)

    def items(sent, tok):
        if tok.labels is None:
            raise ValueError(f"sentence {sent.sent_id!r}: token {tok.surface!r} has no labels")
        return list(zip(tok.segments, tok.labels))

    def count(pair):
        ps, gs = pair
        m = p = g = 0
        for ptok, gtok in zip(ps.tokens, gs.tokens):
            pi, gi = items(ps, ptok), items(gs, gtok)
            m += multiset_intersection_size(pi, gi)
            p += len(pi)
            g += len(gi)
        return m, p, g

    return EvalReport.from_counts("pos", *_sum_counts(pairs, count, n_threads))


# ---- edit-distance alignment ----


def align_sequences(a, b):
    """Minimum-edit alignment between sequences a and b as (kind, i, j) ops.

    kind is match/sub (consumes one element of each), del (a[i] only), or
    ins (b[j] only). Ties resolve walking left to right, preferring match,
    then substitution, then deletion.
    """
    n, m = len(a), len(b)
    # D[i][j] = edit distance between a[i:] and b[j:]
    D = np.zeros((n + 1, m + 1), dtype=np.int64)
    D[n, :] = m - np.arange(m + 1)
    D[:, m] = n - np.arange(n + 1)
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            step = 0 if a[i] == b[j] else 1
            D[i, j] = min(D[i + 1, j + 1] + step, D[i + 1, j] + 1, D[i, j + 1] + 1)
    ops = []
    i = j = 0
    while i < n or j < m:
        if i < n and j < m and a[i] == b[j] and D[i + 1, j + 1] == D[i, j]:
            ops.append(("match", i, j))
            i += 1
            j += 1
        elif i < n and j < m and D[i + 1, j + 1] + 1 == D[i, j]:
            ops.append(("sub", i, j))
            i += 1
            j += 1
        elif i < n and D[i + 1, j] + 1 == D[i, j]:
            ops.append(("del", i, j))
            i += 1
        else:
            ops.append(("ins", i, j))
            j += 1
    return ops


def _triplets(sent):
    """(form, head form or ROOT, relation) per word row of a parsed sentence."""
    if sent.dep_annotations is None:
        raise ValueError(f"sentence {sent.sent_id!r} lacks dependency annotations")
    forms = [form for form, _, _ in sent.dep_annotations]
    return [
        (form, "ROOT" if head == 0 else forms[head - 1], rel)
        for form, head, rel in sent.dep_annotations
    ]


def aligned_fhr_f1(pred, gold, n_threads=1):
    """F1 over form-head-relation triplets of aligned segment pairs.

    Segment sequences are aligned by edit distance over their strings; a
    match or substitution pair counts as matched when both sides carry the
    same triplet. Heads compare by form (ROOT for head 0) since row indices
    are incomparable across segmentations.
    """
    pairs = _sentence_pairs(pred, gold, check_tokens=False)

    def count(pair):
        ps, gs = pair
        pt, gt = _triplets(ps), _triplets(gs)
        ops = align_sequences([t[0] for t in pt], [t[0] for t in gt])
        m = sum(1 for kind, i, j in ops if kind in ("match", "sub") and pt[i] == gt[j])
        return m, len(pt), len(gt)

    return EvalReport.from_counts("dep", *_sum_counts(pairs, count, n_threads))


# ---- NER spans ----


def decode_biose(tags, forms, where=""):
    """Labeled spans from BIOSE tags; malformed transitions repaired as B."""
    spans = []
    open_type, open_parts = None, []

    def close():
        nonlocal open_type, open_parts
        spans.append(("".join(open_parts), open_type))
        open_type, open_parts = None, []

    for i, tag in enumerate(tags):
        if tag == "O":
            prefix, etype = "O", None
        elif len(tag) > 2 and tag[1] == "-" and tag[0] in "BISE":
            prefix, etype = tag[0], tag[2:]
        else:
            raise ValueError(f"unknown BIOSE tag {tag!r}{where}")
        if prefix == "O":
            if open_type is not None:
                logger.warning("unterminated span before position %d%s", i, where)
                close()
        elif prefix == "S":
            if open_type is not None:
                logger.warning("unterminated span before position %d%s", i, where)
                close()
            spans.append((forms[i], etype))
        elif prefix == "B":
            if open_type is not None:
                logger.warning("unterminated span before position %d%s", i, where)
                close()
            open_type, open_parts = etype, [forms[i]]
        elif open_type == etype:
            open_parts.append(forms[i])
            if prefix == "E":
                close()
        else:
            logger.warning("tag %r at position %d lacks an open span; treating as B%s", tag, i, where)
            if open_type is not None:
                close()
            open_type, open_parts = etype, [forms[i]]
    if open_type is not None:
        logger.warning("unterminated span at sequence end%s", where)
        close()
    return spans


def ner_span_f1(pred, gold, n_threads=1):
    """F1 over (concatenated span surface, entity type) from BIOSE labels."""
    pairs = _sentence_pairs(pred, gold)

    def spans_of(sent):
        forms, tags = [], []
        for tok in sent.tokens:
            if tok.labels is None:
                raise ValueError(
                    f"sentence {sent.sent_id!r}: token {tok.surface!r} has no BIOSE labels"
                )
            forms.extend(tok.segments)
            tags.extend(tok.labels)
        return decode_biose(tags, forms, where=f" (sentence {sent.sent_id!r})")

    def count(pair):
        ps, gs = pair
        sp, sg = spans_of(ps), spans_of(gs)
        return multiset_intersection_size(sp, sg), len(sp), len(sg)

    return EvalReport.from_counts("ner", *_sum_counts(pairs, count, n_threads))


# ---- error taxonomy ----

BREAKDOWN_CATEGORIES = (
    ("over_seg_prefix", "Over-seg. prefix"),
    ("under_seg_prefix", "Under-seg. prefix"),
    ("over_seg_suffix", "Over-seg. suffix"),
    ("under_seg_suffix", "Under-seg. suffix"),
    ("model_artifacts", "Model artifacts"),
)


@dataclass
class ErrorBreakdown:
    over_seg_prefix: int = 0
    under_seg_prefix: int = 0
    over_seg_suffix: int = 0
    under_seg_suffix: int = 0
    model_artifacts: int = 0
    sampled_sentences: int = 0

    @property
    def total(self):
        return sum(getattr(self, name) for name, _ in BREAKDOWN_CATEGORIES)

    def format_table(self):
        total = self.total
        lines = []
        for name, title in BREAKDOWN_CATEGORIES:
            count = getattr(self, name)
            pct = 100.0 * count / total if total else 0.0
            lines.append(f"{title}\t{pct:.1f}% ({count})")
        lines.append(f"Total\t100.0% ({total})" if total else "Total\t0.0% (0)")
        return lines


def _boundary_offsets(segments):
    """Internal split positions in the concatenation of the segments."""
    offsets = []
    pos = 0
    for seg in segments[:-1]:
        pos += len(seg)
        offsets.append(pos)
    return offsets


def _stem_midpoint(gold_segments):
    """Midpoint of the longest gold segment (ties leftmost) in concat coordinates."""
    best_k = max(range(len(gold_segments)), key=lambda k: (len(gold_segments[k]), -k))
    start = sum(len(s) for s in gold_segments[:best_k])
    return start + len(gold_segments[best_k]) / 2.0


def classify_token_errors(pred_segments, gold_segments, breakdown):
    """Add one mismatching token's events to the breakdown.

    Character-aligns the two concatenations; any substitution or indel makes
    the token a model artifact (counted once). Split boundaries map through
    the alignment into gold coordinates; surplus pred boundaries are
    over-segmentation, missing ones under-segmentation, each prefix or
    suffix by position relative to the stem midpoint.
    """
    if pred_segments == gold_segments:
        return
    cp, cg = "".join(pred_segments), "".join(gold_segments)
    if cp == cg:
        offset_map = list(range(len(cp) + 1))
    else:
        breakdown.model_artifacts += 1
        offset_map = [0] * (len(cp) + 1)
        i = j = 0
        for kind, _, _ in align_sequences(cp, cg):
            if kind in ("match", "sub"):
                i += 1
                j += 1
                offset_map[i] = j
            elif kind == "del":
                i += 1
                offset_map[i] = j
            else:
                j += 1
        offset_map[len(cp)] = len(cg)
    pred_b = Counter(offset_map[off] for off in _boundary_offsets(pred_segments))
    gold_b = Counter(_boundary_offsets(gold_segments))
    midpoint = _stem_midpoint(gold_segments)
    for off, count in sorted((pred_b - gold_b).items()):
        if off < midpoint:
            breakdown.over_seg_prefix += count
        else:
            breakdown.over_seg_suffix += count
    for off, count in sorted((gold_b - pred_b).items()):
        if off < midpoint:
            breakdown.under_seg_prefix += count
        else:
            breakdown.under_seg_suffix += count


def analyze_errors(pred, gold, sample_size=None, seed=0):
    """Error taxonomy over a seeded sample of sentences (default min(100, n))."""
    pairs = _sentence_pairs(pred, gold)
    n = len(pairs)
    if n == 0:
        raise ValueError("cannot analyze an empty corpus")
    if sample_size is None:
        sample_size = min(100, n)
    elif not 0 < sample_size <= n:
        raise ValueError(f"sample size {sample_size} not in 1..{n}")
    picked = sorted(random.Random(seed).sample(range(n), sample_size))
    breakdown = ErrorBreakdown(sampled_sentences=sample_size)
    for idx in picked:
        ps, gs = pairs[idx]
        for ptok, gtok in zip(ps.tokens, gs.tokens):
            classify_token_errors(ptok.segments, gtok.segments, breakdown)
    return breakdown


def exact_match_accuracy(pred, gold, select=None):
    """Fraction of tokens whose predicted segment list equals gold exactly.

    `select` optionally restricts scoring to a set of (sent_id, token_idx).
    """
    pairs = _sentence_pairs(pred, gold)
    correct = total = 0
    for ps, gs in pairs:
        for k, (ptok, gtok) in enumerate(zip(ps.tokens, gs.tokens)):
            if select is not None and (gs.sent_id, k) not in select:
                continue
            total += 1
            correct += ptok.segments == gtok.segments
    if total == 0:
        raise ValueError("no tokens selected for accuracy")
    return correct / total
