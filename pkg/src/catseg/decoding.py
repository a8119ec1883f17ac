"""Greedy and beam decoding from a trained segmentation model.

Decoding emits characters until EOT or a per-token step cap
(max_decode_factor * len(surface) + max_decode_slack; canonical segmentation
can lengthen output, so the cap exceeds the input length). SPACE splits the
emitted stream into segments; empty segments are dropped.
"""

from dataclasses import dataclass, field
from concurrent import futures

import numpy as np

from .autodiff import Graph, constant, default_dtype, lstm_cell
from .conllu import Corpus, Sentence, TokenEntry
from .vocab import BOS, EOT, PAD, SPACE, UNK, UNK_CHAR


@dataclass
class DecodeResult:
    segments: list
    labels: list = None
    truncated: bool = False

    @property
    def empty(self):
        return not self.segments


@dataclass
class DecodeStats:
    truncated: list = field(default_factory=list)
    empty: list = field(default_factory=list)

    def merge(self, other):
        self.truncated.extend(other.truncated)
        self.empty.extend(other.empty)


def _assemble(char_vocab, emitted, truncated, joint):
    """Split an emitted (symbol, label) stream into labeled segments."""
    segments, labels = [], []
    buf = []
    for sym, lab in emitted:
        if sym in (SPACE, EOT):
            if buf:
                segments.append("".join(buf))
                labels.append(lab)
            buf = []
            if sym == EOT:
                break
        elif sym == UNK:
            buf.append(UNK_CHAR)
        elif sym in (PAD, BOS):
            continue
        else:
            buf.append(char_vocab.char_of(sym))
    if buf:
        # step cap hit mid-segment: close it with the final state's label read
        segments.append("".join(buf))
        labels.append(emitted[-1][1])
    return DecodeResult(segments, labels if joint else None, truncated)


def greedy_decode_batch(model, surfaces, ctx, sent=None):
    """Argmax decoding of a batch of surfaces with given context rows."""
    dt = default_dtype()
    g = Graph(record=False)
    B = len(surfaces)
    lengths = [len(s) for s in surfaces]
    if min(lengths) == 0:
        raise ValueError("cannot decode an empty surface")
    n = max(lengths)
    char_ids = np.full((B, n), PAD, dtype=np.int64)
    for b, s in enumerate(surfaces):
        char_ids[b, : lengths[b]] = model.char_vocab.encode_surface(s)
    ctx_t = ctx if hasattr(ctx, "data") else constant(np.asarray(ctx, dtype=dt))
    sent_t = None
    if model.cfg.use_sentence_vector:
        sent_t = sent if hasattr(sent, "data") else constant(np.asarray(sent, dtype=dt))
    H3, HW, mask = model.encode_batch(g, char_ids, lengths, ctx_t)
    caps = np.array(
        [model.cfg.max_decode_factor * l + model.cfg.max_decode_slack for l in lengths]
    )
    h = c = constant(np.zeros((B, model.cfg.d_dec), dtype=dt))
    prev = np.full(B, BOS, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    truncated = np.zeros(B, dtype=bool)
    emitted = [[] for _ in range(B)]
    for _ in range(int(caps.max())):
        att, _ = model.attend_batch(g, h, H3, HW, mask)
        emb = g.embedding_lookup(model.char_embed, prev)
        h, c = lstm_cell(g, g.concat([emb, att], axis=1), h, c, model.decoder)
        logits = g.add(g.matmul(h, model.char_W), model.char_b)
        nxt = logits.data.argmax(axis=1)
        labs = None
        if model.cfg.joint:
            labs = model.label_logits(g, h, ctx_t, sent_t).data.argmax(axis=1)
        for b in range(B):
            if done[b]:
                continue
            sym = int(nxt[b])
            emitted[b].append((sym, int(labs[b]) if labs is not None else None))
            if sym == EOT:
                done[b] = True
            elif len(emitted[b]) >= caps[b]:
                done[b] = truncated[b] = True
        if done.all():
            break
        prev = np.where(done, EOT, nxt)
    return [
        _assemble(model.char_vocab, emitted[b], bool(truncated[b]), model.cfg.joint)
        for b in range(B)
    ]


def greedy_decode(model, surface, ctx_vector, sent_vector=None):
    ctx = np.asarray(ctx_vector, dtype=default_dtype())[None, :]
    sent = None
    if model.cfg.use_sentence_vector:
        sent = np.asarray(sent_vector, dtype=default_dtype())[None, :]
    return greedy_decode_batch(model, [surface], ctx, sent)[0]


# ---- beam search ----


@dataclass
class BeamResult:
    ids: list
    labels: list
    score: float
    truncated: bool


def beam_search(step_fn, init_state, width, max_steps, eot_id=EOT, bos_id=BOS):
    """Length-normalized beam search over a generic step function.

    step_fn(state, prev_id) -> (log_probs array, next_state, label or None).
    Score of a finished hypothesis is total log-prob / emitted length. With
    width=1 the search reduces exactly to greedy argmax decoding.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    live = [([], [], 0.0, init_state)]
    finished = []
    for _ in range(max_steps):
        candidates = []
        for ids, labels, lp, state in live:
            prev = ids[-1] if ids else bos_id
            logp, nstate, label = step_fn(state, prev)
            k = min(width, logp.shape[0])
            # stable sort keeps tie order by symbol id, matching argmax
            top = np.argsort(-logp, kind="stable")[:k]
            for sym in top:
                candidates.append(
                    (ids + [int(sym)], labels + [label], lp + float(logp[sym]), nstate)
                )
        candidates.sort(key=lambda cand: -cand[2])
        live = []
        for ids, labels, lp, state in candidates:
            if ids[-1] == eot_id:
                finished.append(BeamResult(ids, labels, lp / len(ids), False))
            elif len(live) < width:
                live.append((ids, labels, lp, state))
        if not live:
            break
    if finished:
        return max(finished, key=lambda r: r.score)
    ids, labels, lp, _ = max(live, key=lambda cand: cand[2] / len(cand[0]))
    return BeamResult(ids, labels, lp / len(ids), True)


def beam_decode(model, surface, ctx_vector, width, sent_vector=None):
    """Beam decoding of one surface; width=1 matches greedy_decode exactly."""
    if width < 1:
        raise ValueError("beam width must be >= 1")
    if not surface:
        raise ValueError("cannot decode an empty surface")
    dt = default_dtype()
    g = Graph(record=False)
    ctx1 = constant(np.asarray(ctx_vector, dtype=dt)[None, :])
    sent1 = None
    if model.cfg.use_sentence_vector:
        sent1 = constant(np.asarray(sent_vector, dtype=dt)[None, :])
    char_ids = model.char_vocab.encode_surface(surface)[None, :]
    H3, HW, mask = model.encode_batch(g, char_ids, [len(surface)], ctx1)
    init = (
        np.zeros((1, model.cfg.d_dec), dtype=dt),
        np.zeros((1, model.cfg.d_dec), dtype=dt),
    )

    def step_fn(state, prev_id):
        gs = Graph(record=False)
        h, c = constant(state[0]), constant(state[1])
        att, _ = model.attend_batch(gs, h, H3, HW, mask)
        emb = gs.embedding_lookup(model.char_embed, np.array([prev_id]))
        h2, c2 = lstm_cell(gs, gs.concat([emb, att], axis=1), h, c, model.decoder)
        logits = gs.add(gs.matmul(h2, model.char_W), model.char_b).data[0].astype(np.float64)
        logp = logits - (np.log(np.exp(logits - logits.max()).sum()) + logits.max())
        label = None
        if model.cfg.joint:
            label = int(model.label_logits(gs, h2, ctx1, sent1).data[0].argmax())
        return logp, (h2.data, c2.data), label

    cap = model.cfg.max_decode_factor * len(surface) + model.cfg.max_decode_slack
    best = beam_search(step_fn, init, width, cap)
    emitted = list(zip(best.ids, best.labels))
    result = _assemble(model.char_vocab, emitted, best.truncated, model.cfg.joint)
    return result, best.score


# ---- corpus decoding ----


def _decode_group(model, provider, group, beam_width):
    refs = [(slot, i) for slot, sent in enumerate(group) for i in range(len(sent.tokens))]
    g = Graph(record=False)
    ctx = provider.batch_vectors(g, group, refs)
    sent_rows = None
    if model.cfg.use_sentence_vector:
        sent_rows = provider.batch_sentence_vectors(g, group, [slot for slot, _ in refs])
    surfaces = [group[slot].tokens[i].surface for slot, i in refs]
    if beam_width == 1:
        results = greedy_decode_batch(model, surfaces, ctx, sent_rows)
    else:
        results = []
        for k, surface in enumerate(surfaces):
            svec = sent_rows.data[k] if sent_rows is not None else None
            res, _ = beam_decode(model, surface, ctx.data[k], beam_width, svec)
            results.append(res)

    out_sentences = []
    stats = DecodeStats()
    pos = 0
    for sent in group:
        tokens = []
        for i, tok in enumerate(sent.tokens):
            res = results[pos]
            pos += 1
            labels = None
            if model.cfg.joint and res.segments:
                labels = [
                    model.label_vocab.label_of(l) if l is not None else "_"
                    for l in res.labels
                ]
            tokens.append(TokenEntry(tok.surface, list(res.segments), labels))
            if res.truncated:
                stats.truncated.append((sent.sent_id, i))
            if res.empty:
                stats.empty.append((sent.sent_id, i))
        out_sentences.append(Sentence(sent.sent_id, tokens))
    return out_sentences, stats


def decode_corpus(model, provider, corpus, beam_width=1, batch_tokens=256, n_threads=1):
    """Decode every token of a corpus into a predicted corpus plus stats.

    Sentences are grouped to roughly batch_tokens tokens per forward pass.
    Groups may decode on worker threads; results merge in corpus order.
    """
    groups = []
    current, count = [], 0
    for sent in corpus.sentences:
        current.append(sent)
        count += len(sent.tokens)
        if count >= batch_tokens:
            groups.append(current)
            current, count = [], 0
    if current:
        groups.append(current)

    if n_threads > 1 and len(groups) > 1:
        with futures.ThreadPoolExecutor(max_workers=n_threads) as pool:
            outputs = list(
                pool.map(lambda grp: _decode_group(model, provider, grp, beam_width), groups)
            )
    else:
        outputs = [_decode_group(model, provider, grp, beam_width) for grp in groups]

    sentences = []
    stats = DecodeStats()
    for sents, st in outputs:
        sentences.extend(sents)
        stats.merge(st)
    return Corpus(sentences, split_tag=corpus.split_tag), stats
