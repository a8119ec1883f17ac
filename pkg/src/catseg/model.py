"""Character-level attention encoder-decoder for token segmentation.

A token's characters run through a BiLSTM whose input at every position is
concat(char embedding, context vector). An LSTM decoder with additive
attention then emits characters, SPACE between segments, and EOT at the end.
In joint mode a label head reads the decoder state at every SPACE/EOT
position and classifies the segment that just closed.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Graph,
    LSTMParams,
    Tensor,
    constant,
    default_dtype,
    lstm_cell,
    uniform_init,
)
from .vocab import BOS, EOT, SPACE


@dataclass
class ModelConfig:
    d_char: int = 100
    d_enc: int = 256
    d_dec: int = 256
    d_att: int = 128
    joint: bool = False
    use_sentence_vector: bool = False
    char_encoder_enabled: bool = True
    max_decode_factor: int = 3
    max_decode_slack: int = 10

    def __post_init__(self):
        for field in ("d_char", "d_enc", "d_dec", "d_att"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        if self.use_sentence_vector and not self.joint:
            raise ValueError("use_sentence_vector requires joint mode")

    def to_dict(self):
        return dict(self.__dict__)


def label_targets(entry, char_vocab, label_vocab):
    """Per-target-position label ids; -1 where no segment closes."""
    tgt = char_vocab.target_ids(entry.segments)
    out = np.full(tgt.shape[0], -1, dtype=np.int64)
    seg = 0
    for t, sym in enumerate(tgt):
        if sym in (SPACE, EOT):
            out[t] = label_vocab.id_for(entry.labels[seg])
            seg += 1
    return out


class CatsModel:
    """Segmentation network plus its vocabularies and dimension record."""

    def __init__(self, cfg, char_vocab, label_vocab=None, d_ctx=0, d_sent=0, seed=0):
        if d_ctx <= 0:
            raise ValueError("d_ctx must be positive")
        if cfg.joint and label_vocab is None:
            raise ValueError("joint mode needs a label vocabulary")
        if cfg.use_sentence_vector and d_sent <= 0:
            raise ValueError("use_sentence_vector needs a provider with sentence vectors")
        self.cfg = cfg
        self.char_vocab = char_vocab
        self.label_vocab = label_vocab
        self.d_ctx = d_ctx
        self.d_sent = d_sent if cfg.use_sentence_vector else 0

        rng = np.random.default_rng(seed)
        V = len(char_vocab)
        self.char_embed = Tensor(uniform_init(rng, (V, cfg.d_char)), trainable=True, name="char_embed")
        if cfg.char_encoder_enabled:
            self.enc_fw = LSTMParams.init(rng, cfg.d_char + d_ctx, cfg.d_enc, prefix="enc_fw")
            self.enc_bw = LSTMParams.init(rng, cfg.d_char + d_ctx, cfg.d_enc, prefix="enc_bw")
            self.pseudo_W = self.pseudo_b = None
        else:
            self.enc_fw = self.enc_bw = None
            self.pseudo_W = Tensor(uniform_init(rng, (d_ctx, 2 * cfg.d_enc)), trainable=True, name="pseudo.W")
            self.pseudo_b = Tensor(np.zeros(2 * cfg.d_enc, dtype=default_dtype()), trainable=True, name="pseudo.b")
        self.W_s = Tensor(uniform_init(rng, (cfg.d_dec, cfg.d_att)), trainable=True, name="att.W_s")
        self.W_h = Tensor(uniform_init(rng, (2 * cfg.d_enc, cfg.d_att)), trainable=True, name="att.W_h")
        self.v = Tensor(uniform_init(rng, (cfg.d_att,)), trainable=True, name="att.v")
        self.decoder = LSTMParams.init(rng, cfg.d_char + 2 * cfg.d_enc, cfg.d_dec, prefix="dec")
        self.char_W = Tensor(uniform_init(rng, (cfg.d_dec, V)), trainable=True, name="char_head.W")
        self.char_b = Tensor(np.zeros(V, dtype=default_dtype()), trainable=True, name="char_head.b")
        if cfg.joint:
            L = len(label_vocab)
            d_in = cfg.d_dec + d_ctx + self.d_sent
            self.label_W = Tensor(uniform_init(rng, (d_in, L)), trainable=True, name="label_head.W")
            self.label_b = Tensor(np.zeros(L, dtype=default_dtype()), trainable=True, name="label_head.b")
        else:
            self.label_W = self.label_b = None

    def named_parameters(self):
        out = [("char_embed", self.char_embed)]
        if self.cfg.char_encoder_enabled:
            for tag, p in (("enc_fw", self.enc_fw), ("enc_bw", self.enc_bw)):
                out += [(f"{tag}.W", p.W), (f"{tag}.U", p.U), (f"{tag}.b", p.b)]
        else:
            out += [("pseudo.W", self.pseudo_W), ("pseudo.b", self.pseudo_b)]
        out += [("att.W_s", self.W_s), ("att.W_h", self.W_h), ("att.v", self.v)]
        out += [("dec.W", self.decoder.W), ("dec.U", self.decoder.U), ("dec.b", self.decoder.b)]
        out += [("char_head.W", self.char_W), ("char_head.b", self.char_b)]
        if self.cfg.joint:
            out += [("label_head.W", self.label_W), ("label_head.b", self.label_b)]
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def describe(self):
        d = self.cfg.to_dict()
        d.update(
            d_ctx=self.d_ctx,
            d_sent=self.d_sent,
            n_chars=len(self.char_vocab),
            n_labels=len(self.label_vocab) if self.label_vocab is not None else 0,
        )
        return d

    # ---- batched forward cores ----

    def encode_batch(self, graph, char_ids, lengths, ctx):
        """(B,n) char id matrix -> (H3 (n,B,2*d_enc), HW (n,B,d_att), mask (B,n))."""
        dt = default_dtype()
        B, n = char_ids.shape
        two_enc = 2 * self.cfg.d_enc
        if not self.cfg.char_encoder_enabled:
            H1 = graph.add(graph.matmul(ctx, self.pseudo_W), self.pseudo_b)
            H3 = graph.reshape(H1, (1, B, two_enc))
            mask = np.ones((B, 1), dtype=bool)
        else:
            xs = [
                graph.concat([graph.embedding_lookup(self.char_embed, char_ids[:, j]), ctx], axis=1)
                for j in range(n)
            ]
            zeros = constant(np.zeros((B, self.cfg.d_enc), dtype=dt))
            h = c = zeros
            fw = []
            for j in range(n):
                h, c = lstm_cell(graph, xs[j], h, c, self.enc_fw)
                fw.append(h)
            # backward states update only inside each row's valid span
            lens = np.asarray(lengths)
            h = c = zeros
            bw = [None] * n
            ones_row = np.ones((1, self.cfg.d_enc), dtype=dt)
            for j in range(n - 1, -1, -1):
                keep = (lens > j).astype(dt)[:, None] * ones_row
                h2, c2 = lstm_cell(graph, xs[j], h, c, self.enc_bw)
                km, ikm = constant(keep), constant(1.0 - keep)
                h = graph.add(graph.mul(h2, km), graph.mul(h, ikm))
                c = graph.add(graph.mul(c2, km), graph.mul(c, ikm))
                bw[j] = h
            rows = [
                graph.reshape(graph.concat([fw[j], bw[j]], axis=1), (1, B, two_enc))
                for j in range(n)
            ]
            H3 = rows[0] if n == 1 else graph.concat(rows, axis=0)
            mask = lens[:, None] > np.arange(n)[None, :]
        HW = graph.matmul(H3, self.W_h)
        return H3, HW, mask

    def attend_batch(self, graph, s, H3, HW, mask):
        """Additive attention of decoder states s (B,d_dec) over H3."""
        n, B, _ = H3.shape
        q = graph.matmul(s, self.W_s)
        u = graph.tanh(graph.add(HW, q))
        e = graph.matmul(graph.reshape(u, (n * B, self.cfg.d_att)), self.v)
        alpha = graph.softmax(graph.transpose2d(graph.reshape(e, (n, B))), mask)
        return graph.attention_mix(alpha, H3), alpha

    def label_logits(self, graph, h, ctx, sent=None, rows=None):
        """Label head on concat(decoder state, context[, sentence vector])."""
        feats = [h, ctx]
        if self.cfg.use_sentence_vector:
            feats.append(sent)
        if rows is not None:
            feats = [graph.embedding_lookup(f, rows) for f in feats]
        return graph.add(graph.matmul(graph.concat(feats, axis=1), self.label_W), self.label_b)

    def forward_batch(
        self,
        graph,
        char_ids,
        lengths,
        ctx,
        tgt_ids,
        tgt_mask,
        label_ids=None,
        sent=None,
        collect_logits=False,
    ):
        """Teacher-forced losses over a padded batch.

        Returns (L_seg, L_tag or None, per-step char logits or None); both
        losses are means over their unmasked positions.
        """
        dt = default_dtype()
        B, T = tgt_ids.shape
        H3, HW, mask = self.encode_batch(graph, char_ids, lengths, ctx)
        h = c = constant(np.zeros((B, self.cfg.d_dec), dtype=dt))
        prev = np.full(B, BOS, dtype=np.int64)
        total = float(tgt_mask.sum())
        if total == 0:
            raise ValueError("batch has no target positions")
        step_losses = None
        logits_list = [] if collect_logits else None
        label_groups = []
        for t in range(T):
            att, _ = self.attend_batch(graph, h, H3, HW, mask)
            emb = graph.embedding_lookup(self.char_embed, prev)
            x = graph.concat([emb, att], axis=1)
            h, c = lstm_cell(graph, x, h, c, self.decoder)
            logits = graph.add(graph.matmul(h, self.char_W), self.char_b)
            safe_tgt = np.where(tgt_mask[:, t], tgt_ids[:, t], 0)
            losses = graph.mul(
                graph.cross_entropy(logits, safe_tgt), constant(tgt_mask[:, t].astype(dt))
            )
            step_losses = losses if step_losses is None else graph.add(step_losses, losses)
            if collect_logits:
                logits_list.append(logits)
            if self.cfg.joint and label_ids is not None:
                close = tgt_mask[:, t] & ((tgt_ids[:, t] == SPACE) | (tgt_ids[:, t] == EOT))
                rows = np.nonzero(close)[0]
                if rows.size:
                    label_groups.append((t, rows, h))
            prev = tgt_ids[:, t]
        L_seg = graph.scale(graph.sum_all(step_losses), 1.0 / total)
        L_tag = None
        if label_groups:
            parts = []
            count = 0
            for t, rows, h_t in label_groups:
                z = self.label_logits(graph, h_t, ctx, sent, rows=rows)
                parts.append(graph.cross_entropy(z, label_ids[rows, t]))
                count += rows.size
            allp = parts[0] if len(parts) == 1 else graph.concat(parts, axis=0)
            L_tag = graph.scale(graph.sum_all(allp), 1.0 / count)
        return L_seg, L_tag, logits_list

    # ---- single-token wrappers ----

    def encode(self, surface, ctx_vector):
        """Encoder states for one surface: (n, 2*d_enc) array."""
        if not surface:
            raise ValueError("cannot encode an empty surface")
        ids = self.char_vocab.encode_surface(surface)[None, :]
        g = Graph(record=False)
        ctx = constant(np.asarray(ctx_vector, dtype=default_dtype())[None, :])
        H3, _, _ = self.encode_batch(g, ids, [len(surface)], ctx)
        return np.array(H3.data[:, 0, :], dtype=np.float64)

    def attend(self, s, H):
        """One attention read: decoder state (d_dec,) over states H (n, 2*d_enc)."""
        H = np.asarray(H, dtype=default_dtype())
        if H.ndim != 2 or H.shape[0] == 0:
            raise ValueError(f"attend needs a non-empty (n, 2*d_enc) state matrix, got {H.shape}")
        g = Graph(record=False)
        H3 = constant(np.ascontiguousarray(H[:, None, :]))
        HW = g.matmul(H3, self.W_h)
        s2 = constant(np.asarray(s, dtype=default_dtype())[None, :])
        mix, alpha = self.attend_batch(g, s2, H3, HW, np.ones((1, H.shape[0]), dtype=bool))
        return np.array(mix.data[0], dtype=np.float64), np.array(alpha.data[0], dtype=np.float64)

    def forward_teacher_forced(self, graph, entry, ctx_vector, sent_vector=None):
        """Teacher-forced losses for one gold entry; logits returned per step."""
        if not entry.surface:
            raise ValueError("cannot encode an empty surface")
        if self.cfg.joint and entry.labels is None:
            raise ValueError(f"joint model needs labels, token {entry.surface!r} has none")
        dt = default_dtype()
        char_ids = self.char_vocab.encode_surface(entry.surface)[None, :]
        tgt = self.char_vocab.target_ids(entry.segments)[None, :]
        mask = np.ones_like(tgt, dtype=bool)
        ctx = constant(np.asarray(ctx_vector, dtype=dt)[None, :])
        sent = None
        if self.cfg.use_sentence_vector:
            if sent_vector is None:
                raise ValueError("model expects a sentence vector")
            sent = constant(np.asarray(sent_vector, dtype=dt)[None, :])
        labels = None
        if self.cfg.joint:
            labels = label_targets(entry, self.char_vocab, self.label_vocab)[None, :]
        return self.forward_batch(
            graph,
            char_ids,
            [len(entry.surface)],
            ctx,
            tgt,
            mask,
            label_ids=labels,
            sent=sent,
            collect_logits=True,
        )
