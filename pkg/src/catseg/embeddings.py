"""Per-token context vectors for the segmentation model.

Four provider modes: `zeros` (constant zero vector, a pure char model),
`static` (frozen per-surface table), `rnn` (trainable sentence-level BiLSTM
over a frozen per-surface table), and `external` (precomputed vectors keyed
by sentence id and token index, e.g. exported from a masked language model).
"""

import logging

import numpy as np

from .autodiff import LSTMParams, Graph, Tensor, constant, default_dtype, lstm_cell

logger = logging.getLogger(__name__)

CTXV_MAGIC = "CTXV1"
SENTENCE_INDEX = -1


class StaticTable:
    """Frozen surface-form -> vector table with an UNK fallback row.

    The UNK row (stored last) is the elementwise mean of the table rows.
    """

    def __init__(self, keys, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape[0] != len(keys) + 1:
            raise ValueError(
                f"table matrix has {matrix.shape[0]} rows for {len(keys)} keys (+1 UNK)"
            )
        self.keys = list(keys)
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.matrix = matrix
        self.dim = matrix.shape[1]

    @classmethod
    def from_rows(cls, keys, rows):
        rows = np.asarray(rows, dtype=np.float64)
        unk = rows.mean(axis=0)
        return cls(keys, np.vstack([rows, unk[None, :]]))

    @classmethod
    def random(cls, surfaces, dim, seed):
        """Deterministic random table over the given surfaces (first wins)."""
        keys = list(dict.fromkeys(surfaces))
        rng = np.random.default_rng(seed)
        rows = rng.normal(0.0, 0.5, size=(len(keys), dim))
        return cls.from_rows(keys, rows)

    def row_index(self, surface):
        return self.index.get(surface, len(self.keys))

    def vector(self, surface):
        return self.matrix[self.row_index(surface)]

    @property
    def unk_vector(self):
        return self.matrix[len(self.keys)]


def load_static_table(path):
    """Read the text vector format: `<count> <dim>` header, then key + floats."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: line 1: expected '<count> <dim>' header")
        count, dim = int(header[0]), int(header[1])
        keys, rows = [], []
        index = {}
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise ValueError(
                    f"{path}: line {line_no}: expected {dim} values, got {len(parts) - 1}"
                )
            key = parts[0]
            vec = [float(x) for x in parts[1:]]
            if key in index:
                logger.warning("%s: line %d: duplicate key %r, keeping last", path, line_no, key)
                rows[index[key]] = vec
            else:
                index[key] = len(keys)
                keys.append(key)
                rows.append(vec)
    if len(keys) != count:
        logger.warning("%s: header declared %d rows, loaded %d unique keys", path, count, len(keys))
    if not keys:
        raise ValueError(f"{path}: no vector rows")
    return StaticTable.from_rows(keys, rows)


def save_static_table(table, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(table.keys)} {table.dim}\n")
        for i, key in enumerate(table.keys):
            vals = " ".join(repr(float(x)) for x in table.matrix[i])
            fh.write(f"{key} {vals}\n")


class VectorStore:
    """Vectors keyed by (sent_id, token_index); index -1 holds the sentence vector."""

    def __init__(self, dim):
        self.dim = dim
        self.vectors = {}

    def __len__(self):
        return len(self.vectors)

    def put(self, sent_id, token_index, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for ({sent_id}, {token_index}) has width {vec.shape}, store dim {self.dim}")
        self.vectors[(sent_id, int(token_index))] = vec

    def get(self, sent_id, token_index):
        try:
            return self.vectors[(sent_id, int(token_index))]
        except KeyError:
            raise KeyError(f"no context vector for (sent_id={sent_id!r}, token_index={token_index})") from None

    def has_sentence_vectors(self):
        return any(idx == SENTENCE_INDEX for _, idx in self.vectors)


def load_vector_store(path):
    """Read the CTXV1 contextual-vector format."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != CTXV_MAGIC:
            raise ValueError(f"{path}: not a {CTXV_MAGIC} file (header {header!r})")
        store = VectorStore(int(header[1]))
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}: line {line_no}: expected 3 tab-separated fields")
            sent_id, idx, floats = parts
            vec = [float(x) for x in floats.split()]
            if len(vec) != store.dim:
                raise ValueError(
                    f"{path}: line {line_no}: {len(vec)} values, header declared {store.dim}"
                )
            store.put(sent_id, int(idx), vec)
    return store


def save_vector_store(store, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{CTXV_MAGIC} {store.dim}\n")
        for (sent_id, idx), vec in store.vectors.items():
            vals = " ".join(repr(float(x)) for x in vec)
            fh.write(f"{sent_id}\t{idx}\t{vals}\n")


# ---- providers ----


class ContextProvider:
    """Uniform source of per-token (and optional per-sentence) vectors."""

    mode = None

    def __init__(self, dim, sentence_dim=0):
        self.dim = dim
        self.sentence_dim = sentence_dim

    def vector_for(self, sentence, token_index):
        raise NotImplementedError

    def sentence_vector(self, sentence):
        raise ValueError(f"{self.mode} provider has no sentence vectors")

    def parameters(self):
        return []

    def batch_vectors(self, graph, sentences, refs):
        """Context rows for refs = [(sentence_slot, token_index), ...]."""
        rows = np.stack(
            [self.vector_for(sentences[slot], idx) for slot, idx in refs]
        ).astype(default_dtype())
        return constant(rows, name="ctx")

    def batch_sentence_vectors(self, graph, sentences, slots):
        rows = np.stack([self.sentence_vector(sentences[s]) for s in slots]).astype(default_dtype())
        return constant(rows, name="sent_ctx")

    def describe(self):
        return {"mode": self.mode, "dim": self.dim, "sentence_dim": self.sentence_dim}

    def tensors(self):
        return {}


class ZerosProvider(ContextProvider):
    mode = "zeros"

    def __init__(self, dim):
        super().__init__(dim, sentence_dim=dim)
        self._zero = np.zeros(dim)

    def vector_for(self, sentence, token_index):
        return self._zero

    def sentence_vector(self, sentence):
        return self._zero


class StaticProvider(ContextProvider):
    mode = "static"

    def __init__(self, table):
        super().__init__(table.dim, sentence_dim=0)
        self.table = table

    def vector_for(self, sentence, token_index):
        return self.table.vector(sentence.tokens[token_index].surface)

    def describe(self):
        d = super().describe()
        d["keys"] = list(self.table.keys)
        return d

    def tensors(self):
        return {"provider.table": self.table.matrix}


class ExternalProvider(ContextProvider):
    mode = "external"

    def __init__(self, store):
        sdim = store.dim if store.has_sentence_vectors() else 0
        super().__init__(store.dim, sentence_dim=sdim)
        self.store = store

    def vector_for(self, sentence, token_index):
        return self.store.get(sentence.sent_id, token_index)

    def sentence_vector(self, sentence):
        return self.store.get(sentence.sent_id, SENTENCE_INDEX)


class RnnProvider(ContextProvider):
    """Sentence-level BiLSTM over a frozen static table.

    The table never receives gradients; the BiLSTM parameters train with the
    model. A token's vector is forward-state || backward-state at its
    position, so it depends on the whole sentence.
    """

    mode = "rnn"

    def __init__(self, table, hidden, rng=None, params=None):
        super().__init__(2 * hidden, sentence_dim=2 * hidden)
        self.table = table
        self.hidden = hidden
        if params is not None:
            self.fw, self.bw = params
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            self.fw = LSTMParams.init(rng, table.dim, hidden, prefix="provider.fw")
            self.bw = LSTMParams.init(rng, table.dim, hidden, prefix="provider.bw")
        self._table_const = None

    def parameters(self):
        return self.fw.parameters() + self.bw.parameters()

    def _frozen_table(self):
        dt = default_dtype()
        if self._table_const is None or self._table_const.data.dtype != dt:
            self._table_const = constant(self.table.matrix.astype(dt), name="provider.table")
        return self._table_const

    def _run_bilstm(self, graph, sentences):
        """Per-position forward and masked backward states over a sentence batch."""
        dt = default_dtype()
        S = len(sentences)
        lengths = [len(s.tokens) for s in sentences]
        L = max(lengths)
        ids = np.full((S, L), len(self.table.keys), dtype=np.int64)
        for si, sent in enumerate(sentences):
            for p, tok in enumerate(sent.tokens):
                ids[si, p] = self.table.row_index(tok.surface)
        table = self._frozen_table()
        inputs = [graph.embedding_lookup(table, ids[:, p]) for p in range(L)]

        zeros = constant(np.zeros((S, self.hidden), dtype=dt))
        h = c = zeros
        fw_states = []
        for p in range(L):
            h, c = lstm_cell(graph, inputs[p], h, c, self.fw)
            fw_states.append(h)

        # the backward pass enters each row only once inside its valid span
        h = c = zeros
        bw_states = [None] * L
        valid = np.array(lengths)
        for p in range(L - 1, -1, -1):
            keep = (valid > p).astype(dt)[:, None] * np.ones((1, self.hidden), dtype=dt)
            h2, c2 = lstm_cell(graph, inputs[p], h, c, self.bw)
            km = constant(keep)
            ikm = constant(1.0 - keep)
            h = graph.add(graph.mul(h2, km), graph.mul(h, ikm))
            c = graph.add(graph.mul(c2, km), graph.mul(c, ikm))
            bw_states[p] = h
        return fw_states, bw_states, lengths

    def _gather(self, graph, per_position, refs):
        """Rows per_position[idx][slot] for refs=[(slot, idx)...], in ref order."""
        groups = {}
        for out_row, (slot, idx) in enumerate(refs):
            groups.setdefault(idx, []).append((out_row, slot))
        parts = []
        order = []
        for idx in sorted(groups):
            rows = groups[idx]
            order.extend(r for r, _ in rows)
            parts.append(
                graph.embedding_lookup(per_position[idx], np.array([s for _, s in rows]))
            )
        stacked = parts[0] if len(parts) == 1 else graph.concat(parts, axis=0)
        inverse = np.empty(len(refs), dtype=np.int64)
        inverse[np.array(order)] = np.arange(len(refs))
        return graph.embedding_lookup(stacked, inverse)

    def batch_vectors(self, graph, sentences, refs):
        fw, bw, _ = self._run_bilstm(graph, sentences)
        needed = sorted({idx for _, idx in refs})
        by_pos = {p: graph.concat([fw[p], bw[p]], axis=1) for p in needed}
        return self._gather(graph, by_pos, refs)

    def batch_sentence_vectors(self, graph, sentences, slots):
        fw, bw, lengths = self._run_bilstm(graph, sentences)
        final_refs = [(slot, lengths[slot] - 1) for slot in slots]
        fw_final = self._gather(graph, {i: st for i, st in enumerate(fw)}, final_refs)
        bw_first = graph.embedding_lookup(bw[0], np.asarray(slots, dtype=np.int64))
        return graph.concat([fw_final, bw_first], axis=1)

    def vector_for(self, sentence, token_index):
        if not 0 <= token_index < len(sentence.tokens):
            raise IndexError(f"token_index {token_index} out of range for sentence {sentence.sent_id!r}")
        g = Graph(record=False)
        vec = self.batch_vectors(g, [sentence], [(0, token_index)])
        return np.array(vec.data[0], dtype=np.float64)

    def sentence_vector(self, sentence):
        g = Graph(record=False)
        vec = self.batch_sentence_vectors(g, [sentence], [0])
        return np.array(vec.data[0], dtype=np.float64)

    def describe(self):
        d = super().describe()
        d["hidden"] = self.hidden
        d["table_dim"] = self.table.dim
        d["keys"] = list(self.table.keys)
        return d

    def tensors(self):
        out = {"provider.table": self.table.matrix}
        for tag, p in (("fw", self.fw), ("bw", self.bw)):
            out[f"provider.{tag}.W"] = p.W.data
            out[f"provider.{tag}.U"] = p.U.data
            out[f"provider.{tag}.b"] = p.b.data
        return out


def rebuild_provider(desc, tensors, store=None):
    """Reconstruct a provider from checkpoint metadata and tensors."""
    mode = desc["mode"]
    if mode == "zeros":
        return ZerosProvider(desc["dim"])
    if mode == "static":
        return StaticProvider(StaticTable(desc["keys"], tensors["provider.table"]))
    if mode == "rnn":
        table = StaticTable(desc["keys"], tensors["provider.table"])
        params = []
        for tag in ("fw", "bw"):
            params.append(
                LSTMParams(
                    Tensor(tensors[f"provider.{tag}.W"], trainable=True, name=f"provider.{tag}.W"),
                    Tensor(tensors[f"provider.{tag}.U"], trainable=True, name=f"provider.{tag}.U"),
                    Tensor(tensors[f"provider.{tag}.b"], trainable=True, name=f"provider.{tag}.b"),
                )
            )
        return RnnProvider(table, desc["hidden"], params=tuple(params))
    if mode == "external":
        if store is None:
            raise ValueError("external provider needs a contextual vector store at load time")
        if store.dim != desc["dim"]:
            raise ValueError(f"store dim {store.dim} != checkpoint context dim {desc['dim']}")
        return ExternalProvider(store)
    raise ValueError(f"unknown provider mode {mode!r}")
