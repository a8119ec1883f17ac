"""Per-token contextual vectors: word-piece means from a masked LM.

Each raw token is word-pieced on its own, so piece-to-token alignment is
exact by construction and pieces never leak across token boundaries. The
whole sentence (all pieces, wrapped in the model's CLS/SEP markers) goes
through the encoder in one pass; a token's vector is the float64 mean of
its pieces' hidden states at the selected layer, the sentence vector is
the CLS position. Sentences run one at a time so results are independent
of any batching.
"""

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .conllu import read_sentences

logger = logging.getLogger(__name__)


class ExportError(ValueError):
    pass


@dataclass
class ExportJob:
    input_path: str
    model_name: str
    output_path: str
    layer: int = -1  # index into the hidden-state stack; -1 is the final layer
    include_sentence_vectors: bool = False


def load_model(name_or_path):
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(name_or_path)
    model = AutoModel.from_pretrained(name_or_path)
    model.eval()
    return tokenizer, model


def _piece_ids(tokenizer, surface):
    return tokenizer(surface, add_special_tokens=False)["input_ids"]


def encode_sentence(tokenizer, model, sent, layer):
    """Hidden states for one sentence: ((kept, n_pieces) per token, cls, stack).

    Returns (token_vectors, cls_vector) as float64 arrays; truncates the
    token sequence when the pieces would exceed the model's position limit.
    """
    pieces = []
    for k, surface in enumerate(sent.surfaces):
        ids = _piece_ids(tokenizer, surface)
        if not ids:
            raise ExportError(
                f"token {surface!r} (sentence {sent.sent_id!r}, index {k}) "
                "produced no word pieces"
            )
        pieces.append(ids)

    budget = model.config.max_position_embeddings - 2
    kept = len(pieces)
    total = sum(len(p) for p in pieces)
    while total > budget:
        kept -= 1
        total -= len(pieces[kept])
    if kept < len(pieces):
        logger.warning(
            "sentence %r: %d pieces exceed the model's limit of %d; dropping %d trailing tokens",
            sent.sent_id,
            sum(len(p) for p in pieces),
            budget,
            len(pieces) - kept,
        )

    flat = [pid for p in pieces[:kept] for pid in p]
    input_ids = torch.tensor([[tokenizer.cls_token_id] + flat + [tokenizer.sep_token_id]])
    with torch.no_grad():
        out = model(
            input_ids,
            attention_mask=torch.ones_like(input_ids),
            output_hidden_states=True,
        )
    hidden = out.hidden_states[layer][0].to(torch.float64).numpy()

    vectors = []
    cursor = 1  # position 0 is CLS
    for p in pieces[:kept]:
        vectors.append(hidden[cursor : cursor + len(p)].mean(axis=0))
        cursor += len(p)
    return vectors, hidden[0]


def _format_row(sent_id, index, vec):
    vals = " ".join(repr(float(x)) for x in vec)
    return f"{sent_id}\t{index}\t{vals}\n"


def run_export(job):
    """Write one CTXV1 file for the job; returns (n_sentences, n_tokens, dim)."""
    tokenizer, model = load_model(job.model_name)
    dim = model.config.hidden_size
    sentences = read_sentences(job.input_path)
    n_tokens = 0
    with open(job.output_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"CTXV1 {dim}\n")
        for sent in sentences:
            vectors, cls_vec = encode_sentence(tokenizer, model, sent, job.layer)
            if job.include_sentence_vectors:
                fh.write(_format_row(sent.sent_id, -1, cls_vec))
            for k, vec in enumerate(vectors):
                fh.write(_format_row(sent.sent_id, k, vec))
            n_tokens += len(vectors)
    return len(sentences), n_tokens, dim
