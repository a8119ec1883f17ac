"""Synthetic ambiguous corpus generator.

Builds a toy agglutinative language over stems drawn from the letters a-j,
with prefix morphemes "ba"/"ko", suffix "ta", and a trigger word "gi". A
designated subset of stems forms ambiguous tokens "ba"+stem: their gold
analysis is ["ba", stem] if and only if "gi" occurred earlier in the same
sentence, otherwise the token stays whole. Both readings are sampled with
probability 0.5, so a context-blind model tops out near 50% exact match on
the ambiguous tokens while a contextual one can resolve them all.
"""

import random
from dataclasses import dataclass

from .conllu import Corpus, Sentence, TokenEntry

ALPHABET = "abcdefghij"
PREFIXES = ("ba", "ko")
SUFFIX = "ta"
TRIGGER = "gi"

LABEL_PREFIX = "PRE"
LABEL_STEM = "STEM"
LABEL_SUFFIX = "SUF"
LABEL_TRIGGER = "TRG"
LABEL_FUSED = "WORD"

N_STEMS = 12
N_AMBIGUOUS_STEMS = 6


@dataclass
class SynthConfig:
    n_sentences: int
    seed: int = 0
    split_tag: str = "train"


@dataclass
class ManifestRow:
    sent_id: str
    token_idx: int
    ambiguous: int
    gold_split: int


def _make_stems(rng):
    stems = []
    seen = {TRIGGER}
    while len(stems) < N_STEMS:
        s = "".join(rng.choice(ALPHABET) for _ in range(3))
        # stems that look like a prefixed or suffixed form would let two
        # different morpheme decompositions spell the same surface
        if s in seen or s.startswith(PREFIXES) or s.endswith(SUFFIX):
            continue
        seen.add(s)
        stems.append(s)
    return stems


def generate_synthetic(cfg):
    """Deterministic corpus + manifest for the given (n_sentences, seed)."""
    if cfg.n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    rng = random.Random(cfg.seed)
    stems = _make_stems(rng)
    ambiguous_stems = stems[:N_AMBIGUOUS_STEMS]
    plain_stems = stems[N_AMBIGUOUS_STEMS:]

    sentences = []
    manifest = []
    for i in range(cfg.n_sentences):
        sent_id = f"syn{i:05d}"
        n_slots = rng.randint(3, 7)
        amb_pos = rng.randint(1, n_slots - 1)
        split_reading = rng.random() < 0.5
        trigger_pos = rng.randint(0, amb_pos - 1) if split_reading else None

        tokens = []
        for pos in range(n_slots):
            if pos == amb_pos:
                stem = rng.choice(ambiguous_stems)
                surface = PREFIXES[0] + stem
                if split_reading:
                    tok = TokenEntry(surface, [PREFIXES[0], stem], [LABEL_PREFIX, LABEL_STEM])
                else:
                    tok = TokenEntry(surface, [surface], [LABEL_FUSED])
            elif pos == trigger_pos:
                tok = TokenEntry(TRIGGER, [TRIGGER], [LABEL_TRIGGER])
            else:
                tok = _filler(rng, plain_stems)
            tokens.append(tok)
            manifest.append(
                ManifestRow(
                    sent_id=sent_id,
                    token_idx=pos,
                    ambiguous=int(pos == amb_pos),
                    gold_split=int(len(tok.segments) > 1),
                )
            )
        sentences.append(Sentence(sent_id=sent_id, tokens=tokens))
    return Corpus(sentences=sentences, split_tag=cfg.split_tag), manifest


def _filler(rng, plain_stems):
    kind = rng.random()
    stem = rng.choice(plain_stems)
    if kind < 0.4:
        return TokenEntry(stem, [stem], [LABEL_STEM])
    if kind < 0.6:
        return TokenEntry(PREFIXES[1] + stem, [PREFIXES[1], stem], [LABEL_PREFIX, LABEL_STEM])
    if kind < 0.8:
        return TokenEntry(stem + SUFFIX, [stem, SUFFIX], [LABEL_STEM, LABEL_SUFFIX])
    return TokenEntry(PREFIXES[0] + stem, [PREFIXES[0], stem], [LABEL_PREFIX, LABEL_STEM])


def manifest_to_tsv(rows, header=None):
    head = "".join(f"# {line}\n" for line in header or [])
    return head + "".join(
        f"{r.sent_id}\t{r.token_idx}\t{r.ambiguous}\t{r.gold_split}\n" for r in rows
    )


def write_manifest(rows, path, header=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest_to_tsv(rows, header=header))


def read_manifest(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            sent_id, idx, amb, split = line.rstrip("\n").split("\t")
            rows.append(ManifestRow(sent_id, int(idx), int(amb), int(split)))
    return rows
