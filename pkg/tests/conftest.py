import pathlib

import pytest

from catseg.conllu import Corpus, Sentence, TokenEntry
from catseg.synth import SynthConfig, generate_synthetic

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def corpus_from(sentence_specs, id_prefix="t"):
    """Build a Corpus from [[(surface, segments[, labels]), ...], ...]."""
    sentences = []
    for i, spec in enumerate(sentence_specs):
        tokens = []
        for item in spec:
            if len(item) == 3:
                surface, segments, labels = item
            else:
                surface, segments = item
                labels = None
            tokens.append(TokenEntry(surface=surface, segments=list(segments), labels=labels))
        sentences.append(Sentence(sent_id=f"{id_prefix}{i}", tokens=tokens))
    return Corpus(sentences)


def conflict_free_toy(n_tokens=32, seed=5):
    """Synthetic sentences filtered so no surface has two gold splits.

    A context-free model cannot fit conflicting targets, so the overfit
    corpus must be conflict-free. The last sentence is truncated to land
    on exactly n_tokens.
    """
    full, _ = generate_synthetic(SynthConfig(80, seed=seed))
    sents, count, seen = [], 0, {}
    for s in full.sentences:
        if count == n_tokens:
            break
        add, ok = {}, True
        for t in s.tokens:
            tgt = tuple(t.segments)
            if seen.get(t.surface, add.get(t.surface, tgt)) != tgt:
                ok = False
                break
            add[t.surface] = tgt
        if not ok:
            continue
        take = s.tokens[: n_tokens - count]
        sents.append(Sentence(s.sent_id, list(take)))
        for t in take:
            seen[t.surface] = tuple(t.segments)
        count += len(take)
    assert count == n_tokens
    return Corpus(sents)


@pytest.fixture(scope="session")
def small_corpus():
    from catseg.conllu import read_conllu

    return read_conllu(FIXTURES / "small.conllu")
