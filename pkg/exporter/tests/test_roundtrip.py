"""Interop with the consumer package: files must load back bit-exactly."""

import numpy as np
import pytest

catseg_embeddings = pytest.importorskip(
    "catseg.embeddings", reason="consumer package not installed"
)

from ctxexport.export import ExportJob, run_export


def test_output_round_trips_through_consumer_store(
    tiny_model_dir, sample_conllu, tmp_path, verdict
):
    out = str(tmp_path / "rt.ctxv")
    run_export(ExportJob(sample_conllu, tiny_model_dir, out, include_sentence_vectors=True))

    store = catseg_embeddings.load_vector_store(out)
    assert store.dim == 8

    with open(out, encoding="utf-8") as fh:
        fh.readline()
        n_rows = 0
        worst = 0.0
        for line in fh:
            sid, idx, vals = line.rstrip("\n").split("\t")
            written = np.array([float(v) for v in vals.split(" ")], dtype=np.float64)
            loaded = np.asarray(store.get(sid, int(idx)), dtype=np.float64)
            worst = max(worst, float(np.abs(written - loaded).max()))
            n_rows += 1
    ok = n_rows == 7 and worst == 0.0
    verdict(
        f"[{'PASS' if ok else 'FAIL'}] exporter round trip: {n_rows} rows through "
        f"the consumer's vector store, max |delta| = {worst:.1e}"
    )
    assert ok


def test_header_dim_matches_model_hidden_width(tiny_model_dir, sample_conllu, tmp_path, verdict):
    from transformers import AutoModel

    out = str(tmp_path / "dim.ctxv")
    run_export(ExportJob(sample_conllu, tiny_model_dir, out))
    with open(out, encoding="utf-8") as fh:
        magic, dim = fh.readline().split()
    hidden = AutoModel.from_pretrained(tiny_model_dir).config.hidden_size
    ok = magic == "CTXV1" and int(dim) == hidden
    verdict(
        f"[{'PASS' if ok else 'FAIL'}] exporter header: CTXV1 dim {dim} "
        f"vs model hidden width {hidden}"
    )
    assert ok


def test_store_feeds_consumer_external_provider(tiny_model_dir, sample_conllu, tmp_path):
    from catseg.conllu import read_conllu

    out = str(tmp_path / "prov.ctxv")
    run_export(ExportJob(sample_conllu, tiny_model_dir, out, include_sentence_vectors=True))
    store = catseg_embeddings.load_vector_store(out)
    provider = catseg_embeddings.ExternalProvider(store)
    corpus = read_conllu(sample_conllu)
    for sent in corpus.sentences:
        for k in range(len(sent.tokens)):
            vec = provider.vector_for(sent, k)
            assert np.asarray(vec).shape == (8,)
        assert np.asarray(provider.sentence_vector(sent)).shape == (8,)
