import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

VOCAB = (
    ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    + list("abcdefghij")
    + ["##" + c for c in "abcdefghij"]
    + ["ba", "##ta", "sol", "##sol", "gi", "ko", "##l"]
)

CONLLU = """\
# sent_id = s1
1-2\tbagi\t_\t_\t_\t_\t_\t_\t_\t_
1\tba\t_\t_\t_\t_\t_\t_\t_\t_
2\tgi\t_\t_\t_\t_\t_\t_\t_\t_
3\tdaf\t_\t_\t_\t_\t_\t_\t_\t_
4-5\tsolta\t_\t_\t_\t_\t_\t_\t_\t_
4\tsol\t_\t_\t_\t_\t_\t_\t_\t_
5\tta\t_\t_\t_\t_\t_\t_\t_\t_

# sent_id = s2
1\tgi\t_\t_\t_\t_\t_\t_\t_\t_
2\tbasol\t_\t_\t_\t_\t_\t_\t_\t_
"""


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A seeded 8-wide BERT with a handmade wordpiece vocab, saved locally."""
    d = tmp_path_factory.mktemp("tinybert")
    (d / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    cfg = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=8,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=16,
        max_position_embeddings=16,
    )
    torch.manual_seed(0)
    model = BertModel(cfg)
    model.eval()
    model.save_pretrained(d)
    BertTokenizer(str(d / "vocab.txt")).save_pretrained(d)
    return str(d)


@pytest.fixture(scope="session")
def sample_conllu(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "sample.conllu"
    path.write_text(CONLLU)
    return str(path)


@pytest.fixture()
def verdict(capfd):
    """Print a line on the real terminal, past pytest's stdout capture."""

    def say(line):
        with capfd.disabled():
            print(line, flush=True)

    return say
