import numpy as np
import pytest

from catseg.autodiff import Graph, constant, precision
from catseg.conllu import TokenEntry
from catseg.model import CatsModel, ModelConfig, label_targets
from catseg.optim import grad_check
from catseg.vocab import EOT, SPACE, CharVocab, LabelVocab


def tiny_cfg(**kw):
    base = dict(d_char=6, d_enc=5, d_dec=5, d_att=4)
    base.update(kw)
    return ModelConfig(**base)


def tiny_model(joint=False, d_ctx=3, d_sent=0, seed=0, **cfg_kw):
    cv = CharVocab("basolt")
    lv = LabelVocab(["PRE", "STEM", "SUF"]) if joint else None
    cfg = tiny_cfg(joint=joint, **cfg_kw)
    return CatsModel(cfg, cv, label_vocab=lv, d_ctx=d_ctx, d_sent=d_sent, seed=seed)


# ---- config ----


def test_config_defaults_and_validation():
    cfg = ModelConfig()
    assert (cfg.d_char, cfg.d_enc, cfg.d_dec, cfg.d_att) == (100, 256, 256, 128)
    assert (cfg.max_decode_factor, cfg.max_decode_slack) == (3, 10)
    assert not cfg.joint and not cfg.use_sentence_vector and cfg.char_encoder_enabled
    with pytest.raises(ValueError):
        ModelConfig(d_enc=0)
    with pytest.raises(ValueError):
        ModelConfig(use_sentence_vector=True)  # needs joint
    d = ModelConfig(joint=True).to_dict()
    assert d["joint"] is True and d["d_char"] == 100


def test_label_targets_mark_space_and_eot_positions():
    cv = CharVocab("basol")
    lv = LabelVocab(["PRE", "STEM"])
    entry = TokenEntry("basol", ["ba", "sol"], ["PRE", "STEM"])
    out = label_targets(entry, cv, lv)
    # target: b a SPACE s o l EOT
    assert list(out) == [-1, -1, lv.id_for("PRE"), -1, -1, -1, lv.id_for("STEM")]


def test_model_constructor_validation():
    cv = CharVocab("ab")
    with pytest.raises(ValueError, match="d_ctx"):
        CatsModel(tiny_cfg(), cv, d_ctx=0)
    with pytest.raises(ValueError, match="label vocabulary"):
        CatsModel(tiny_cfg(joint=True), cv, d_ctx=2)
    with pytest.raises(ValueError, match="sentence vectors"):
        CatsModel(
            tiny_cfg(joint=True, use_sentence_vector=True),
            cv,
            label_vocab=LabelVocab(["X"]),
            d_ctx=2,
            d_sent=0,
        )


def test_parameter_names_are_stable():
    names = [n for n, _ in tiny_model().named_parameters()]
    assert names == [
        "char_embed",
        "enc_fw.W", "enc_fw.U", "enc_fw.b",
        "enc_bw.W", "enc_bw.U", "enc_bw.b",
        "att.W_s", "att.W_h", "att.v",
        "dec.W", "dec.U", "dec.b",
        "char_head.W", "char_head.b",
    ]
    joint_names = [n for n, _ in tiny_model(joint=True).named_parameters()]
    assert joint_names[-2:] == ["label_head.W", "label_head.b"]
    pseudo_names = [n for n, _ in tiny_model(char_encoder_enabled=False).named_parameters()]
    assert "pseudo.W" in pseudo_names and "enc_fw.W" not in pseudo_names


def test_same_seed_reproduces_parameters_exactly():
    a, b = tiny_model(seed=3), tiny_model(seed=3)
    for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert np.array_equal(pa.data, pb.data)
    c = tiny_model(seed=4)
    assert any(
        not np.array_equal(pa.data, pc.data)
        for (_, pa), (_, pc) in zip(a.named_parameters(), c.named_parameters())
    )


def test_describe_reports_dimensions():
    m = tiny_model(joint=True, d_ctx=3)
    d = m.describe()
    assert d["d_ctx"] == 3 and d["d_sent"] == 0
    assert d["n_chars"] == len(m.char_vocab)
    assert d["n_labels"] == 3
    assert d["joint"] is True


def test_sentence_vector_dim_only_counts_when_used():
    m = tiny_model(d_ctx=3, d_sent=7)  # not in sentence-vector mode
    assert m.d_sent == 0
    j = tiny_model(joint=True, use_sentence_vector=True, d_ctx=3, d_sent=7)
    assert j.d_sent == 7
    assert j.label_W.shape == (j.cfg.d_dec + 3 + 7, 3)


# ---- encoder / attention ----


def test_encode_shapes_and_empty_surface():
    m = tiny_model()
    H = m.encode("bas", np.zeros(3))
    assert H.shape == (3, 2 * m.cfg.d_enc)
    with pytest.raises(ValueError):
        m.encode("", np.zeros(3))


def test_encode_depends_on_context_vector():
    m = tiny_model()
    H0 = m.encode("bas", np.zeros(3))
    H1 = m.encode("bas", np.ones(3))
    assert not np.allclose(H0, H1)


def test_encoder_states_are_padding_invariant():
    with precision("float64"):
        m = tiny_model()
        ids_single = m.char_vocab.encode_surface("bas")[None, :]
        ctx1 = constant(np.zeros((1, 3)))
        H_single, _, _ = m.encode_batch(Graph(record=False), ids_single, [3], ctx1)

        surfaces = ["bas", "solta"]
        n = 5
        ids = np.zeros((2, n), dtype=np.int64)
        for i, s in enumerate(surfaces):
            ids[i, : len(s)] = m.char_vocab.encode_surface(s)
        ctx2 = constant(np.zeros((2, 3)))
        H_batch, _, mask = m.encode_batch(Graph(record=False), ids, [3, 5], ctx2)
        assert np.allclose(H_batch.data[:3, 0, :], H_single.data[:, 0, :], atol=1e-12)
        assert mask.tolist() == [[True] * 3 + [False] * 2, [True] * 5]


def test_pseudo_encoder_gives_single_state():
    m = tiny_model(char_encoder_enabled=False)
    H = m.encode("basol", np.arange(3.0))
    assert H.shape == (1, 2 * m.cfg.d_enc)
    # the pseudo state is a function of the context alone, not the characters
    H2 = m.encode("t", np.arange(3.0))
    assert np.allclose(H, H2, atol=1e-6)


def test_attend_weights_form_a_distribution():
    m = tiny_model()
    H = m.encode("basol", np.zeros(3))
    mix, alpha = m.attend(np.zeros(m.cfg.d_dec), H)
    assert alpha.shape == (5,)
    assert np.all(alpha >= 0) and abs(alpha.sum() - 1.0) < 1e-6
    assert mix.shape == (2 * m.cfg.d_enc,)
    with pytest.raises(ValueError):
        m.attend(np.zeros(m.cfg.d_dec), np.zeros((0, 2 * m.cfg.d_enc)))


def test_attend_single_state_returns_that_state():
    m = tiny_model()
    H = m.encode("b", np.zeros(3))
    mix, alpha = m.attend(np.ones(m.cfg.d_dec), H)
    assert np.allclose(alpha, [1.0])
    assert np.allclose(mix, H[0], atol=1e-6)


def test_attention_ignores_masked_positions():
    with precision("float64"):
        m = tiny_model()
        ids = np.zeros((2, 4), dtype=np.int64)
        ids[0, :2] = m.char_vocab.encode_surface("ba")
        ids[1, :4] = m.char_vocab.encode_surface("salt")
        ctx = constant(np.zeros((2, 3)))
        g = Graph(record=False)
        H3, HW, mask = m.encode_batch(g, ids, [2, 4], ctx)
        s = constant(np.zeros((2, m.cfg.d_dec)))
        _, alpha = m.attend_batch(g, s, H3, HW, mask)
        assert np.allclose(alpha.data[0, 2:], 0.0)
        assert abs(alpha.data[0].sum() - 1.0) < 1e-12
        assert abs(alpha.data[1].sum() - 1.0) < 1e-12


# ---- teacher-forced forward ----


def entry():
    return TokenEntry("basol", ["ba", "sol"], ["PRE", "STEM"])


def test_forward_returns_scalar_losses_and_logits():
    m = tiny_model()
    g = Graph()
    L_seg, L_tag, logits = m.forward_teacher_forced(g, entry(), np.zeros(3))
    assert L_seg.data.shape == (1,)
    assert L_seg.data.item() > 0
    assert L_tag is None
    assert len(logits) == 7  # b a SPACE s o l EOT
    assert all(lg.shape == (1, len(m.char_vocab)) for lg in logits)


def test_forward_joint_adds_label_loss():
    m = tiny_model(joint=True)
    g = Graph()
    L_seg, L_tag, _ = m.forward_teacher_forced(g, entry(), np.zeros(3))
    assert L_tag is not None and L_tag.data.item() > 0


def test_forward_joint_requires_labels_and_sentence_vector():
    m = tiny_model(joint=True)
    with pytest.raises(ValueError, match="labels"):
        m.forward_teacher_forced(Graph(), TokenEntry("ba", ["ba"]), np.zeros(3))
    ms = tiny_model(joint=True, use_sentence_vector=True, d_ctx=3, d_sent=4)
    with pytest.raises(ValueError, match="sentence vector"):
        ms.forward_teacher_forced(Graph(), entry(), np.zeros(3))
    L_seg, L_tag, _ = ms.forward_teacher_forced(Graph(), entry(), np.zeros(3), sent_vector=np.zeros(4))
    assert L_tag is not None


def test_forward_depends_on_context_vector():
    m = tiny_model()
    a = m.forward_teacher_forced(Graph(), entry(), np.zeros(3))[0].data.item()
    b = m.forward_teacher_forced(Graph(), entry(), np.full(3, 2.0))[0].data.item()
    assert a != b


def test_forward_rejects_empty_surface():
    m = tiny_model()
    with pytest.raises(ValueError, match="empty surface"):
        m.forward_teacher_forced(Graph(), TokenEntry("", ["a"]), np.zeros(3))


def test_padded_rows_contribute_no_loss():
    # a batch of [token, longer token] must give the short row the same
    # per-position losses as alone; total loss is the mask-weighted mean
    with precision("float64"):
        m = tiny_model()
        e1 = TokenEntry("bas", ["bas"])
        e2 = TokenEntry("solta", ["sol", "ta"])

        def single_sum(e):
            g = Graph(record=False)
            tgt = m.char_vocab.target_ids(e.segments)
            ids = m.char_vocab.encode_surface(e.surface)[None, :]
            L, _, _ = m.forward_batch(
                g, ids, [len(e.surface)], constant(np.zeros((1, 3))),
                tgt[None, :], np.ones((1, tgt.size), dtype=bool),
            )
            return L.data.item() * tgt.size

        t1 = m.char_vocab.target_ids(e1.segments)
        t2 = m.char_vocab.target_ids(e2.segments)
        T = max(t1.size, t2.size)
        n = max(len(e1.surface), len(e2.surface))
        ids = np.zeros((2, n), dtype=np.int64)
        ids[0, : len(e1.surface)] = m.char_vocab.encode_surface(e1.surface)
        ids[1, : len(e2.surface)] = m.char_vocab.encode_surface(e2.surface)
        tgt = np.zeros((2, T), dtype=np.int64)
        tgt[0, : t1.size] = t1
        tgt[1, : t2.size] = t2
        mask = np.zeros((2, T), dtype=bool)
        mask[0, : t1.size] = True
        mask[1, : t2.size] = True
        L, _, _ = m.forward_batch(
            Graph(record=False), ids, [len(e1.surface), len(e2.surface)],
            constant(np.zeros((2, 3))), tgt, mask,
        )
        combined = L.data.item() * (t1.size + t2.size)
        assert abs(combined - (single_sum(e1) + single_sum(e2))) < 1e-9


def test_forward_batch_rejects_empty_mask():
    m = tiny_model()
    with pytest.raises(ValueError, match="no target positions"):
        m.forward_batch(
            Graph(record=False),
            np.zeros((1, 2), dtype=np.int64),
            [2],
            constant(np.zeros((1, 3))),
            np.zeros((1, 3), dtype=np.int64),
            np.zeros((1, 3), dtype=bool),
        )


def test_full_model_gradients_match_central_differences():
    with precision("float64"):
        m = tiny_model(joint=True, d_ctx=2, seed=1)
        e = TokenEntry("bas", ["ba", "s"], ["PRE", "STEM"])
        ctx = np.full(2, 0.1)

        def build(g):
            L_seg, L_tag, _ = m.forward_teacher_forced(g, e, ctx)
            return g.add(g.scale(L_seg, 0.2), g.scale(L_tag, 0.8))

        err = grad_check(build, m.parameters())
    assert err < 1e-4, f"max rel err {err:.3e}"
