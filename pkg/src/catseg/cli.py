"""Command-line entry point: train, predict, eval, analyze, synth.

Every run echoes its effective flat key-value configuration as `# key=value`
lines and embeds the same lines in its output artifacts, so any artifact
records how it was produced. Exit codes: 0 success, 1 runtime failure,
2 usage error.
"""

import argparse
import logging
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .conllu import TokenEntry, read_conllu, to_conllu, write_conllu
from .decoding import decode_corpus
from .embeddings import (
    ExternalProvider,
    RnnProvider,
    StaticProvider,
    StaticTable,
    ZerosProvider,
    load_static_table,
    load_vector_store,
)
from .evaluation import aligned_fhr_f1, analyze_errors, labeled_seg_f1, ner_span_f1, seg_prf
from .model import CatsModel, ModelConfig
from .synth import SynthConfig, generate_synthetic, write_manifest
from .trainer import TrainAbort, TrainConfig, train
from .vocab import build_vocabs

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad or missing arguments; maps to exit code 2."""


class RunConfig:
    """Flat key-value record of one run's effective configuration."""

    SKIP = ("func", "command", "config")

    def __init__(self, values):
        self.values = {k: v for k, v in values.items() if k not in self.SKIP and v is not None}

    @classmethod
    def from_args(cls, args):
        return cls(vars(args))

    @staticmethod
    def _fmt(value):
        if isinstance(value, bool):
            return "true" if value else "false"
        return str(value)

    def kv_lines(self):
        return [f"{k}={self._fmt(v)}" for k, v in sorted(self.values.items())]

    def echo(self, stream=None):
        for line in self.kv_lines():
            print(f"# {line}", file=stream or sys.stdout)

    def to_dict(self):
        return dict(self.values)


def cats_threads():
    """Evaluation-parallelism cap from the CATS_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("CATS_THREADS", "1")))
    except ValueError:
        return 1


def _require(args, names):
    missing = [name for name in names if getattr(args, name) is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise UsageError(f"missing required arguments: {flags}")


def _figure_path(path):
    return os.path.splitext(path)[0] + ".png"


# ---- train ----


def _build_provider(args, corpus_train):
    mode = args.embeddings
    if mode == "zeros":
        return ZerosProvider(args.ctx_dim)
    if mode == "static":
        return StaticProvider(load_static_table(args.vectors))
    if mode == "rnn":
        surfaces = [tok.surface for sent in corpus_train.sentences for tok in sent.tokens]
        table = StaticTable.random(surfaces, args.ctx_dim, seed=args.seed * 11 + 3)
        return RnnProvider(table, args.rnn_hidden, rng=np.random.default_rng(args.seed * 7 + 13))
    if mode == "external":
        return ExternalProvider(load_vector_store(args.ctx_vectors))
    raise UsageError(f"unknown embeddings mode {mode!r}")


def cmd_train(args):
    _require(args, ["train", "dev", "save"])
    if args.embeddings == "static" and args.vectors is None:
        raise UsageError("--embeddings static requires --vectors")
    if args.embeddings == "external" and args.ctx_vectors is None:
        raise UsageError("--embeddings external requires --ctx-vectors")
    if args.sentence_vector and not args.joint:
        raise UsageError("--sentence-vector requires --joint")
    rc = RunConfig.from_args(args)
    rc.echo()

    corpus_train = read_conllu(args.train, "train")
    corpus_dev = read_conllu(args.dev, "dev")
    char_vocab, label_vocab = build_vocabs(corpus_train)
    if args.joint and len(label_vocab) == 0:
        raise ValueError("joint training needs labeled training data")
    provider = _build_provider(args, corpus_train)

    mcfg = ModelConfig(
        d_char=args.d_char,
        d_enc=args.d_enc,
        d_dec=args.d_dec,
        d_att=args.d_att,
        joint=args.joint,
        use_sentence_vector=args.sentence_vector,
        char_encoder_enabled=not args.no_char_encoder,
    )
    model = CatsModel(
        mcfg,
        char_vocab,
        label_vocab if args.joint else None,
        d_ctx=provider.dim,
        d_sent=provider.sentence_dim,
        seed=args.seed,
    )
    dev_metric = args.dev_metric or ("labeled_f1" if args.joint else "seg_f1")
    tcfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        lam=args.lam,
        seed=args.seed,
        dev_metric=dev_metric,
        patience=args.patience,
    )
    model, report = train(model, corpus_train, corpus_dev, provider, tcfg, n_threads=cats_threads())

    save_checkpoint(model, provider, args.save, run_config=rc.to_dict())
    report_path = args.report or args.save + ".train.tsv"
    summary = [
        f"best_epoch={report.best_epoch}",
        f"best_dev_{dev_metric}={report.best_metric}",
        f"baseline_seg_f1={report.baseline_seg_f1}",
    ]
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_tsv(header=rc.kv_lines() + summary))
    if report.rows:
        from .plots import training_curve

        training_curve(report, _figure_path(report_path))
    print(f"best_epoch {report.best_epoch}")
    if report.best_metric is not None:
        print(f"best_dev_{dev_metric} {report.best_metric:.4f}")
    print(f"wall_time_s {report.wall_time:.1f}")
    return 0


# ---- predict ----


def cmd_predict(args):
    _require(args, ["model", "input"])
    rc = RunConfig.from_args(args)
    to_stdout = args.output in (None, "-")
    if not to_stdout:
        rc.echo()
    store = load_vector_store(args.ctx_vectors) if args.ctx_vectors else None
    model, provider, _ = load_checkpoint(args.model, store=store)
    corpus = read_conllu(args.input, "input")
    pred, stats = decode_corpus(
        model, provider, corpus, beam_width=args.beam, n_threads=cats_threads()
    )

    comments = {}
    for sent_id, idx in stats.truncated:
        comments.setdefault(sent_id, {}).setdefault("truncated_tokens", []).append(idx)
    for sent_id, idx in stats.empty:
        comments.setdefault(sent_id, {}).setdefault("empty_tokens", []).append(idx)
    comment_lines = {
        sid: [f"{key} = {','.join(str(i) for i in idxs)}" for key, idxs in sorted(groups.items())]
        for sid, groups in comments.items()
    }
    # empty predictions cannot be serialized; fall back to the unsplit surface
    for sent in pred.sentences:
        for k, tok in enumerate(sent.tokens):
            if not tok.segments:
                logger.warning(
                    "sentence %r token %d: empty prediction, writing the surface unsplit",
                    sent.sent_id,
                    k,
                )
                sent.tokens[k] = TokenEntry(
                    tok.surface, [tok.surface], ["_"] if model.cfg.joint else None
                )
    text = to_conllu(pred, comments=comment_lines, header=rc.kv_lines())
    if to_stdout:
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return 0


# ---- eval / analyze / synth ----

_TASKS = {"seg": seg_prf, "pos": labeled_seg_f1, "dep": aligned_fhr_f1, "ner": ner_span_f1}


def cmd_eval(args):
    _require(args, ["pred", "gold", "task"])
    rc = RunConfig.from_args(args)
    rc.echo()
    pred = read_conllu(args.pred, "pred")
    gold = read_conllu(args.gold, "gold")
    report = _TASKS[args.task](pred, gold, n_threads=cats_threads())
    for line in report.format_lines():
        print(line)
    if args.figure:
        from .plots import eval_figure

        eval_figure(report, args.figure)
    return 0


def cmd_analyze(args):
    _require(args, ["pred", "gold"])
    rc = RunConfig.from_args(args)
    rc.echo()
    pred = read_conllu(args.pred, "pred")
    gold = read_conllu(args.gold, "gold")
    breakdown = analyze_errors(pred, gold, sample_size=args.sample, seed=args.seed)
    print(f"sampled_sentences {breakdown.sampled_sentences}")
    for line in breakdown.format_table():
        print(line)
    if args.figure:
        from .plots import error_breakdown_figure

        error_breakdown_figure(breakdown, args.figure)
    return 0


def cmd_synth(args):
    _require(args, ["out", "n"])
    rc = RunConfig.from_args(args)
    rc.echo()
    corpus, manifest = generate_synthetic(SynthConfig(n_sentences=args.n, seed=args.seed))
    write_conllu(corpus, args.out + ".conllu", header=rc.kv_lines())
    write_manifest(manifest, args.out + ".manifest.tsv", header=rc.kv_lines())
    print(f"sentences {len(corpus.sentences)}")
    print(f"tokens {corpus.n_tokens()}")
    return 0


# ---- parser plumbing ----


def build_parser():
    parser = argparse.ArgumentParser(
        prog="catseg",
        description="Context-aware token-to-word segmentation: train, decode, score.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value file; explicit flags override it")
        p.set_defaults(func=func)
        subparsers[name] = p
        return p

    p = add("train", cmd_train, "train a segmentation model")
    p.add_argument("--train", help="training CoNLL-U file")
    p.add_argument("--dev", help="development CoNLL-U file")
    p.add_argument("--save", help="checkpoint output path")
    p.add_argument("--report", help="training report TSV path (default: <save>.train.tsv)")
    p.add_argument(
        "--embeddings",
        choices=["zeros", "static", "rnn", "external"],
        default="zeros",
        help="context vector source",
    )
    p.add_argument("--vectors", help="static vector table (static mode)")
    p.add_argument("--ctx-vectors", help="contextual vector file (external mode)")
    p.add_argument("--ctx-dim", type=int, default=32, help="context width for zeros/rnn modes")
    p.add_argument("--rnn-hidden", type=int, default=100, help="hidden size of the rnn provider")
    p.add_argument("--joint", action="store_true", help="train segmentation and labels jointly")
    p.add_argument("--lambda", dest="lam", type=float, default=0.2, help="segmentation loss weight")
    p.add_argument("--sentence-vector", action="store_true", help="feed the label head a sentence vector")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--epochs", type=int, default=None, help="default: 40 if < 5000 train sentences else 20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patience", type=int, default=None, help="early stop after this many stale epochs")
    p.add_argument("--dev-metric", choices=["seg_f1", "labeled_f1"], default=None)
    p.add_argument("--d-char", type=int, default=100)
    p.add_argument("--d-enc", type=int, default=256)
    p.add_argument("--d-dec", type=int, default=256)
    p.add_argument("--d-att", type=int, default=128)
    p.add_argument("--no-char-encoder", action="store_true", help="decode from the context vector alone")

    p = add("predict", cmd_predict, "segment a CoNLL-U file with a trained model")
    p.add_argument("--model", help="checkpoint path")
    p.add_argument("--input", help="input CoNLL-U file")
    p.add_argument("--output", help="output path; - or absent for stdout")
    p.add_argument("--beam", type=int, default=1, help="beam width; 1 is greedy")
    p.add_argument("--ctx-vectors", help="contextual vector file (external-mode checkpoints)")

    p = add("eval", cmd_eval, "score a prediction against gold")
    p.add_argument("--pred", help="predicted CoNLL-U file")
    p.add_argument("--gold", help="gold CoNLL-U file")
    p.add_argument("--task", choices=sorted(_TASKS), help="metric to compute")
    p.add_argument("--figure", help="also render a PNG of the scores")

    p = add("analyze", cmd_analyze, "boundary-error taxonomy of a prediction")
    p.add_argument("--pred", help="predicted CoNLL-U file")
    p.add_argument("--gold", help="gold CoNLL-U file")
    p.add_argument("--sample", type=int, default=None, help="sentences to sample (default min(100, n))")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--figure", help="also render a PNG of the breakdown")

    p = add("synth", cmd_synth, "generate the synthetic ambiguity corpus")
    p.add_argument("--out", help="output prefix (.conllu and .manifest.tsv)")
    p.add_argument("--n", type=int, help="number of sentences")
    p.add_argument("--seed", type=int, default=0)

    return parser, subparsers


def _convert(action, raw, error):
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        low = raw.strip().lower()
        if low in ("1", "true", "yes"):
            return True
        if low in ("0", "false", "no"):
            return False
        error(f"config key {action.dest!r} expects a boolean, got {raw!r}")
    value = action.type(raw) if action.type else raw
    if action.choices and value not in action.choices:
        error(f"config key {action.dest!r}: invalid choice {value!r}")
    return value


def _load_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.strip()
            if not body or body.startswith("#"):
                continue
            if "=" not in body:
                raise UsageError(f"{path}: line {line_no}: expected key=value")
            key, _, raw = body.partition("=")
            values[key.strip().replace("-", "_")] = raw.strip()
    return values


def parse_args(argv):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = subparsers[args.command]
        known = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "func")}
        converted = {}
        for key, raw in _load_config_file(args.config).items():
            if key not in known:
                sub.error(f"unknown config key {key!r} in {args.config}")
            converted[key] = _convert(known[key], raw, sub.error)
        sub.set_defaults(**converted)
        args = parser.parse_args(argv)  # explicit flags still win
    return args


def main(argv=None):
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        args = parse_args(sys.argv[1:] if argv is None else list(argv))
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, TrainAbort) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
