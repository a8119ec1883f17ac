"""Command-line export: CoNLL-U in, CTXV1 out.

Exit codes match the consumer's conventions: 0 success, 1 runtime
failure, 2 usage error.
"""

import argparse
import logging
import sys

from .conllu import ConlluError
from .export import ExportError, ExportJob, run_export


def build_parser():
    parser = argparse.ArgumentParser(
        prog="catseg-export",
        description="Export per-token contextual vectors from a pretrained masked LM.",
    )
    parser.add_argument("--input", required=True, help="CoNLL-U file to read tokens from")
    parser.add_argument("--model", required=True, help="pretrained model name or local path")
    parser.add_argument("--out", required=True, help="CTXV1 output path")
    parser.add_argument(
        "--sentence-vectors",
        action="store_true",
        help="also write each sentence's CLS vector at token index -1",
    )
    parser.add_argument(
        "--layer",
        type=int,
        default=-1,
        help="hidden-state layer to export; -1 is the final layer, 0 the embedding output",
    )
    return parser


def main(argv=None):
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(sys.argv[1:] if argv is None else list(argv))
    job = ExportJob(
        input_path=args.input,
        model_name=args.model,
        output_path=args.out,
        layer=args.layer,
        include_sentence_vectors=args.sentence_vectors,
    )
    try:
        n_sentences, n_tokens, dim = run_export(job)
    except (ExportError, ConlluError, OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"sentences {n_sentences}")
    print(f"tokens {n_tokens}")
    print(f"dim {dim}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
