"""Just enough CoNLL-U reading to recover sentence ids and raw token surfaces.

The export runs over unsegmented tokens, so multiword range lines win over
the word rows they cover; empty nodes (decimal ids) are skipped. Sentences
without a sent_id get auto1, auto2, ... so their keys still line up with
downstream readers that apply the same fallback.
"""

import logging
import re
from dataclasses import dataclass

logger = logging.getLogger(__name__)

_RANGE = re.compile(r"^(\d+)-(\d+)$")
_WORD = re.compile(r"^\d+$")
_EMPTY_NODE = re.compile(r"^\d+\.\d+$")


class ConlluError(ValueError):
    pass


@dataclass
class SentenceTokens:
    sent_id: str
    surfaces: list


def read_sentences(path):
    sentences = []
    auto_counter = 0
    sent_id = None
    surfaces = []
    covered_until = 0

    def flush(line_no):
        nonlocal sent_id, surfaces, covered_until, auto_counter
        if sent_id is None and not surfaces:
            return
        if sent_id is None:
            auto_counter += 1
            sent_id = f"auto{auto_counter}"
            logger.warning(
                "sentence ending at line %d has no sent_id; assigned %r", line_no, sent_id
            )
        sentences.append(SentenceTokens(sent_id, surfaces))
        sent_id, surfaces, covered_until = None, [], 0

    with open(path, encoding="utf-8") as fh:
        line_no = 0
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush(line_no)
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                key, _, value = body.partition("=")
                if key.strip() == "sent_id" and value.strip():
                    sent_id = value.strip()
                continue
            cols = line.split("\t")
            if len(cols) < 2 or not cols[1]:
                raise ConlluError(f"{path}: line {line_no}: expected an id and a form")
            wid, form = cols[0], cols[1]
            m = _RANGE.match(wid)
            if m:
                surfaces.append(form)
                covered_until = int(m.group(2))
            elif _WORD.match(wid):
                if int(wid) > covered_until:
                    surfaces.append(form)
            elif not _EMPTY_NODE.match(wid):
                raise ConlluError(f"{path}: line {line_no}: unrecognized word id {wid!r}")
        flush(line_no)
    return sentences
