"""CoNLL-U ingestion: sentences, multiword tokens, and serialization.

A multiword range line `i-j<TAB>form` plus the word rows i..j becomes one
TokenEntry whose surface is the range form and whose segments are the word
forms. Word rows outside any range become single-segment entries. Gold
segments may contain characters absent from the surface (canonical
segmentation may restore elided material), so no surface/segment character
consistency is assumed anywhere.
"""

import logging
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

N_COLUMNS = 10


class ParseError(ValueError):
    """Malformed CoNLL-U input; message carries the 1-based line number."""


@dataclass
class TokenEntry:
    """A raw token with its gold word segments and optional per-segment labels."""

    surface: str
    segments: list
    labels: list = None
    char_span: tuple = None  # 1-based (first, last) word-row ids within the sentence

    def __post_init__(self):
        # an empty list is legal (a degenerate prediction); empty strings are not
        if any(s == "" for s in self.segments):
            raise ValueError(f"token {self.surface!r}: segments must be non-empty strings")
        if self.labels is not None and len(self.labels) != len(self.segments):
            raise ValueError(
                f"token {self.surface!r}: {len(self.labels)} labels for "
                f"{len(self.segments)} segments"
            )


@dataclass
class Sentence:
    sent_id: str
    tokens: list
    # per word row, in order: (form, head index with 0 = root, relation)
    dep_annotations: list = None

    def segment_sequence(self):
        return [seg for tok in self.tokens for seg in tok.segments]

    def label_sequence(self):
        out = []
        for tok in self.tokens:
            if tok.labels is None:
                return None
            out.extend(tok.labels)
        return out


@dataclass
class Corpus:
    sentences: list
    split_tag: str = "train"

    def __len__(self):
        return len(self.sentences)

    def n_tokens(self):
        return sum(len(s.tokens) for s in self.sentences)


def parse_conllu(text, split_tag="train"):
    """Parse CoNLL-U text (a string or an iterable of lines) into a Corpus."""
    if isinstance(text, str):
        lines = text.split("\n")
    else:
        lines = [ln.rstrip("\n") for ln in text]

    sentences = []
    seen_ids = set()
    auto_counter = 0

    sent_id = None
    rows = []  # (id, form, upos, head, deprel)
    ranges = []  # (start, end, surface)

    def finalize(line_no):
        nonlocal sent_id, rows, ranges, auto_counter
        if sent_id is None and not rows:
            return
        if not rows:
            raise ParseError(f"line {line_no}: sentence with no word rows")
        if sent_id is None:
            auto_counter += 1
            sent_id = f"auto{auto_counter}"
            logger.warning("sentence ending at line %d has no sent_id; assigned %r", line_no, sent_id)
        if sent_id in seen_ids:
            raise ParseError(f"line {line_no}: duplicate sent_id {sent_id!r}")
        seen_ids.add(sent_id)

        n = len(rows)
        for start, end, _ in ranges:
            if not (1 <= start <= end <= n):
                raise ParseError(
                    f"line {line_no}: range {start}-{end} outside word rows 1..{n} "
                    f"of sentence {sent_id!r}"
                )

        tokens = []
        range_iter = iter(ranges)
        next_range = next(range_iter, None)
        wid = 1
        while wid <= n:
            if next_range and next_range[0] == wid:
                start, end, surface = next_range
                group = rows[start - 1 : end]
                tokens.append(_make_entry(surface, group, (start, end)))
                wid = end + 1
                next_range = next(range_iter, None)
            else:
                _, form, upos, _, _ = rows[wid - 1]
                tokens.append(_make_entry(form, [rows[wid - 1]], (wid, wid)))
                wid += 1

        dep = None
        if all(head != "_" and rel != "_" for _, _, _, head, rel in rows):
            dep = []
            for rid, form, _, head, rel in rows:
                try:
                    h = int(head)
                except ValueError:
                    raise ParseError(f"sentence {sent_id!r}: non-integer head {head!r} at word {rid}")
                if not 0 <= h <= n:
                    raise ParseError(f"sentence {sent_id!r}: head {h} out of range 0..{n}")
                dep.append((form, h, rel))

        sentences.append(Sentence(sent_id=sent_id, tokens=tokens, dep_annotations=dep))
        sent_id = None
        rows = []
        ranges = []

    open_range_end = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r")
        if line == "":
            finalize(line_no)
            open_range_end = 0
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id"):
                _, _, value = body.partition("=")
                sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != N_COLUMNS:
            raise ParseError(
                f"line {line_no}: expected {N_COLUMNS} tab-separated columns, got {len(cols)}"
            )
        wid, form, upos, head, deprel = cols[0], cols[1], cols[3], cols[6], cols[7]
        if "." in wid:
            # empty (ellipsis) nodes carry no surface material; not tokens
            logger.debug("line %d: skipping empty node %s", line_no, wid)
            continue
        if "-" in wid:
            try:
                start_s, end_s = wid.split("-")
                start, end = int(start_s), int(end_s)
            except ValueError:
                raise ParseError(f"line {line_no}: malformed token range id {wid!r}")
            if end <= start:
                raise ParseError(f"line {line_no}: empty token range {wid}")
            if start <= open_range_end:
                raise ParseError(f"line {line_no}: overlapping token range {wid}")
            open_range_end = end
            ranges.append((start, end, form))
            continue
        try:
            rid = int(wid)
        except ValueError:
            raise ParseError(f"line {line_no}: malformed word id {wid!r}")
        if rid != len(rows) + 1:
            raise ParseError(f"line {line_no}: word id {rid} not sequential (expected {len(rows) + 1})")
        rows.append((rid, form, upos, head, deprel))
    finalize(len(lines) + 1)

    return Corpus(sentences=sentences, split_tag=split_tag)


def _make_entry(surface, group, span):
    upos = [u for _, _, u, _, _ in group]
    labels = upos if any(u != "_" for u in upos) else None
    return TokenEntry(
        surface=surface,
        segments=[form for _, form, _, _, _ in group],
        labels=labels,
        char_span=span,
    )


def to_conllu(corpus, comments=None, header=None):
    """Serialize a Corpus back to CoNLL-U text (LF line endings).

    `comments` optionally maps sent_id to extra comment lines (without '#');
    `header` lines go at the top of the file. Both survive reparsing.
    """
    out = [f"# {line}" for line in header or []]
    for sent in corpus.sentences:
        out.append(f"# sent_id = {sent.sent_id}")
        for extra in (comments or {}).get(sent.sent_id, []):
            out.append(f"# {extra}")
        dep = sent.dep_annotations
        wid = 1
        for tok in sent.tokens:
            if not tok.segments:
                raise ValueError(
                    f"sentence {sent.sent_id!r}: token {tok.surface!r} has no segments to write"
                )
            if len(tok.segments) > 1:
                first, last = wid, wid + len(tok.segments) - 1
                out.append(_row(f"{first}-{last}", tok.surface, "_", "_", "_"))
            for k, seg in enumerate(tok.segments):
                upos = tok.labels[k] if tok.labels is not None else "_"
                head, rel = "_", "_"
                if dep is not None:
                    _, h, r = dep[wid - 1]
                    head, rel = str(h), r
                out.append(_row(str(wid), seg, upos, head, rel))
                wid += 1
        out.append("")
    return "\n".join(out) + "\n" if out else ""


def _row(wid, form, upos, head, deprel):
    cols = [wid, form, "_", upos, "_", "_", head, deprel, "_", "_"]
    return "\t".join(cols)


def read_conllu(path, split_tag="train"):
    with open(path, encoding="utf-8") as fh:
        return parse_conllu(fh, split_tag=split_tag)


def write_conllu(corpus, path, comments=None, header=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_conllu(corpus, comments=comments, header=header))
