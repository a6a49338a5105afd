"""Reader and writer for the SemEval 2015 (and 2014) SDP column format.

Token lines are tab-separated::

    ID FORM LEMMA POS TOP PRED [FRAME] ARG_1 ... ARG_p

where ``p`` is the number of tokens in the sentence whose PRED column is
``+``. The k-th ARG column holds the label of the arc from the k-th
predicate to the token on that row, or ``_``. A TOP ``+`` marks an arc from
the root, stored here with the label :data:`~cpdparse.core.TOP_LABEL`.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

from .core import TOP_LABEL, SdpSentence, Token
from .errors import SdpFormatError


@dataclass(frozen=True)
class SdpDocument:
    sentences: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, k):
        return self.sentences[k]

    @property
    def ids(self) -> list:
        return [s.id for s in self.sentences]


def _build_sentence(sid, rows, frame, path):
    """rows: list of (line_number, columns)."""
    fixed = 7 if frame else 6
    tokens, tops, preds = [], [], []
    for expected, (lineno, cols) in enumerate(rows, start=1):
        if len(cols) < fixed:
            raise SdpFormatError(f"expected at least {fixed} columns, got {len(cols)}", lineno, path)
        try:
            tid = int(cols[0])
        except ValueError:
            raise SdpFormatError(f"token id {cols[0]!r} is not an integer", lineno, path) from None
        if tid != expected:
            raise SdpFormatError(f"non-contiguous token id {tid}, expected {expected}", lineno, path)
        top, pred = cols[4], cols[5]
        if top not in "+-" or pred not in "+-" or not top or not pred:
            raise SdpFormatError("TOP and PRED columns must be '+' or '-'", lineno, path)
        tokens.append(Token(cols[1], cols[2], cols[3], cols[6] if frame else "_"))
        if top == "+":
            tops.append(tid)
        if pred == "+":
            preds.append(tid)

    arcs = [(0, j, TOP_LABEL) for j in tops]
    for lineno, cols in rows:
        args = cols[fixed:]
        if len(args) != len(preds):
            raise SdpFormatError(
                f"{len(args)} argument columns but {len(preds)} predicates declared", lineno, path
            )
        dep = int(cols[0])
        for head, cell in zip(preds, args):
            if cell != "_":
                arcs.append((head, dep, cell))
    try:
        return SdpSentence(tuple(tokens), frozenset(arcs), id=sid, preds=tuple(preds))
    except SdpFormatError as exc:
        raise SdpFormatError(str(exc), rows[0][0] if rows else None, path) from None


def read_sdp(stream: TextIO | str, frame: bool = True, path=None) -> SdpDocument:
    """Parse an SDP document. ``frame=False`` reads the 2014 layout."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    sentences = []
    sid, rows = None, []

    def flush():
        nonlocal sid, rows
        if rows:
            sentences.append(_build_sentence(sid, rows, frame, path))
        elif sid is not None:
            sentences.append(SdpSentence((), frozenset(), id=sid))
        sid, rows = None, []

    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush()
        elif line.startswith("#") and not rows:
            if sid is not None:
                flush()
            sid = line[1:]
        else:
            rows.append((lineno, line.split("\t")))
    flush()
    return SdpDocument(sentences)


def read_sdp_file(path, frame: bool = True) -> SdpDocument:
    with open(path, encoding="utf-8", newline="") as fh:
        return read_sdp(fh, frame=frame, path=str(path))


def _sentence_lines(sentence: SdpSentence, frame: bool) -> Iterable[str]:
    if sentence.id is not None:
        yield "#" + sentence.id
    preds = list(sentence.preds)
    column = {p: k for k, p in enumerate(preds)}
    tops = {dep for head, dep, _ in sentence.arcs if head == 0}
    cells = [["_"] * len(preds) for _ in range(sentence.n)]
    for head, dep, label in sentence.arcs:
        if head > 0:
            cells[dep - 1][column[head]] = label
    pred_set = set(preds)
    for j, tok in enumerate(sentence.tokens, start=1):
        cols = [str(j), tok.form, tok.lemma, tok.pos,
                "+" if j in tops else "-", "+" if j in pred_set else "-"]
        if frame:
            cols.append(tok.frame or "_")
        cols.extend(cells[j - 1])
        yield "\t".join(cols)


def write_sdp(doc: SdpDocument | Iterable[SdpSentence], frame: bool = True) -> str:
    """Serialize to SDP text. Root arcs are written as TOP marks whatever their label."""
    out = []
    for sentence in doc:
        out.extend(_sentence_lines(sentence, frame))
        out.append("")
    return "\n".join(out) + "\n" if out else ""


def write_sdp_file(doc, path, frame: bool = True) -> None:
    Path(path).write_text(write_sdp(doc, frame=frame), encoding="utf-8", newline="\n")
