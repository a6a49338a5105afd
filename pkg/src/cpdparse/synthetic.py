"""Synthetic SDP corpora with label co-occurrence constraints.

Words ``w00``..``w{V-1}`` fall into predicates, modifiers and nouns; each
word has a compatibility class ``id % 3``. In every sentence:

* a predicate heads each noun and modifier of its class;
* among a predicate's nouns, the one with the largest id is ``ARG1`` and
  the others are ``ARG2``, so a head never has two ARG1 children;
* modifiers are labelled ``MOD``.

Whether a noun is ARG1 depends on its siblings, which a first-order scorer
cannot see but a label-aware sibling factor can.
"""
from __future__ import annotations

import numpy as np

from .core import SdpSentence, Token

LABELS = ("ARG1", "ARG2", "MOD")
CLASSES = 3


def word(i: int) -> str:
    return f"w{i:02d}"


def _partition(vocab_size):
    n_pred = max(CLASSES, vocab_size // 5)
    n_mod = max(CLASSES, vocab_size // 10)
    preds = list(range(n_pred))
    mods = list(range(n_pred, n_pred + n_mod))
    nouns = list(range(n_pred + n_mod, vocab_size))
    return preds, mods, nouns


def gold_arcs(ids, vocab_size: int) -> set:
    preds, mods, _ = _partition(vocab_size)
    pred_set, mod_set = set(preds), set(mods)
    arcs = set()
    for h, wh in enumerate(ids, start=1):
        if wh not in pred_set:
            continue
        nouns = []
        for d, wd in enumerate(ids, start=1):
            if d == h or wd in pred_set or wd % CLASSES != wh % CLASSES:
                continue
            if wd in mod_set:
                arcs.add((h, d, "MOD"))
            else:
                nouns.append((wd, d))
        for rank, (_, d) in enumerate(sorted(nouns, reverse=True)):
            arcs.add((h, d, "ARG1" if rank == 0 else "ARG2"))
    return arcs


def sentence(rng, vocab_size: int = 50, min_len: int = 6, max_len: int = 10, sid=None) -> SdpSentence:
    preds, mods, nouns = _partition(vocab_size)
    length = int(rng.integers(min_len, max_len + 1))
    n_pred = int(rng.integers(1, 3))
    n_mod = int(rng.integers(0, 2))
    n_noun = max(1, length - n_pred - n_mod)
    chosen = list(rng.choice(preds, size=n_pred, replace=False))
    chosen += list(rng.choice(mods, size=n_mod, replace=False))
    # nouns share classes with the predicates often enough to create siblings
    classes = [p % CLASSES for p in chosen[:n_pred]]
    pool = [w for w in nouns if w % CLASSES in classes]
    other = [w for w in nouns if w % CLASSES not in classes]
    k = min(len(pool), max(1, int(round(0.7 * n_noun))))
    picked = list(rng.choice(pool, size=k, replace=False))
    if n_noun - k > 0 and other:
        picked += list(rng.choice(other, size=min(len(other), n_noun - k), replace=False))
    ids = [int(w) for w in chosen + picked]
    rng.shuffle(ids)
    tokens = tuple(Token(word(w), word(w), "_") for w in ids)
    return SdpSentence(tokens, frozenset(gold_arcs(ids, vocab_size)), id=sid)


def corpus(size: int, seed=0, vocab_size: int = 50, min_len: int = 6, max_len: int = 10,
           prefix: str = "syn") -> list:
    rng = np.random.default_rng(seed)
    return [sentence(rng, vocab_size, min_len, max_len, sid=f"{prefix}{k:05d}") for k in range(size)]


def random_labeled(rng, n: int, num_labels: int, density: float = 0.3, vocab_size: int = 20,
                   sid=None) -> SdpSentence:
    """Random words and random arcs over labels ``L1``..``L{num_labels-1}``; no structure."""
    ids = rng.integers(0, vocab_size, size=n)
    tokens = tuple(Token(word(int(w)), word(int(w)), "_") for w in ids)
    arcs = set()
    if num_labels > 1:
        for h in range(n + 1):
            for d in range(1, n + 1):
                if h != d and rng.random() < density:
                    arcs.add((h, d, f"L{int(rng.integers(1, num_labels))}"))
    return SdpSentence(tokens, frozenset(arcs), id=sid)
