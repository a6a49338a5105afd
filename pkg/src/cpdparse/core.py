"""Domain types shared by every module: labels, sentences, graphs, posteriors."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Iterable

import numpy as np

from .errors import LabelVocabularyError, SdpFormatError, ShapeError

NULL = "<null>"
TOP_LABEL = "<top>"


def _frozen(array, dtype=None):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LabelSet:
    """Ordered label vocabulary. Index 0 is always the reserved NULL label."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels or labels[0] != NULL:
            raise LabelVocabularyError(f"labels[0] must be {NULL!r}")
        if len(set(labels)) != len(labels):
            raise LabelVocabularyError("duplicate labels in vocabulary")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    null_index = 0

    @classmethod
    def build(cls, names: Iterable[str]) -> "LabelSet":
        """Vocabulary from observed label names, sorted, NULL prepended."""
        seen = sorted({n for n in names if n != NULL})
        return cls((NULL, *seen))

    @classmethod
    def from_sentences(cls, sentences: Iterable["SdpSentence"]) -> "LabelSet":
        return cls.build(lab for s in sentences for (_, _, lab) in s.arcs)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, name):
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LabelVocabularyError(f"unknown label {name!r}") from None

    def name(self, index: int) -> str:
        return self.labels[index]


@dataclass(frozen=True)
class Token:
    form: str
    lemma: str = "_"
    pos: str = "_"
    frame: str = "_"


@dataclass(frozen=True)
class SdpSentence:
    """A sentence with gold arcs.

    Tokens are 1-indexed; position 0 is the implicit root. ``arcs`` holds
    ``(head, dependent, label)`` with string labels; TOP markers are arcs from
    the root labelled :data:`TOP_LABEL`. ``preds`` lists positions flagged as
    predicates, which may include predicates without arguments.
    """

    tokens: tuple
    arcs: frozenset = frozenset()
    id: str | None = None
    preds: tuple = ()

    def __post_init__(self):
        tokens = tuple(t if isinstance(t, Token) else Token(*t) for t in self.tokens)
        arcs = tuple(self.arcs)
        n = len(tokens)
        pairs = set()
        for head, dep, label in arcs:
            if not (0 <= head <= n and 1 <= dep <= n):
                raise SdpFormatError(f"arc ({head}, {dep}) out of range for {n} tokens")
            if head == dep:
                raise SdpFormatError(f"self-arc at token {dep}")
            if (head, dep) in pairs:
                raise SdpFormatError(f"duplicate arc ({head}, {dep})")
            if not label or label == NULL:
                raise SdpFormatError(f"arc ({head}, {dep}) has no label")
            pairs.add((head, dep))
        preds = tuple(sorted(set(self.preds) | {h for h, _, _ in arcs if h > 0}))
        if any(not 1 <= p <= n for p in preds):
            raise SdpFormatError("predicate position out of range")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "arcs", frozenset(arcs))
        object.__setattr__(self, "preds", preds)

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def forms(self) -> list:
        return [t.form for t in self.tokens]

    def with_arcs(self, arcs) -> "SdpSentence":
        """Copy with a new arc set; predicate flags follow the new arcs."""
        return replace(self, arcs=frozenset(arcs), preds=())


@dataclass(frozen=True)
class LabeledGraph:
    """Discrete labelled graph stored as an ``(n+1, n+1)`` label-index matrix.

    ``tags[i, j] = l`` means arc i -> j with label l; 0 is NULL (no arc). The
    order-3 indicator tensor is available as :attr:`y`.
    """

    tags: np.ndarray
    num_labels: int

    def __post_init__(self):
        tags = np.asarray(self.tags)
        if tags.ndim != 2 or tags.shape[0] != tags.shape[1]:
            raise ShapeError(f"tags must be square, got {tags.shape}")
        if tags.size and (tags.min() < 0 or tags.max() >= self.num_labels):
            raise ShapeError("label index out of range")
        if tags.size and (np.any(tags[:, 0] != 0) or np.any(np.diag(tags) != 0)):
            raise ShapeError("root column and diagonal must be NULL")
        object.__setattr__(self, "tags", _frozen(tags, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.tags.shape[0] - 1

    @property
    def y(self) -> np.ndarray:
        return np.eye(self.num_labels)[self.tags]

    @classmethod
    def empty(cls, n: int, num_labels: int) -> "LabeledGraph":
        return cls(np.zeros((n + 1, n + 1), dtype=np.int64), num_labels)

    @classmethod
    def from_indicator(cls, y) -> "LabeledGraph":
        y = np.asarray(y)
        if np.any((y != 0) & (y != 1)) or np.any(y.sum(-1) != 1):
            raise ShapeError("indicator rows must be one-hot")
        return cls(y.argmax(-1), y.shape[-1])

    def arcs(self, include_root=True) -> set:
        heads, deps = np.nonzero(self.tags)
        return {
            (int(i), int(j), int(self.tags[i, j]))
            for i, j in zip(heads, deps)
            if include_root or i != 0
        }

    def __eq__(self, other):
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        return self.num_labels == other.num_labels and np.array_equal(self.tags, other.tags)

    __hash__ = None


def clamp_mask(n: int) -> np.ndarray:
    """Boolean ``(n+1, n+1)`` mask of cells fixed to NULL: root dependents and self-arcs."""
    mask = np.eye(n + 1, dtype=bool)
    mask[:, 0] = True
    return mask


@dataclass(frozen=True)
class Posterior:
    """Relaxed graph: a label distribution for every (head, dependent) cell."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim != 3 or q.shape[0] != q.shape[1]:
            raise ShapeError(f"posterior must be (n+1, n+1, L), got {q.shape}")
        if q.size:
            if q.min() < 0 or q.max() > 1 + 1e-12:
                raise ValueError("posterior entries must be in [0, 1]")
            if np.abs(q.sum(-1) - 1).max() > 1e-9:
                raise ValueError("posterior rows must sum to 1")
        object.__setattr__(self, "q", _frozen(q))

    @property
    def n(self) -> int:
        return self.q.shape[0] - 1

    @property
    def num_labels(self) -> int:
        return self.q.shape[-1]

    def entropy(self) -> float:
        q = self.q
        return float(-np.sum(np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0)))


@dataclass(frozen=True)
class Hyperparams:
    """Model and training settings. Defaults are the full-scale values."""

    rank: int = 300
    train_iters: int = 2
    test_iters: int = 10
    hidden_dim: int = 300
    embed_dim: int = 100
    mlp_dim: int = 300
    label_embed_dim: int = 100
    window: int = 1
    lr: float = 2.5e-3
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    epochs: int = 30
    batch_tokens: int = 3000
    clip_norm: float = 5.0
    warmup: float = 0.5
    seed: int = 0
    label_correlation: bool = True
    init_scale: float = 0.1

    def __post_init__(self):
        for name in ("rank", "train_iters", "test_iters", "hidden_dim", "embed_dim",
                     "mlp_dim", "label_embed_dim", "epochs", "batch_tokens"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.window < 0:
            raise ValueError("window must be >= 0")

    @classmethod
    def desk(cls, **overrides) -> "Hyperparams":
        """Small settings for CPU runs on toy data."""
        base = dict(rank=16, hidden_dim=32, embed_dim=32, mlp_dim=32, label_embed_dim=16,
                    epochs=50, batch_tokens=256)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            if key not in known:
                raise KeyError(f"unknown hyperparameter {key!r}")
            kwargs[key] = tuple(value) if key == "betas" else value
        return cls(**kwargs)


def graph_from_gold(sentence: SdpSentence, labels: LabelSet) -> LabeledGraph:
    """Indicator graph of the sentence's gold arcs; absent pairs are NULL."""
    n = sentence.n
    tags = np.zeros((n + 1, n + 1), dtype=np.int64)
    for head, dep, label in sentence.arcs:
        if tags[head, dep]:
            raise SdpFormatError(f"duplicate arc ({head}, {dep})")
        tags[head, dep] = labels.index(label)
    return LabeledGraph(tags, len(labels))


def posterior_from_graph(g: LabeledGraph) -> Posterior:
    return Posterior(g.y)


def sentence_from_graph(template: SdpSentence, g: LabeledGraph, labels: LabelSet) -> SdpSentence:
    """Replace a sentence's arcs with the arcs of ``g`` (label names from ``labels``)."""
    if g.n != template.n:
        raise ShapeError(f"graph has {g.n} tokens, sentence has {template.n}")
    return template.with_arcs((i, j, labels.name(l)) for i, j, l in g.arcs())

