"""Parser: vocabulary, label set, hyperparameters and parameters in one object."""
from __future__ import annotations

import numpy as np

from . import checkpoint
from .core import Hyperparams, LabeledGraph, LabelSet, SdpSentence, graph_from_gold, sentence_from_graph
from .cpd import RELATIONS
from .errors import LabelVocabularyError
from .mean_field import decode, infer
from .scorer import Scorer, Vocab, init_params
from .tape import Tape


class Parser:
    def __init__(self, vocab: Vocab, labels: LabelSet, hp: Hyperparams, params: dict,
                 relations=RELATIONS):
        self.vocab = vocab
        self.labels = labels
        self.hp = hp
        self.params = params
        self.relations = tuple(relations)

    @classmethod
    def create(cls, sentences, hp: Hyperparams, relations=RELATIONS, labels: LabelSet | None = None):
        """Fresh parser with vocabulary and labels taken from ``sentences``."""
        sentences = list(sentences)
        vocab = Vocab.build(sentences)
        labels = labels or LabelSet.from_sentences(sentences)
        params = init_params(hp, len(vocab), len(labels), relations)
        return cls(vocab, labels, hp, params, relations)

    @property
    def scorer(self) -> Scorer:
        return Scorer(self.params, self.hp, len(self.labels))

    def gold(self, sentence: SdpSentence) -> LabeledGraph:
        return graph_from_gold(sentence, self.labels)

    def score_set(self, sentence: SdpSentence):
        return self.scorer.score_set(self.vocab.ids(sentence))

    def parse_graph(self, sentence: SdpSentence, iters: int | None = None) -> LabeledGraph:
        iters = self.hp.test_iters if iters is None else iters
        if sentence.n == 0:
            return LabeledGraph.empty(0, len(self.labels))
        return decode(infer(self.score_set(sentence), iters))

    def parse(self, sentence: SdpSentence, iters: int | None = None) -> SdpSentence:
        return sentence_from_graph(sentence, self.parse_graph(sentence, iters), self.labels)

    def loss_and_grads(self, sentence: SdpSentence, iters: int | None = None, gold=None):
        """Cross-entropy of the unrolled network on one sentence and its parameter gradients."""
        iters = self.hp.train_iters if iters is None else iters
        gold = gold if gold is not None else self.gold(sentence)
        tape = Tape()
        negF, mask = self.scorer.unrolled(tape, self.vocab.ids(sentence), iters)
        loss = tape.cross_entropy(negF, gold.tags, mask)
        grads = tape.backward(loss)
        return float(loss.value), grads

    def loss(self, sentence: SdpSentence, iters: int | None = None, gold=None) -> float:
        return self.loss_tape(sentence, iters, gold)[0]

    def loss_tape(self, sentence: SdpSentence, iters: int | None = None, gold=None):
        """Loss value plus the recorded tape (no backward pass)."""
        iters = self.hp.train_iters if iters is None else iters
        gold = gold if gold is not None else self.gold(sentence)
        tape = Tape()
        negF, mask = self.scorer.unrolled(tape, self.vocab.ids(sentence), iters)
        return float(tape.cross_entropy(negF, gold.tags, mask).value), tape

    def check_labels(self, sentences) -> None:
        """Raise if any gold label is outside the frozen vocabulary."""
        for s in sentences:
            for _, _, label in s.arcs:
                if label not in self.labels:
                    raise LabelVocabularyError(f"sentence {s.id!r}: unknown label {label!r}")

    def copy(self) -> "Parser":
        return Parser(self.vocab, self.labels, self.hp, {k: v.copy() for k, v in self.params.items()},
                      self.relations)

    # -- checkpoints ----------------------------------------------------------

    def metadata(self) -> dict:
        hp = self.hp.to_dict()
        hp["betas"] = list(hp["betas"])
        return {"vocab": list(self.vocab.words), "labels": list(self.labels.labels),
                "hyperparams": hp, "relations": list(self.relations)}

    def save(self, path) -> None:
        checkpoint.save(path, self.params, self.metadata())

    def to_bytes(self) -> bytes:
        return checkpoint.dumps(self.params, self.metadata())

    @classmethod
    def _from_parts(cls, tensors, meta):
        return cls(Vocab(tuple(meta["vocab"])), LabelSet(tuple(meta["labels"])),
                   Hyperparams.from_dict(meta["hyperparams"]),
                   {k: np.asarray(v) for k, v in tensors.items()}, tuple(meta["relations"]))

    @classmethod
    def load(cls, path) -> "Parser":
        return cls._from_parts(*checkpoint.load(path))

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Parser":
        return cls._from_parts(*checkpoint.loads(blob))
