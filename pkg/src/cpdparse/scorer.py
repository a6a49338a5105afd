"""Neural scoring: token encoder, biaffine arc head and CPD factor heads.

The encoder is a deliberately small stand-in for a contextual encoder: a
word embedding mixed with the mean of its neighbours' embeddings through a
learned gate, then one LeakyReLU layer. The heads sit on top of it:

* arc scores ``s[i, j, l] = [e_head_i; 1]^T W[l] [e_child_j; 1]``;
* for every relation, token factors I, J, K from MLPs over token vectors and
  label factors A, B from MLPs over a label embedding table, each followed
  by ``Q = [e; 1] W_Q`` with ``W_Q`` of shape (k + 1, R).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Hyperparams, SdpSentence, clamp_mask
from .cpd import RELATIONS, ROLES, CpdFactors
from .mean_field import ScoreSet
from .tape import Tape

ROOT = "<root>"
UNK = "<unk>"
TOKEN_ROLES = ("I", "J", "K")
LABEL_ROLES = ("A", "B")


@dataclass(frozen=True)
class Vocab:
    words: tuple

    def __post_init__(self):
        words = tuple(self.words)
        if words[:2] != (ROOT, UNK):
            raise ValueError("vocabulary must start with the root and unknown symbols")
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(words)})

    @classmethod
    def build(cls, sentences) -> "Vocab":
        seen = sorted({t.form for s in sentences for t in s.tokens} - {ROOT, UNK})
        return cls((ROOT, UNK, *seen))

    def __len__(self):
        return len(self.words)

    def ids(self, sentence: SdpSentence) -> np.ndarray:
        """Root id followed by one id per token; unseen forms map to UNK."""
        unk = self._index[UNK]
        return np.array([0] + [self._index.get(t.form, unk) for t in sentence.tokens], dtype=np.int64)


def window_matrix(size: int, window: int) -> np.ndarray:
    """Row-stochastic matrix averaging each position's neighbours within ``window``."""
    M = np.zeros((size, size))
    for i in range(size):
        nbrs = [j for j in range(max(0, i - window), min(size, i + window + 1)) if j != i]
        if nbrs:
            M[i, nbrs] = 1.0 / len(nbrs)
    return M


def init_params(hp: Hyperparams, vocab_size: int, num_labels: int, relations=RELATIONS,
                seed=None) -> dict:
    rng = np.random.default_rng(hp.seed if seed is None else seed)
    d, H, k, dl, R = hp.embed_dim, hp.hidden_dim, hp.mlp_dim, hp.label_embed_dim, hp.rank

    def glorot(fan_in, fan_out, shape=None):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out))

    p = {
        "enc.embed": rng.normal(0.0, 1.0, size=(vocab_size, d)),
        "enc.gate.W": glorot(d, d),
        "enc.gate.b": np.zeros(d),
        "enc.out.W": glorot(d, H),
        "enc.out.b": np.zeros(H),
        "arc.head.W": glorot(H, k),
        "arc.head.b": np.zeros(k),
        "arc.child.W": glorot(H, k),
        "arc.child.b": np.zeros(k),
        "arc.W": glorot(k + 1, k + 1, (num_labels, k + 1, k + 1)) * 0.1,
        "label.P": rng.uniform(-0.1, 0.1, size=(num_labels, dl)),
    }
    if not hp.label_correlation:
        p["label.unlabeled"] = rng.uniform(-0.1, 0.1, size=(1, dl))
    for rel in relations:
        for role in ROLES:
            fan_in = H if role in TOKEN_ROLES else dl
            p[f"{rel}.{role}.W"] = glorot(fan_in, k)
            p[f"{rel}.{role}.b"] = np.zeros(k)
            p[f"{rel}.{role}.Q"] = rng.uniform(-hp.init_scale, hp.init_scale, size=(k + 1, R))
    return p


def relations_of(params: dict) -> tuple:
    return tuple(rel for rel in RELATIONS if f"{rel}.I.Q" in params)


class Scorer:
    """Forward scoring over a tape; the same graph serves inference and training."""

    def __init__(self, params: dict, hp: Hyperparams, num_labels: int):
        self.params = params
        self.hp = hp
        self.num_labels = num_labels
        self.relations = relations_of(params)

    def _p(self, tape, name):
        return tape.param(name, self.params[name])

    def encode(self, tape: Tape, ids):
        x = tape.gather(self._p(tape, "enc.embed"), ids, "enc.embed")
        ctx = tape.left_matmul(window_matrix(len(ids), self.hp.window), x, "enc.window")
        gate = tape.sigmoid(tape.dense(x, self._p(tape, "enc.gate.W"), self._p(tape, "enc.gate.b"),
                                       "enc.gate"), "enc.gate.sigmoid")
        mixed = tape.add(tape.mul(gate, x, "enc.keep"),
                         tape.mul(tape.one_minus(gate), ctx, "enc.mix"), "enc.mixed")
        return tape.leaky_relu(tape.dense(mixed, self._p(tape, "enc.out.W"),
                                          self._p(tape, "enc.out.b"), "enc.out"), "enc.act")

    def _mlp(self, tape, x, prefix):
        return tape.leaky_relu(tape.dense(x, self._p(tape, prefix + ".W"), self._p(tape, prefix + ".b"),
                                          prefix), prefix + ".act")

    def arc_scores(self, tape, reprs):
        head = self._mlp(tape, reprs, "arc.head")
        child = self._mlp(tape, reprs, "arc.child")
        return tape.biaffine(head, self._p(tape, "arc.W"), child, "arc.biaffine")

    def factor_nodes(self, tape, reprs, rel):
        if self.hp.label_correlation:
            labels_in = self._p(tape, "label.P")
        else:
            labels_in = self._p(tape, "label.unlabeled")
        roles = []
        for role in ROLES:
            x = reprs if role in TOKEN_ROLES else labels_in
            e = self._mlp(tape, x, f"{rel}.{role}")
            Q = tape.affine1(e, self._p(tape, f"{rel}.{role}.Q"), f"{rel}.{role}.affine")
            if role in LABEL_ROLES and not self.hp.label_correlation:
                Q = tape.null_broadcast(Q, self.num_labels, f"{rel}.{role}.broadcast")
            roles.append(Q)
        return roles

    def forward(self, tape: Tape, ids):
        """Returns the arc-score node and ``{relation: [I, J, K, A, B] nodes}``."""
        reprs = self.encode(tape, ids)
        arc = self.arc_scores(tape, reprs)
        return arc, {rel: self.factor_nodes(tape, reprs, rel) for rel in self.relations}

    def unrolled(self, tape: Tape, ids, iters: int):
        """Score, then ``iters`` mean-field iterations. Returns the final aggregated-score node."""
        arc, factors = self.forward(tape, ids)
        mask = clamp_mask(len(ids) - 1)
        negF = arc
        for m in range(1, iters + 1):
            q = tape.softmax_clamped(negF, mask, f"mf{m}.q")
            msgs = [tape.cpd_message(rel, roles, q, f"mf{m}.{rel}") for rel, roles in factors.items()]
            negF = tape.sum([arc, *msgs], f"mf{m}.negF") if msgs else arc
        return negF, mask

    def score_set(self, ids) -> ScoreSet:
        tape = Tape()
        arc, factors = self.forward(tape, ids)
        kwargs = {rel: CpdFactors(rel, *(r.value for r in roles)) for rel, roles in factors.items()}
        return ScoreSet(arc.value, **kwargs)


def encode(sentence: SdpSentence, vocab: Vocab, params: dict, hp: Hyperparams) -> np.ndarray:
    """Token representations of shape (n + 1, hidden_dim); row 0 is the root."""
    scorer = Scorer(params, hp, params["label.P"].shape[0])
    return scorer.encode(Tape(), vocab.ids(sentence)).value


def score_arcs(reprs, params: dict) -> np.ndarray:
    tape = Tape()
    scorer = Scorer(params, Hyperparams.desk(), params["arc.W"].shape[0])
    return scorer.arc_scores(tape, tape.const(reprs)).value


def score_factors(reprs, params: dict, rel: str, label_correlation: bool = True) -> CpdFactors:
    tape = Tape()
    num_labels = params["label.P"].shape[0]
    scorer = Scorer(params, Hyperparams.desk(label_correlation=label_correlation), num_labels)
    roles = scorer.factor_nodes(tape, tape.const(reprs), rel)
    return CpdFactors(rel, *(r.value for r in roles))

