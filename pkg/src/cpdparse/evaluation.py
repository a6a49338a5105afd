"""Labelled and unlabelled F1 over predicted arc sets."""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import LabeledGraph
from .errors import ShapeError

BUCKET_WIDTH = 10
MAX_BUCKET = 70


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _ratio(a, b):
    return a / b if b else 0.0


@dataclass(frozen=True)
class Counts:
    predicted: int = 0
    gold: int = 0
    correct: int = 0
    unlabeled_correct: int = 0

    def __add__(self, other):
        return Counts(self.predicted + other.predicted, self.gold + other.gold,
                      self.correct + other.correct, self.unlabeled_correct + other.unlabeled_correct)

    @property
    def precision(self):
        return _ratio(self.correct, self.predicted)

    @property
    def recall(self):
        return _ratio(self.correct, self.gold)

    @property
    def lf1(self):
        return f1(self.precision, self.recall)

    @property
    def uf1(self):
        return f1(_ratio(self.unlabeled_correct, self.predicted), _ratio(self.unlabeled_correct, self.gold))


def bucket_of(length: int) -> str:
    if length > MAX_BUCKET:
        return f">{MAX_BUCKET}"
    lo = (max(length, 1) - 1) // BUCKET_WIDTH * BUCKET_WIDTH + 1
    return f"{lo}-{lo + BUCKET_WIDTH - 1}"


@dataclass(frozen=True)
class F1Report:
    counts: Counts
    buckets: dict = field(default_factory=dict)
    include_root_arcs: bool = False

    @property
    def precision(self):
        return self.counts.precision

    @property
    def recall(self):
        return self.counts.recall

    @property
    def lf1(self):
        return self.counts.lf1

    @property
    def uf1(self):
        return self.counts.uf1

    def as_dict(self) -> dict:
        c = self.counts
        return {"precision": c.precision, "recall": c.recall, "LF1": c.lf1, "UF1": c.uf1,
                "predicted": c.predicted, "gold": c.gold, "correct": c.correct,
                "unlabeled_correct": c.unlabeled_correct, "root_arcs": int(self.include_root_arcs)}

    def to_kv(self) -> str:
        lines = [f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}" for k, v in self.as_dict().items()]
        for name, c in self.buckets.items():
            lines.append(f"bucket.{name}.LF1={c.lf1:.6f}")
            lines.append(f"bucket.{name}.gold={c.gold}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        c = self.counts
        rows = [
            f"LP {100 * c.precision:6.2f}  LR {100 * c.recall:6.2f}  LF1 {100 * c.lf1:6.2f}  UF1 {100 * c.uf1:6.2f}",
            f"arcs: predicted {c.predicted}, gold {c.gold}, correct {c.correct}"
            + ("" if self.include_root_arcs else " (root arcs excluded)"),
        ]
        if self.buckets:
            rows.append("length   LF1     gold")
            rows += [f"{name:>7} {100 * b.lf1:6.2f} {b.gold:8d}" for name, b in self.buckets.items()]
        return "\n".join(rows) + "\n"


def sentence_counts(pred: LabeledGraph, gold: LabeledGraph, include_root_arcs: bool = False) -> Counts:
    if pred.n != gold.n:
        raise ShapeError(f"predicted graph has {pred.n} tokens, gold has {gold.n}")
    p = pred.arcs(include_root=include_root_arcs)
    g = gold.arcs(include_root=include_root_arcs)
    unlabeled = {(i, j) for i, j, _ in p} & {(i, j) for i, j, _ in g}
    return Counts(len(p), len(g), len(p & g), len(unlabeled))


def evaluate(predicted, gold, include_root_arcs: bool = False, buckets: bool = True) -> F1Report:
    predicted, gold = list(predicted), list(gold)
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted graphs but {len(gold)} gold graphs")
    total = Counts()
    per_bucket = {}
    for p, g in zip(predicted, gold):
        c = sentence_counts(p, g, include_root_arcs)
        total = total + c
        key = bucket_of(g.n)
        per_bucket[key] = per_bucket.get(key, Counts()) + c

    def order(name):
        return int(name.split("-")[0]) if "-" in name else MAX_BUCKET + 1

    table = {k: per_bucket[k] for k in sorted(per_bucket, key=order)} if buckets else {}
    return F1Report(total, table, include_root_arcs)
