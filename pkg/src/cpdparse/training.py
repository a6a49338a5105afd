"""Loss, gradients through the unrolled inference, optimization and gradient checks."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Hyperparams, LabeledGraph, clamp_mask
from .cpd import RELATIONS
from .errors import TrainingDivergenceError
from .evaluation import evaluate
from .mean_field import _array
from .model import Parser
from .tape import Tape

log = logging.getLogger(__name__)


def loss(negF, gold: LabeledGraph) -> float:
    """Label cross-entropy summed over all cells except root-dependent and self-arc cells."""
    x = _array(negF)
    z = x - x.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, gold.tags[..., None], axis=-1)[..., 0]
    return float(-picked[~clamp_mask(gold.n)].sum())


def backward(tape: Tape, root) -> dict:
    return tape.backward(root)


def group_of(name: str) -> str:
    return name.split(".", 1)[0]


def grad_norms(grads: dict) -> dict:
    sq = {}
    for name, g in grads.items():
        sq[group_of(name)] = sq.get(group_of(name), 0.0) + float(np.sum(g * g))
    return {k: math.sqrt(v) for k, v in sq.items()}


@dataclass
class LossReport:
    total: float
    per_sentence: list
    grad_norms: dict = field(default_factory=dict)


class KahanSum:
    """Compensated running sum of arrays keyed by name."""

    def __init__(self):
        self.sum = {}
        self.comp = {}

    def add(self, grads: dict):
        for name, g in grads.items():
            if name not in self.sum:
                self.sum[name] = np.array(g, dtype=np.float64)
                self.comp[name] = np.zeros_like(self.sum[name])
                continue
            y = g - self.comp[name]
            t = self.sum[name] + y
            self.comp[name] = (t - self.sum[name]) - y
            self.sum[name] = t

    def result(self) -> dict:
        return self.sum


def batch_loss(parser: Parser, sentences, iters=None, golds=None) -> tuple:
    """Summed loss and accumulated gradients over a batch."""
    acc = KahanSum()
    losses = []
    for k, s in enumerate(sentences):
        value, grads = parser.loss_and_grads(s, iters, None if golds is None else golds[k])
        if not math.isfinite(value):
            raise TrainingDivergenceError(f"non-finite loss on sentence {s.id!r}", node="loss")
        losses.append(value)
        acc.add(grads)
    grads = acc.result()
    return LossReport(math.fsum(losses), losses, grad_norms(grads)), grads


def clip_gradients(grads: dict, max_norm: float):
    total = math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and total > max_norm:
        factor = max_norm / (total + 1e-12)
        grads = {k: g * factor for k, g in grads.items()}
    return grads, total


def lr_at(step: int, total_steps: int, base_lr: float, warmup: float) -> float:
    """Linear warmup over the first ``warmup`` fraction of steps, then linear decay to zero."""
    warm = max(1, int(round(warmup * total_steps)))
    if step < warm:
        return base_lr * (step + 1) / warm
    rest = max(1, total_steps - warm)
    return base_lr * max(0.0, (total_steps - step) / rest)


class AdamW:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for name, p in self.params.items():
            g = grads.get(name)
            p *= 1 - lr * self.wd
            if g is None:
                continue
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            p -= lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


def token_batches(sentences, batch_tokens: int, rng=None) -> list:
    """Group sentences into batches of roughly ``batch_tokens`` tokens, shuffled by ``rng``."""
    order = list(range(len(sentences)))
    if rng is not None:
        rng.shuffle(order)
    batches, current, count = [], [], 0
    for i in order:
        current.append(sentences[i])
        count += sentences[i].n
        if count >= batch_tokens:
            batches.append(current)
            current, count = [], 0
    if current:
        batches.append(current)
    return batches


def lf1_on(parser: Parser, sentences, iters=None, include_root_arcs=False) -> float:
    preds = [parser.parse_graph(s, iters) for s in sentences]
    golds = [parser.gold(s) for s in sentences]
    return evaluate(preds, golds, include_root_arcs=include_root_arcs, buckets=False).lf1


@dataclass
class TrainResult:
    parser: Parser
    last: Parser
    history: list
    best_epoch: int

    def log_lines(self) -> list:
        return [format_record(r) for r in self.history]


def format_record(record: dict) -> str:
    parts = []
    for k, v in record.items():
        parts.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
    return " ".join(parts)


def train(train_set, hp: Hyperparams, dev_set=None, parser: Parser | None = None,
          relations=RELATIONS, log_fn=None, stop_on_train_lf1: float | None = None,
          train_eval_every: int = 1) -> TrainResult:
    """Train a parser; keep the parameters with the best dev LF1.

    With ``stop_on_train_lf1`` set, training LF1 is measured every
    ``train_eval_every`` epochs and training stops once it reaches the value.
    """
    train_set = list(train_set)
    if not train_set:
        raise ValueError("empty training set")
    dev_set = list(dev_set) if dev_set else []
    parser = parser or Parser.create(train_set, hp, relations)
    parser.check_labels(dev_set)
    golds = [parser.gold(s) for s in train_set]
    rng = np.random.default_rng(hp.seed)
    opt = AdamW(parser.params, hp.lr, hp.betas, weight_decay=hp.weight_decay)
    steps_per_epoch = len(token_batches(train_set, hp.batch_tokens))
    total_steps = steps_per_epoch * hp.epochs
    index = {id(s): k for k, s in enumerate(train_set)}
    history, best, best_score, best_epoch, step = [], parser.copy(), -1.0, 0, 0

    def emit(record):
        history.append(record)
        if log_fn is not None:
            log_fn(format_record(record))
        log.info(format_record(record))

    for epoch in range(1, hp.epochs + 1):
        epoch_losses = []
        for batch in token_batches(train_set, hp.batch_tokens, rng):
            report, grads = batch_loss(parser, batch, hp.train_iters, [golds[index[id(s)]] for s in batch])
            grads, _ = clip_gradients(grads, hp.clip_norm)
            opt.step(grads, lr_at(step, total_steps, hp.lr, hp.warmup))
            step += 1
            epoch_losses.extend(report.per_sentence)
        record = {"epoch": epoch, "split": "train", "loss": math.fsum(epoch_losses) / len(epoch_losses)}
        train_lf1 = None
        if stop_on_train_lf1 is not None and (epoch % train_eval_every == 0 or epoch == hp.epochs):
            train_lf1 = lf1_on(parser, train_set)
            record["LF1"] = train_lf1
        emit(record)
        if dev_set:
            dev_lf1 = lf1_on(parser, dev_set)
            dev_loss = math.fsum(parser.loss(s, hp.test_iters) for s in dev_set) / len(dev_set)
            emit({"epoch": epoch, "split": "dev", "loss": dev_loss, "LF1": dev_lf1})
            if dev_lf1 > best_score:
                best, best_score, best_epoch = parser.copy(), dev_lf1, epoch
        else:
            best, best_epoch = parser, epoch
        if train_lf1 is not None and train_lf1 >= stop_on_train_lf1:
            break
    return TrainResult(best, parser, history, best_epoch)


# -- finite differences -------------------------------------------------------------

FD_FLOOR = 1e-5


def relative_error(a: float, b: float, floor: float = FD_FLOOR) -> float:
    """|a - b| relative to the larger magnitude, which is floored for near-zero gradients."""
    return abs(a - b) / max(abs(a), abs(b), floor)


@dataclass
class GradCheck:
    worst: dict
    checked: dict
    skipped: int

    @property
    def max_error(self) -> float:
        return max(self.worst.values())


def gradient_check(parser: Parser, sentence, coords_per_group: int = 20, step: float = 1e-5,
                   iters: int | None = None, seed=0) -> GradCheck:
    """Compare analytic gradients with central differences on random coordinates.

    Coordinates whose stencil flips the sign of any LeakyReLU input straddle a
    kink, where the loss is not differentiable; they are replaced by other
    coordinates of the same group. Groups with fewer usable entries than
    ``coords_per_group`` are checked exhaustively.
    """
    rng = np.random.default_rng(seed)
    gold = parser.gold(sentence)
    _, grads = parser.loss_and_grads(sentence, iters, gold)
    base_pattern = parser.loss_tape(sentence, iters, gold)[1].activation_pattern()
    groups = {}
    for name in sorted(parser.params):
        groups.setdefault(group_of(name), []).append(name)
    used_rows = set(np.unique(parser.vocab.ids(sentence)).tolist())
    worst, checked, skipped = {}, {}, 0
    for group, names in groups.items():
        pool = []
        for name in names:
            shape = parser.params[name].shape
            for idx in np.ndindex(*shape):
                if name == "enc.embed" and idx[0] not in used_rows:
                    continue
                pool.append((name, idx))
        order = rng.permutation(len(pool))
        errs = []
        for k in order:
            if len(errs) >= coords_per_group:
                break
            name, idx = pool[k]
            p = parser.params[name]
            orig = p[idx]
            p[idx] = orig + step
            up, tape_up = parser.loss_tape(sentence, iters, gold)
            p[idx] = orig - step
            down, tape_down = parser.loss_tape(sentence, iters, gold)
            p[idx] = orig
            if not (np.array_equal(tape_up.activation_pattern(), base_pattern)
                    and np.array_equal(tape_down.activation_pattern(), base_pattern)):
                skipped += 1
                continue
            numeric = (up - down) / (2 * step)
            analytic = float(grads[name][idx]) if name in grads else 0.0
            errs.append(relative_error(analytic, numeric))
        worst[group] = max(errs) if errs else 0.0
        checked[group] = len(errs)
    return GradCheck(worst, checked, skipped)
