"""Wall-clock comparison of factored and dense mean-field inference."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cpd import DEFAULT_DENSE_BUDGET, RELATIONS, DenseFactor, dense_elements, materialize, random_factors
from .mean_field import ScoreSet, infer


@dataclass(frozen=True)
class Instance:
    n: int
    num_labels: int
    rank: int
    cpd: ScoreSet
    dense: ScoreSet | None
    materialize_seconds: float


def make_instance(n: int, num_labels: int, rank: int, seed=0, with_dense: bool = True,
                  budget: int = DEFAULT_DENSE_BUDGET, share_dense: bool = False,
                  scale: float = 0.3) -> Instance:
    """Random arc scores and factors for all three relations.

    ``share_dense`` materializes only the sibling tensor and reuses it for
    the other two relation slots; the contraction cost is unchanged but peak
    memory drops by two thirds. The dense score set is None when
    ``with_dense`` is false.
    """
    rng = np.random.default_rng(seed)
    arc = rng.standard_normal((n + 1, n + 1, num_labels))
    factors = {rel: random_factors(n, num_labels, rank, scale=scale / rank ** 0.5, seed=rng, relation=rel)
               for rel in RELATIONS}
    cpd = ScoreSet(arc, **factors)
    dense, seconds = None, 0.0
    if with_dense:
        t0 = time.perf_counter()
        if share_dense:
            s = materialize(factors["sib"], budget).s
            dense = ScoreSet(arc, **{rel: DenseFactor(rel, s) for rel in RELATIONS})
        else:
            dense = ScoreSet(arc, **{rel: materialize(f, budget) for rel, f in factors.items()})
        seconds = time.perf_counter() - t0
    return Instance(n, num_labels, rank, cpd, dense, seconds)


def median_time(fn, repeats: int, warmup: int = 1) -> float:
    """Median wall time of ``fn()`` over ``repeats`` runs, after ``warmup`` untimed runs."""
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def time_inference(scores: ScoreSet, iters: int, repeats: int) -> float:
    return median_time(lambda: infer(scores, iters), repeats)


def per_iteration(scores: ScoreSet, iters: int, repeats: int) -> float:
    """Marginal cost of one iteration: (t(iters + 1) - t(1)) / iters."""
    t1 = time_inference(scores, 1, repeats)
    tk = time_inference(scores, iters + 1, repeats)
    return max(tk - t1, 1e-12) / iters


def loglog_slope(sizes, times) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float)), 1)
    return float(slope)


@dataclass
class BenchRow:
    num_labels: int
    cpd_seconds: float
    dense_seconds: float | None
    materialize_seconds: float | None
    note: str = ""


def label_sweep(n: int = 30, label_sizes=(1, 5, 10, 20, 30, 40), rank: int = 300, iters: int = 3,
                repeats: int = 100, budget: int = DEFAULT_DENSE_BUDGET, seed=0, log_fn=None) -> list:
    """Inference time of both paths for each label-set size.

    Label sizes whose dense tensor exceeds ``budget`` elements get a CPD
    timing only and a note in the row.
    """
    rows = []
    for L in label_sizes:
        fits = dense_elements(n + 1, L) <= budget
        inst = make_instance(n, L, rank, seed, with_dense=fits, budget=budget)
        cpd = time_inference(inst.cpd, iters, repeats)
        if fits:
            row = BenchRow(L, cpd, time_inference(inst.dense, iters, repeats), inst.materialize_seconds)
        else:
            row = BenchRow(L, cpd, None, None, note=f"dense skipped: {dense_elements(n + 1, L)} elements > budget {budget}")
        rows.append(row)
        if log_fn is not None:
            log_fn(format_row(row))
    return rows


def format_row(row: BenchRow) -> str:
    parts = [f"L={row.num_labels}", f"cpd_s={row.cpd_seconds:.6f}"]
    if row.dense_seconds is None:
        parts.append("dense_s=NA")
        parts.append(f'note="{row.note}"')
    else:
        parts.append(f"dense_s={row.dense_seconds:.6f}")
        parts.append(f"materialize_s={row.materialize_seconds:.6f}")
    return " ".join(parts)


def format_table(rows) -> str:
    lines = [f"{'L':>4} {'w/ CPD (s)':>12} {'w/o CPD (s)':>12}"]
    for r in rows:
        dense = "skipped" if r.dense_seconds is None else f"{r.dense_seconds:.6f}"
        lines.append(f"{r.num_labels:>4} {r.cpd_seconds:>12.6f} {dense:>12}")
    return "\n".join(lines)
