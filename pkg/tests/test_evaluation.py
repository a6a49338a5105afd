import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpdparse.core import LabeledGraph
from cpdparse.evaluation import Counts, bucket_of, evaluate, f1


def graph(n, arcs, L=4):
    tags = np.zeros((n + 1, n + 1), dtype=int)
    for i, j, l in arcs:
        tags[i, j] = l
    return LabeledGraph(tags, L)


def test_identity_and_empty():
    g = graph(3, [(1, 2, 1), (0, 1, 2)])
    assert evaluate([g], [g]).lf1 == 1.0
    r = evaluate([graph(3, [])], [g])
    assert r.lf1 == 0.0 and r.recall == 0.0 and r.precision == 0.0


def test_three_of_four():
    gold = graph(4, [(1, 2, 1), (1, 3, 2), (2, 4, 1), (4, 1, 3)])
    pred = graph(4, [(1, 2, 1), (1, 3, 2), (2, 4, 1), (3, 1, 3)])
    r = evaluate([pred], [gold])
    assert (r.precision, r.recall, r.lf1) == (0.75, 0.75, 0.75)


def test_unlabeled_credit():
    gold = graph(2, [(1, 2, 1)])
    pred = graph(2, [(1, 2, 2)])
    r = evaluate([pred], [gold])
    assert r.lf1 == 0.0 and r.uf1 == 1.0


def test_root_arcs_flag():
    gold = graph(2, [(0, 1, 3), (1, 2, 1)])
    pred = graph(2, [(1, 2, 1)])
    assert evaluate([pred], [gold]).lf1 == 1.0
    assert evaluate([pred], [gold], include_root_arcs=True).recall == 0.5


def test_zero_over_zero():
    assert f1(0.0, 0.0) == 0.0
    assert Counts().lf1 == 0.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        evaluate([graph(1, [])], [])


def test_buckets_and_report():
    assert [bucket_of(k) for k in (1, 10, 11, 70, 71)] == ["1-10", "1-10", "11-20", "61-70", ">70"]
    r = evaluate([graph(3, [(1, 2, 1)]), graph(12, [])], [graph(3, [(1, 2, 1)]), graph(12, [(1, 2, 1)])])
    assert list(r.buckets) == ["1-10", "11-20"]
    assert r.buckets["11-20"].lf1 == 0.0
    kv = dict(line.split("=", 1) for line in r.to_kv().splitlines())
    assert kv["LF1"] == f"{r.lf1:.6f}" and kv["bucket.1-10.gold"] == "1"
    assert "LF1" in r.to_text()


arc_sets = st.sets(st.tuples(st.integers(0, 4), st.integers(1, 4), st.integers(1, 3)).filter(
    lambda a: a[0] != a[1]), max_size=10)


def _dedupe(arcs):
    seen = {}
    for i, j, l in sorted(arcs):
        seen[(i, j)] = l
    return [(i, j, l) for (i, j), l in seen.items()]


@settings(max_examples=80, deadline=None)
@given(arc_sets, arc_sets)
def test_swap_symmetry(a, b):
    p, g = graph(4, _dedupe(a)), graph(4, _dedupe(b))
    x, y = evaluate([p], [g]), evaluate([g], [p])
    assert x.precision == y.recall and x.recall == y.precision
    assert x.lf1 == pytest.approx(y.lf1)
    assert x.lf1 <= x.uf1 + 1e-15


@settings(max_examples=80, deadline=None)
@given(arc_sets, arc_sets)
def test_adding_a_correct_arc_never_hurts(a, b):
    pred, gold = dict(((i, j), l) for i, j, l in _dedupe(a)), _dedupe(b)
    missing = [(i, j, l) for i, j, l in gold if pred.get((i, j)) != l]
    if not missing:
        return
    before = evaluate([graph(4, [(i, j, l) for (i, j), l in pred.items()])], [graph(4, gold)]).lf1
    i, j, l = missing[0]
    pred[(i, j)] = l
    after = evaluate([graph(4, [(i, j, l) for (i, j), l in pred.items()])], [graph(4, gold)]).lf1
    assert after >= before - 1e-15
