import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpdparse.core import LabeledGraph, Posterior, clamp_mask
from cpdparse.cpd import RELATIONS, CpdFactors, DenseFactor, materialize, random_factors
from cpdparse.errors import BudgetExceededError, ShapeError
from cpdparse.mean_field import (ScoreSet, aggregate, cpd_update, cpd_update_backward, cpd_update_cop,
                                 cpd_update_grd, cpd_update_sib, decode, dense_update, energy,
                                 energy_gradient, factored_update, final_field, infer, mf_step,
                                 naive_update, trajectory)
from oracles import energy_loops, message_loops, random_posterior, softmax_rows


def instance(n, L, R, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    arc = rng.standard_normal((n + 1, n + 1, L))
    factors = {rel: random_factors(n, L, R, scale=scale, seed=rng, relation=rel) for rel in RELATIONS}
    cpd = ScoreSet(arc, **factors)
    dense = ScoreSet(arc, **{rel: materialize(f) for rel, f in factors.items()})
    return cpd, dense


def zero_second_order(n, L, seed=0, kind="cpd"):
    rng = np.random.default_rng(seed)
    arc = rng.standard_normal((n + 1, n + 1, L))
    factors = {rel: random_factors(n, L, 2, scale=0.0, seed=0, relation=rel) for rel in RELATIONS}
    if kind == "dense":
        factors = {rel: materialize(f) for rel, f in factors.items()}
    return ScoreSet(arc, **factors)


# -- contractions ----------------------------------------------------------------

@pytest.mark.parametrize("relation", RELATIONS)
def test_dense_update_matches_loops(relation, rng):
    s = rng.standard_normal((5, 5, 5, 3, 3))
    q = random_posterior(rng, 4, 3)
    np.testing.assert_allclose(dense_update(DenseFactor(relation, s), q), message_loops(relation, s, q),
                               rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("relation", RELATIONS)
def test_cpd_update_matches_materialized(relation, rng):
    f = random_factors(5, 3, 4, seed=rng, relation=relation)
    q = random_posterior(rng, 5, 3, clamp=False)
    expect = dense_update(materialize(f), q)
    np.testing.assert_allclose(cpd_update(f, q), expect, rtol=1e-8, atol=1e-12)


def test_relation_specific_entry_points(rng):
    q = random_posterior(rng, 3, 2)
    for fn, rel in [(cpd_update_sib, "sib"), (cpd_update_cop, "cop"), (cpd_update_grd, "grd")]:
        f = random_factors(3, 2, 3, seed=1, relation=rel)
        np.testing.assert_allclose(fn(f, q), dense_update(materialize(f), q), atol=1e-12)
        wrong = "cop" if rel == "sib" else "sib"
        with pytest.raises(ValueError):
            fn(random_factors(3, 2, 3, seed=1, relation=wrong), q)


def test_zero_factors_give_zero_messages(rng):
    q = random_posterior(rng, 3, 2)
    for rel in RELATIONS:
        assert not cpd_update(random_factors(3, 2, 2, scale=0.0, relation=rel), q).any()


def test_all_ones_sibling_counts_cells(rng):
    n, L = 4, 3
    m = n + 1
    f = CpdFactors("sib", np.ones((m, 1)), np.ones((m, 1)), np.ones((m, 1)), np.ones((L, 1)), np.ones((L, 1)))
    np.testing.assert_allclose(cpd_update(f, random_posterior(rng, n, L, clamp=False)), m)


def test_coparent_two_token_hand_sum(rng):
    f = random_factors(1, 2, 3, seed=5, relation="cop")
    q = random_posterior(rng, 1, 2, clamp=False)
    expect = np.zeros((2, 2, 2))
    for i in range(2):
        for j in range(2):
            for a in range(2):
                for r in range(3):
                    pooled = sum(f.K[k, r] * f.B[b, r] * q[k, j, b] for k in range(2) for b in range(2))
                    expect[i, j, a] += f.I[i, r] * f.J[j, r] * f.A[a, r] * pooled
    np.testing.assert_allclose(cpd_update(f, q), expect, atol=1e-13)


def test_grandparent_one_hot_selects_slice():
    f = random_factors(3, 3, 4, seed=2, relation="grd")
    q = np.zeros((4, 4, 3))
    q[2, 3, 1] = 1.0
    s = materialize(f).s
    t = cpd_update(f, q)
    np.testing.assert_allclose(t[:, 2, :], s[:, 2, 3, :, 1], atol=1e-13)
    assert not np.delete(t, 2, axis=1).any()


@pytest.mark.parametrize("relation", RELATIONS)
def test_backward_matches_dense_adjoint(relation, rng):
    f = random_factors(4, 3, 5, seed=rng, relation=relation)
    q = random_posterior(rng, 4, 3, clamp=False)
    g = rng.standard_normal((5, 5, 3))
    dq, grads = cpd_update_backward(f, q, g)
    subscripts = {"sib": "ijkab,ija->ikb", "cop": "ijkab,ija->kjb", "grd": "ijkab,ija->jkb"}[relation]
    np.testing.assert_allclose(dq, np.einsum(subscripts, materialize(f).s, g), rtol=1e-10, atol=1e-12)
    # directional finite difference for each factor matrix
    for role in ("I", "J", "K", "A", "B"):
        d = rng.standard_normal(getattr(f, role).shape)
        h = 1e-6

        def value(c):
            mats = {r: getattr(f, r) for r in ("I", "J", "K", "A", "B")}
            mats[role] = mats[role] + c * d
            return float(np.sum(g * cpd_update(CpdFactors(relation, **mats), q)))
        numeric = (value(h) - value(-h)) / (2 * h)
        assert np.sum(grads[role] * d) == pytest.approx(numeric, rel=1e-6, abs=1e-9)


# -- aggregation -----------------------------------------------------------------

def test_naive_update_matches_loops(rng):
    cpd, dense = instance(4, 3, 3, seed=4)
    q = random_posterior(rng, 4, 3)
    expect = cpd.arc.copy()
    for rel, f in dense.factors().items():
        expect += message_loops(rel, f.s, q)
    np.testing.assert_allclose(naive_update(dense, q).negF, expect, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(factored_update(cpd, q).negF, expect, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(aggregate(cpd, q).negF, expect, rtol=1e-8, atol=1e-12)


def test_zero_second_order_update_is_arc(rng):
    s = zero_second_order(3, 2, kind="dense")
    np.testing.assert_array_equal(naive_update(s, random_posterior(rng, 3, 2)).negF, s.arc)


def test_null_mass_with_null_free_factors(rng):
    n, L = 3, 3
    arc = rng.standard_normal((n + 1, n + 1, L))
    dense = {}
    for rel in RELATIONS:
        s = rng.standard_normal((n + 1, n + 1, n + 1, L, L))
        s[..., 0] = 0.0
        dense[rel] = DenseFactor(rel, s)
    q = np.zeros((n + 1, n + 1, L))
    q[..., 0] = 1.0
    np.testing.assert_array_equal(naive_update(ScoreSet(arc, **dense), q).negF, arc)


def test_path_errors():
    cpd, dense = instance(2, 2, 2, seed=0)
    q = random_posterior(np.random.default_rng(0), 2, 2)
    with pytest.raises(TypeError):
        naive_update(cpd, q)
    with pytest.raises(TypeError):
        factored_update(dense, q)
    with pytest.raises(BudgetExceededError):
        naive_update(dense, q, budget=10)
    with pytest.raises(ShapeError):
        ScoreSet(cpd.arc, sib=cpd.sib, cop=dense.cop)
    with pytest.raises(ShapeError):
        ScoreSet(cpd.arc[:2, :2], sib=cpd.sib)
    with pytest.raises(ShapeError):
        ScoreSet(cpd.arc, sib=cpd.cop)


# -- energy ----------------------------------------------------------------------

def test_energy_matches_loops(rng):
    for seed in range(3):
        n, L = 3, 2
        cpd, dense = instance(n, L, 3, seed=seed)
        tags = rng.integers(0, L, size=(n + 1, n + 1))
        tags[clamp_mask(n)] = 0
        g = LabeledGraph(tags, L)
        expect = energy_loops(dense.arc, {r: f.s for r, f in dense.factors().items()}, g.y)
        assert energy(dense, g) == pytest.approx(expect, rel=1e-10, abs=1e-12)
        assert energy(cpd, g) == pytest.approx(expect, rel=1e-8, abs=1e-12)


def test_energy_first_order_only(rng):
    s = zero_second_order(3, 3)
    g = LabeledGraph.empty(3, 3)
    tags = np.array(g.tags)
    tags[1, 2] = 2
    g = LabeledGraph(tags, 3)
    null_cells = [(i, j) for i in range(4) for j in range(4) if (i, j) != (1, 2)]
    expect = -s.arc[1, 2, 2] - sum(s.arc[i, j, 0] for i, j in null_cells)
    assert energy(s, g) == pytest.approx(expect, rel=1e-12)
    zero = ScoreSet(np.zeros((4, 4, 3)), **{r: f for r, f in s.factors().items()})
    assert energy(zero, g) == 0.0


def test_energy_shape_mismatch():
    cpd, _ = instance(2, 2, 2, seed=0)
    with pytest.raises(ShapeError):
        energy(cpd, LabeledGraph.empty(3, 2))


@pytest.mark.parametrize("relations", [("sib",), ("cop",), ("grd",), RELATIONS])
def test_energy_gradient_finite_differences(relations, rng):
    n, L = 2, 3
    arc = rng.standard_normal((n + 1, n + 1, L))
    scores = ScoreSet(arc, **{r: random_factors(n, L, 3, seed=rng, relation=r) for r in relations})
    y = rng.random((n + 1, n + 1, L))
    grad = energy_gradient(scores, y)
    h = 1e-5
    for idx in np.ndindex(*y.shape):
        up, down = y.copy(), y.copy()
        up[idx] += h
        down[idx] -= h
        numeric = (energy(scores, up) - energy(scores, down)) / (2 * h)
        assert grad[idx] == pytest.approx(numeric, rel=1e-4, abs=1e-7)


def _symmetrize(relation, s):
    axes = {"sib": (0, 2, 1, 4, 3), "cop": (2, 1, 0, 4, 3)}[relation]
    return 0.5 * (s + s.transpose(axes))


@pytest.mark.parametrize("relation", ["sib", "cop"])
def test_update_is_negative_energy_gradient_for_symmetric_scores(relation, rng):
    n, L = 3, 2
    arc = rng.standard_normal((n + 1, n + 1, L))
    s = _symmetrize(relation, rng.standard_normal((n + 1,) * 3 + (L, L)))
    scores = ScoreSet(arc, **{relation: DenseFactor(relation, s)})
    q = random_posterior(rng, n, L)
    np.testing.assert_allclose(naive_update(scores, q).negF, -energy_gradient(scores, q), atol=1e-12)


# -- iterations ------------------------------------------------------------------

def test_trajectory_matches_loop_softmax():
    cpd, dense = instance(3, 3, 2, seed=9)
    qs, fields = trajectory(dense, 3)
    q = softmax_rows(dense.arc)
    q[clamp_mask(3)] = np.eye(3)[0]
    np.testing.assert_allclose(qs[0].q, q, atol=1e-14)
    for step in range(1, 4):
        negF = naive_update(dense, q).negF
        np.testing.assert_allclose(fields[step].negF, negF, atol=1e-12)
        q = softmax_rows(negF)
        q[clamp_mask(3)] = np.eye(3)[0]
        np.testing.assert_allclose(qs[step].q, q, atol=1e-12)


def test_infer_equals_trajectory_end():
    cpd, dense = instance(4, 3, 3, seed=1)
    for scores in (cpd, dense):
        qs, fields = trajectory(scores, 4)
        np.testing.assert_allclose(infer(scores, 4).q, qs[-1].q, atol=1e-13)
        np.testing.assert_allclose(final_field(scores, 4).negF, fields[-1].negF, atol=1e-12)
    np.testing.assert_array_equal(final_field(cpd, 0).negF, cpd.arc)


def test_infer_requires_an_iteration():
    cpd, _ = instance(2, 2, 2, seed=0)
    with pytest.raises(ValueError):
        infer(cpd, 0)


def test_first_order_fixed_point():
    s = zero_second_order(4, 3)
    first = infer(s, 1).q
    expect = softmax_rows(s.arc)
    expect[clamp_mask(4)] = np.eye(3)[0]
    np.testing.assert_allclose(first, expect, atol=1e-14)
    np.testing.assert_array_equal(infer(s, 10).q, infer(s, 11).q)


def test_uniform_row_softmax():
    s = ScoreSet(np.zeros((2, 2, 2)))
    assert infer(s, 1).q[0, 1].tolist() == [0.5, 0.5]


def test_mf_step_ignores_q_without_second_order(rng):
    s = zero_second_order(3, 2)
    a = mf_step(s, random_posterior(rng, 3, 2)).q
    b = mf_step(s, random_posterior(rng, 3, 2)).q
    np.testing.assert_array_equal(a, b)


def test_clamped_cells_are_null_after_every_step():
    cpd, _ = instance(4, 3, 3, seed=3)
    qs, _ = trajectory(cpd, 3)
    mask = clamp_mask(4)
    for q in qs:
        assert np.all(q.q[mask, 0] == 1.0) and np.all(q.q[mask, 1:] == 0.0)


# -- decoding --------------------------------------------------------------------

def test_decode_rules():
    q = np.zeros((3, 3, 3))
    q[..., 0] = 1.0
    assert decode(q).arcs() == set()
    q[1, 2] = [0, 0, 1]
    q[0, 1] = [0, 1, 0]
    assert decode(q).arcs() == {(1, 2, 2), (0, 1, 1)}
    q[2, 1] = [0.5, 0.5, 0.0]
    assert decode(q).tags[2, 1] == 0
    q[1, 1] = [0, 1, 0]
    assert decode(q).tags[1, 1] == 0


# -- properties ------------------------------------------------------------------

sizes = st.tuples(st.integers(1, 5), st.integers(1, 4), st.integers(1, 5), st.integers(1, 4),
                  st.integers(0, 2**31 - 1))


@settings(max_examples=40, deadline=None)
@given(sizes)
def test_factored_and_dense_trajectories_agree(params):
    n, L, R, iters, seed = params
    cpd, dense = instance(n, L, R, seed)
    a, _ = trajectory(cpd, iters)
    b, _ = trajectory(dense, iters)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.q, y.q, rtol=1e-8, atol=1e-300)


@settings(max_examples=40, deadline=None)
@given(sizes, st.floats(0.1, 5.0))
def test_rows_normalized_every_step(params, scale):
    n, L, R, iters, seed = params
    cpd, _ = instance(n, L, R, seed, scale=scale)
    qs, _ = trajectory(cpd, iters)
    for q in qs:
        assert np.abs(q.q.sum(-1) - 1).max() <= 1e-9
        assert q.q.min() >= 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_decode_invariant_to_row_shift(n, L, seed, c):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n + 1, n + 1, L))
    i, j = rng.integers(0, n + 1, size=2)
    shifted = x.copy()
    shifted[i, j] += c
    a = decode(Posterior(softmax_rows(x)))
    b = decode(Posterior(softmax_rows(shifted)))
    assert a == b


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_decode_ties_go_to_lowest_index(n, L, seed):
    rng = np.random.default_rng(seed)
    q = np.zeros((n + 1, n + 1, L))
    winners = rng.integers(0, L, size=(n + 1, n + 1))
    for idx in np.ndindex(n + 1, n + 1):
        w = winners[idx]
        tied = [w] + [k for k in range(w + 1, L) if rng.random() < 0.5]
        q[idx][tied] = 1.0 / len(tied)
    tags = decode(q).tags
    mask = clamp_mask(n)
    np.testing.assert_array_equal(tags[~mask], winners[~mask])
    assert np.all(tags[mask] == 0)
    np.testing.assert_array_equal(decode(q).tags, tags)
