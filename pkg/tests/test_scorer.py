import numpy as np
import pytest

from cpdparse.core import Hyperparams, SdpSentence, Token
from cpdparse.cpd import materialize
from cpdparse.scorer import (LABEL_ROLES, ROOT, UNK, Scorer, Vocab, encode, init_params, relations_of,
                             score_arcs, score_factors, window_matrix)
from cpdparse.tape import LEAKY_SLOPE, Tape
from oracles import materialize_loops

HP = Hyperparams.desk(rank=3, hidden_dim=5, embed_dim=4, mlp_dim=3, label_embed_dim=2)


def sent(*forms):
    return SdpSentence(tuple(Token(f) for f in forms))


@pytest.fixture
def setup():
    s = sent("a", "b", "c", "d")
    vocab = Vocab.build([s])
    params = init_params(HP, len(vocab), 3, seed=0)
    return s, vocab, params


def test_vocab_ids_and_unknowns():
    vocab = Vocab.build([sent("x", "y")])
    assert vocab.words[:2] == (ROOT, UNK)
    assert vocab.ids(sent("y", "zzz")).tolist() == [0, 3, 1]
    with pytest.raises(ValueError):
        Vocab(("x", ROOT, UNK))


def test_window_matrix():
    M = window_matrix(4, 1)
    np.testing.assert_allclose(M.sum(1), 1.0)
    assert M[0].tolist() == [0.0, 1.0, 0.0, 0.0]
    assert M[2].tolist() == [0.0, 0.5, 0.0, 0.5]
    assert window_matrix(1, 1).tolist() == [[0.0]]


def test_encode_shape_and_determinism(setup):
    s, vocab, params = setup
    out = encode(s, vocab, params, HP)
    assert out.shape == (5, HP.hidden_dim)
    np.testing.assert_array_equal(out, encode(s, vocab, params, HP))
    assert encode(sent("a"), vocab, params, HP).shape == (2, HP.hidden_dim)


def test_encoder_is_local(setup):
    _, vocab, params = setup
    a = encode(sent("a", "b", "c", "d", "a", "b", "c"), vocab, params, HP)
    b = encode(sent("a", "b", "c", "d", "a", "c", "b"), vocab, params, HP)
    changed = np.nonzero(np.abs(a - b).max(axis=1) > 0)[0].tolist()
    # tokens 6 and 7 swapped; window 1 reaches positions 5..7
    assert set(changed) <= {5, 6, 7} and {6, 7} <= set(changed)


def _arc_params(k, L, rng):
    return {"arc.head.W": rng.standard_normal((3, k)), "arc.head.b": rng.standard_normal(k),
            "arc.child.W": rng.standard_normal((3, k)), "arc.child.b": rng.standard_normal(k),
            "arc.W": rng.standard_normal((L, k + 1, k + 1)), "label.P": np.zeros((L, 1))}


def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def test_biaffine_matches_sandwich(rng):
    k, L = 2, 2
    p = _arc_params(k, L, rng)
    reprs = rng.standard_normal((3, 3))
    s = score_arcs(reprs, p)
    head = _leaky(reprs @ p["arc.head.W"] + p["arc.head.b"])
    child = _leaky(reprs @ p["arc.child.W"] + p["arc.child.b"])
    for i in range(3):
        for j in range(3):
            for l in range(L):
                hi, cj = np.append(head[i], 1.0), np.append(child[j], 1.0)
                assert s[i, j, l] == pytest.approx(hi @ p["arc.W"][l] @ cj, abs=1e-12)


def test_biaffine_special_weights(rng):
    p = _arc_params(2, 2, rng)
    reprs = rng.standard_normal((3, 3))
    p["arc.W"] = np.zeros((2, 3, 3))
    assert not score_arcs(reprs, p).any()
    p["arc.W"][1, 2, 2] = 1.7
    s = score_arcs(reprs, p)
    assert np.all(s[..., 1] == 1.7) and not s[..., 0].any()


def test_biaffine_is_affine_in_head(rng):
    tape = Tape()
    W = tape.const(rng.standard_normal((2, 4, 4)))
    eh, ec = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))

    def s(h):
        return tape.biaffine(tape.const(h), W, tape.const(ec)).value
    base = s(np.zeros_like(eh))
    np.testing.assert_allclose(s(2.5 * eh) - base, 2.5 * (s(eh) - base), atol=1e-12)


def test_factors_from_scorer(setup):
    s, vocab, params = setup
    reprs = encode(s, vocab, params, HP)
    f = score_factors(reprs, params, "cop")
    assert f.relation == "cop" and f.rank == HP.rank
    assert f.I.shape == (5, 3) and f.A.shape == (3, 3)
    np.testing.assert_allclose(materialize(f).s, materialize_loops(f), atol=1e-12)
    assert score_factors(reprs[:2], params, "sib").K.shape == (2, 3)
    zeroed = dict(params, **{"grd.K.Q": np.zeros_like(params["grd.K.Q"])})
    assert not materialize(score_factors(reprs, zeroed, "grd")).s.any()


def test_relations_and_score_set(setup):
    s, vocab, params = setup
    assert relations_of(params) == ("sib", "cop", "grd")
    only = {k: v for k, v in params.items() if not k.startswith(("cop.", "grd."))}
    scores = Scorer(only, HP, 3).score_set(vocab.ids(s))
    assert scores.kind == "cpd" and set(scores.factors()) == {"sib"}
    assert np.all(np.isfinite(scores.arc))


def test_unlabeled_ablation_shares_label_rows(setup):
    s, vocab, _ = setup
    hp = Hyperparams.desk(rank=3, hidden_dim=5, embed_dim=4, mlp_dim=3, label_embed_dim=2,
                          label_correlation=False)
    params = init_params(hp, len(vocab), 4, seed=1)
    assert "label.unlabeled" in params
    scores = Scorer(params, hp, 4).score_set(vocab.ids(s))
    for f in scores.factors().values():
        for role in LABEL_ROLES:
            M = getattr(f, role)
            assert not M[0].any()
            np.testing.assert_array_equal(M[1:], np.broadcast_to(M[1], M[1:].shape))
