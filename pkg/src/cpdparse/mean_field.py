"""Mean-field inference for labelled second-order graphs.

Each iteration aggregates, for every cell (i, j, a), the arc score plus the
second-order messages from sibling (i -> k), co-parent (k -> j) and
grandchild (j -> k) arcs under the current posterior, then applies a row
softmax over labels::

    negF[i,j,a] = arc[i,j,a] + sum_kb ( sib[i,j,k,a,b] q[i,k,b]
                                      + cop[i,j,k,a,b] q[k,j,b]
                                      + grd[i,j,k,a,b] q[j,k,b] )

With factored scores the three sums are computed in O(n^2 L R) by pooling
over (k, b) once per rank component, without building the order-5 tensors.
Root-dependent and self-arc cells are clamped to NULL after every softmax.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabeledGraph, Posterior, clamp_mask
from .cpd import RELATIONS, CpdFactors, DenseFactor, check_budget
from .errors import ShapeError

DENSE_CONTRACTIONS = {
    "sib": "ijkab,ikb->ija",
    "cop": "ijkab,kjb->ija",
    "grd": "ijkab,jkb->ija",
}

# Adjoint of each contraction with respect to q (used for exact energy gradients).
DENSE_ADJOINTS = {
    "sib": "ijkab,ija->ikb",
    "cop": "ijkab,ija->kjb",
    "grd": "ijkab,ija->jkb",
}


def _array(q):
    if isinstance(q, Posterior):
        return q.q
    if isinstance(q, LabeledGraph):
        return q.y
    if isinstance(q, NegEnergyField):
        return q.negF
    return np.asarray(q, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class NegEnergyField:
    """Aggregated per-cell label scores of one iteration (the negated energy gradient)."""

    negF: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.negF)):
            raise FloatingPointError("non-finite aggregated scores")


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Arc scores plus optional sibling / co-parent / grandparent scores.

    The second-order entries are all :class:`CpdFactors` or all
    :class:`DenseFactor`; ``None`` means the relation is absent.
    """

    arc: np.ndarray
    sib: CpdFactors | DenseFactor | None = None
    cop: CpdFactors | DenseFactor | None = None
    grd: CpdFactors | DenseFactor | None = None

    def __post_init__(self):
        arc = np.asarray(self.arc, dtype=np.float64)
        if arc.ndim != 3 or arc.shape[0] != arc.shape[1]:
            raise ShapeError(f"arc scores must be (n+1, n+1, L), got {arc.shape}")
        object.__setattr__(self, "arc", arc)
        kinds = {type(f) for f in self.factors().values()}
        if len(kinds) > 1:
            raise ShapeError("second-order scores must all be factored or all dense")
        for rel, f in self.factors().items():
            if f.relation != rel:
                raise ShapeError(f"{rel} slot holds {f.relation} factors")
            if f.size != arc.shape[0] or f.num_labels != arc.shape[2]:
                raise ShapeError(f"{rel} factors do not match arc scores {arc.shape}")

    @property
    def n(self) -> int:
        return self.arc.shape[0] - 1

    @property
    def num_labels(self) -> int:
        return self.arc.shape[2]

    @property
    def kind(self) -> str:
        """'cpd', 'dense' or 'none'."""
        fs = list(self.factors().values())
        if not fs:
            return "none"
        return "cpd" if isinstance(fs[0], CpdFactors) else "dense"

    def factors(self) -> dict:
        return {rel: getattr(self, rel) for rel in RELATIONS if getattr(self, rel) is not None}


# -- factored contractions ----------------------------------------------------

def cpd_pool(f: CpdFactors, q):
    """First stage: pool q over (k, b) into one vector per rank component.

    Returns ``(P, qB)`` where ``qB[u, v, r] = sum_b q[u, v, b] B[b, r]`` and ``P``
    is indexed by the head i (sib) or the dependent j (cop, grd).
    """
    q = _array(q)
    m, L = f.size, f.num_labels
    if q.shape != (m, m, L):
        raise ShapeError(f"posterior shape {q.shape} does not match factors")
    qB = (q.reshape(m * m, L) @ f.B).reshape(m, m, f.rank)
    return _pool_k(f.relation, qB, f.K), qB


def _pool_k(relation, qB, K):
    if relation == "cop":
        return np.einsum("kjr,kr->jr", qB, K)
    return np.einsum("ikr,kr->ir", qB, K)


def cpd_expand(f: CpdFactors, P) -> np.ndarray:
    """Second stage: spread the pooled vectors back over (i, j, a)."""
    m = f.size
    U = _spread(f.relation, f.I, f.J, P)
    return (U.reshape(m * m, f.rank) @ f.A.T).reshape(m, m, f.num_labels)


def _spread(relation, I, J, P, out=None):
    """U[i, j, r] = I[i, r] J[j, r] P[., r] with P indexed by i (sib) or j (cop, grd)."""
    if relation == "sib":
        return np.multiply((I * P)[:, None, :], J[None, :, :], out=out)
    return np.multiply(I[:, None, :], (J * P)[None, :, :], out=out)


def cpd_update(f: CpdFactors, q) -> np.ndarray:
    P, _ = cpd_pool(f, q)
    return cpd_expand(f, P)


def _require(f, relation):
    if f.relation != relation:
        raise ValueError(f"expected {relation} factors, got {f.relation}")
    return f


def cpd_update_sib(f: CpdFactors, q) -> np.ndarray:
    """t[i,j,a] = sum_kb s[i,j,k,a,b] q[i,k,b] from the factors of s."""
    return cpd_update(_require(f, "sib"), q)


def cpd_update_cop(f: CpdFactors, q) -> np.ndarray:
    """t[i,j,a] = sum_kb s[i,j,k,a,b] q[k,j,b] from the factors of s."""
    return cpd_update(_require(f, "cop"), q)


def cpd_update_grd(f: CpdFactors, q) -> np.ndarray:
    """t[i,j,a] = sum_kb s[i,j,k,a,b] q[j,k,b] from the factors of s."""
    return cpd_update(_require(f, "grd"), q)


def cpd_update_backward(f: CpdFactors, q, grad, P=None, qB=None):
    """Vector-Jacobian product of :func:`cpd_update`.

    Returns ``(dq, {role: dmatrix})`` for an upstream gradient ``grad`` on the
    (n+1, n+1, L) output. Cost is O(n^2 L R), like the forward pass.
    """
    q = _array(q)
    if P is None or qB is None:
        P, qB = cpd_pool(f, q)
    I, J, K, A, B = f.matrices()
    H = grad @ A  # (m, m, R)
    if f.relation == "sib":
        IP = I * P
        dA = np.einsum("ija,ijr->ar", grad, IP[:, None, :] * J[None, :, :])
        W = np.einsum("ijr,jr->ir", H, J)
        dJ = np.einsum("ijr,ir->jr", H, IP)
        dI = W * P
        dP = W * I
    else:
        JP = J * P
        dA = np.einsum("ija,ijr->ar", grad, I[:, None, :] * JP[None, :, :])
        W = np.einsum("ijr,ir->jr", H, I)
        dI = np.einsum("ijr,jr->ir", H, JP)
        dJ = W * P
        dP = W * J
    if f.relation == "cop":
        dK = np.einsum("jr,kjr->kr", dP, qB)
        dqB = dP[None, :, :] * K[:, None, :]
    else:
        dK = np.einsum("ir,ikr->kr", dP, qB)
        dqB = dP[:, None, :] * K[None, :, :]
    dB = np.einsum("ikb,ikr->br", q, dqB)
    dq = dqB @ B.T
    return dq, {"I": dI, "J": dJ, "K": dK, "A": dA, "B": dB}


# -- dense path -----------------------------------------------------------------

def dense_update(f: DenseFactor, q) -> np.ndarray:
    return np.einsum(DENSE_CONTRACTIONS[f.relation], f.s, _array(q))


def naive_update(scores: ScoreSet, q, budget=None) -> NegEnergyField:
    """Aggregated scores from materialized order-5 tensors, O(n^3 L^2)."""
    if scores.kind == "cpd":
        raise TypeError("naive_update needs dense second-order scores")
    q = _array(q)
    if budget is not None:
        check_budget(scores.n + 1, scores.num_labels, budget)
    negF = scores.arc.copy()
    for f in scores.factors().values():
        negF += dense_update(f, q)
    return NegEnergyField(negF)


def factored_update(scores: ScoreSet, q) -> NegEnergyField:
    if scores.kind == "dense":
        raise TypeError("factored_update needs CPD second-order scores")
    return NegEnergyField(scores.arc + fused_messages(list(scores.factors().values()), _array(q)))


def fused_messages(factors, q) -> np.ndarray:
    """Sum of several relations' factored messages using one pooling and one expansion GEMM."""
    m, L = q.shape[0], q.shape[2]
    if not factors:
        return np.zeros((m, m, L))
    ranks = [f.rank for f in factors]
    edges = np.cumsum([0] + ranks)
    B = np.concatenate([f.B for f in factors], axis=1)
    A = np.concatenate([f.A for f in factors], axis=1)
    qB = (q.reshape(m * m, L) @ B).reshape(m, m, edges[-1])
    U = np.empty_like(qB)
    for f, lo, hi in zip(factors, edges[:-1], edges[1:]):
        P = _pool_k(f.relation, qB[:, :, lo:hi], f.K)
        _spread(f.relation, f.I, f.J, P, out=U[:, :, lo:hi])
    return (U.reshape(m * m, edges[-1]) @ A.T).reshape(m, m, L)


def aggregate(scores: ScoreSet, q) -> NegEnergyField:
    return naive_update(scores, q) if scores.kind == "dense" else factored_update(scores, q)


# -- energy ---------------------------------------------------------------------

def _messages(f, y):
    return dense_update(f, y) if isinstance(f, DenseFactor) else cpd_update(f, y)


def _adjoint(f, y):
    if isinstance(f, DenseFactor):
        return np.einsum(DENSE_ADJOINTS[f.relation], f.s, y)
    dq, _ = cpd_update_backward(f, y, y)
    return dq


def energy(scores: ScoreSet, g) -> float:
    """E(y): minus the arc term minus half of each second-order quadratic form."""
    y = _array(g)
    if y.shape != scores.arc.shape:
        raise ShapeError(f"graph shape {y.shape} does not match scores {scores.arc.shape}")
    neg = float(np.sum(scores.arc * y))
    for f in scores.factors().values():
        neg += 0.5 * float(np.sum(y * _messages(f, y)))
    return -neg


def energy_gradient(scores: ScoreSet, g) -> np.ndarray:
    """Exact dE/dy. Each quadratic term contributes through both of its arcs."""
    y = _array(g)
    grad = scores.arc.copy()
    for f in scores.factors().values():
        grad += 0.5 * (_messages(f, y) + _adjoint(f, y))
    return -grad


# -- iterations -----------------------------------------------------------------

def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=axis, keepdims=True)
    return z


def clamp(q) -> np.ndarray:
    """Force root-dependent and self-arc rows to NULL one-hot (in place on a copy)."""
    q = np.array(q, dtype=np.float64)
    mask = clamp_mask(q.shape[0] - 1)
    q[mask] = 0.0
    q[mask, 0] = 1.0
    return q


def posterior_from_field(negF) -> Posterior:
    return Posterior(clamp(softmax(_array(negF))))


def mf_step(scores: ScoreSet, q) -> Posterior:
    return posterior_from_field(aggregate(scores, q))


def trajectory(scores: ScoreSet, iters: int, update=None):
    """Run ``iters`` iterations from the first-order posterior.

    Returns ``(posteriors, fields)``: ``posteriors[m]`` is q^m for m = 0..iters
    and ``fields[m]`` is the aggregated score that produced it (``fields[0]``
    is the arc score). ``update`` overrides the aggregation (test hook).
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    update = update or aggregate
    fields = [NegEnergyField(scores.arc)]
    posteriors = [posterior_from_field(scores.arc)]
    for _ in range(iters):
        fields.append(update(scores, posteriors[-1]))
        posteriors.append(posterior_from_field(fields[-1]))
    return posteriors, fields


class _Runner:
    """Allocation-light iteration loop used by :func:`infer`.

    Numerically the same as :func:`trajectory`, but validates only the final
    posterior and reuses buffers between iterations. Posteriors and fields
    are held label-major, shape (L, m, m), so the per-cell reductions of the
    softmax run over contiguous rows.
    """

    def __init__(self, scores: ScoreSet):
        self.scores = scores
        m, L = scores.n + 1, scores.num_labels
        self.m, self.L = m, L
        self.arcT = np.ascontiguousarray(scores.arc.transpose(2, 0, 1))
        self.clamped = np.nonzero(clamp_mask(m - 1))
        self.qT = np.empty((L, m, m))
        self.negT = np.empty((L, m, m))
        self._max = np.empty((m, m))
        self._sum = np.empty((m, m))
        self.factors = list(scores.factors().values())
        if scores.kind == "cpd":
            edges = np.cumsum([0] + [f.rank for f in self.factors])
            self.slices = list(zip(self.factors, edges[:-1], edges[1:]))
            self.B = np.concatenate([f.B for f in self.factors], axis=1)
            self.A = np.ascontiguousarray(np.concatenate([f.A for f in self.factors], axis=1))
            self.qB = np.empty((m * m, edges[-1]))
            self.U = np.empty((m, m, edges[-1]))

    @property
    def q(self):
        return self.qT.transpose(1, 2, 0)

    @property
    def negF(self):
        return self.negT.transpose(1, 2, 0)

    def softmax_into_q(self, xT):
        q, mx, s = self.qT, self._max, self._sum
        np.maximum.reduce(xT, axis=0, out=mx)
        np.subtract(xT, mx, out=q)
        np.exp(q, out=q)
        np.add.reduce(q, axis=0, out=s)
        np.divide(1.0, s, out=s)
        q *= s
        rows, cols = self.clamped
        q[:, rows, cols] = 0.0
        q[0, rows, cols] = 1.0

    def step(self):
        m, L = self.m, self.L
        if self.scores.kind == "cpd":
            np.matmul(self.qT.reshape(L, m * m).T, self.B, out=self.qB)
            qB = self.qB.reshape(m, m, -1)
            for f, lo, hi in self.slices:
                P = _pool_k(f.relation, qB[:, :, lo:hi], f.K)
                _spread(f.relation, f.I, f.J, P, out=self.U[:, :, lo:hi])
            np.matmul(self.A, self.U.reshape(m * m, -1).T, out=self.negT.reshape(L, m * m))
            self.negT += self.arcT
        else:
            q = np.ascontiguousarray(self.q)
            total = self.arcT.copy()
            for f in self.factors:
                total += dense_update(f, q).transpose(2, 0, 1)
            np.copyto(self.negT, total)
        self.softmax_into_q(self.negT)

    def run(self, iters):
        self.softmax_into_q(self.arcT)
        for _ in range(iters):
            self.step()
        return self


def infer(scores: ScoreSet, iters: int) -> Posterior:
    """q^iters, starting from the softmax of the arc scores."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    return Posterior(np.ascontiguousarray(_Runner(scores).run(iters).q))


def final_field(scores: ScoreSet, iters: int) -> NegEnergyField:
    """The aggregated scores of the last iteration (the arc scores when iters == 0)."""
    if iters == 0:
        return NegEnergyField(scores.arc)
    return NegEnergyField(np.ascontiguousarray(_Runner(scores).run(iters).negF))


def decode(q) -> LabeledGraph:
    """Per-cell argmax; NULL means no arc, ties go to the lowest label index."""
    q = _array(q)
    tags = np.argmax(q, axis=-1)
    tags[clamp_mask(q.shape[0] - 1)] = 0
    return LabeledGraph(tags, q.shape[-1])
