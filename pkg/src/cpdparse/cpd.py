"""Rank-R factored second-order scores and their dense materialization.

A relation's order-5 score tensor ``s[i, j, k, a, b]`` over (token, token,
token, label, label) is stored as five factor matrices, and the full tensor
is only ever built for checking and benchmarking::

    s[i, j, k, a, b] = sum_r I[i, r] J[j, r] K[k, r] A[a, r] B[b, r]
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, ShapeError

RELATIONS = ("sib", "cop", "grd")
DEFAULT_DENSE_BUDGET = 2**28
ROLES = ("I", "J", "K", "A", "B")


def _check_relation(relation):
    if relation not in RELATIONS:
        raise ValueError(f"relation must be one of {RELATIONS}, got {relation!r}")


@dataclass(frozen=True, eq=False)
class CpdFactors:
    relation: str
    I: np.ndarray
    J: np.ndarray
    K: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        _check_relation(self.relation)
        mats = {}
        for role in ROLES:
            m = np.array(getattr(self, role), dtype=np.float64)
            if m.ndim != 2:
                raise ShapeError(f"factor {role} must be a matrix")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"factor {role} has non-finite entries")
            m.setflags(write=False)
            mats[role] = m
            object.__setattr__(self, role, m)
        ranks = {m.shape[1] for m in mats.values()}
        if len(ranks) != 1:
            raise ShapeError(f"factor ranks disagree: {sorted(ranks)}")
        if not (mats["I"].shape[0] == mats["J"].shape[0] == mats["K"].shape[0]):
            raise ShapeError("token factors I, J, K must have the same number of rows")
        if mats["A"].shape[0] != mats["B"].shape[0]:
            raise ShapeError("label factors A, B must have the same number of rows")

    @property
    def size(self) -> int:
        """n + 1, the number of token positions including the root."""
        return self.I.shape[0]

    @property
    def num_labels(self) -> int:
        return self.A.shape[0]

    @property
    def rank(self) -> int:
        return self.I.shape[1]

    def matrices(self):
        return tuple(getattr(self, role) for role in ROLES)

    def concat(self, other: "CpdFactors") -> "CpdFactors":
        """Rank-wise concatenation; materializes to the sum of both tensors."""
        if other.relation != self.relation:
            raise ValueError("cannot concatenate factors of different relations")
        return CpdFactors(self.relation, *(np.concatenate([a, b], axis=1)
                                           for a, b in zip(self.matrices(), other.matrices())))

    def scaled(self, c: float) -> "CpdFactors":
        return CpdFactors(self.relation, self.I * c, self.J, self.K, self.A, self.B)

    def to_bytes(self) -> bytes:
        """Little-endian blob: int64 relation tag, n, L, R, then I, J, K, A, B as float64."""
        n = self.size - 1
        header = struct.pack("<4q", RELATIONS.index(self.relation), n, self.num_labels, self.rank)
        return header + b"".join(m.astype("<f8").tobytes(order="C") for m in self.matrices())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CpdFactors":
        if len(blob) < 32:
            raise ValueError("truncated factor blob")
        tag, n, L, R = struct.unpack_from("<4q", blob, 0)
        if not 0 <= tag < len(RELATIONS) or n < 0 or L < 1 or R < 1:
            raise ValueError("corrupt factor blob header")
        shapes = [(n + 1, R)] * 3 + [(L, R)] * 2
        expected = 32 + 8 * sum(a * b for a, b in shapes)
        if len(blob) != expected:
            raise ValueError(f"factor blob has {len(blob)} bytes, expected {expected}")
        offset, mats = 32, []
        for shape in shapes:
            count = shape[0] * shape[1]
            mats.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape))
            offset += 8 * count
        return cls(RELATIONS[tag], *mats)


@dataclass(frozen=True, eq=False)
class DenseFactor:
    relation: str
    s: np.ndarray

    def __post_init__(self):
        _check_relation(self.relation)
        s = np.asarray(self.s, dtype=np.float64)
        if s.ndim != 5 or not (s.shape[0] == s.shape[1] == s.shape[2]) or s.shape[3] != s.shape[4]:
            raise ShapeError(f"dense factor must be (n+1)^3 x L^2, got {s.shape}")
        object.__setattr__(self, "s", s)

    @property
    def size(self) -> int:
        return self.s.shape[0]

    @property
    def num_labels(self) -> int:
        return self.s.shape[3]


def dense_elements(size: int, num_labels: int) -> int:
    return size**3 * num_labels**2


def check_budget(size: int, num_labels: int, budget: int = DEFAULT_DENSE_BUDGET) -> None:
    elements = dense_elements(size, num_labels)
    if elements > budget:
        raise BudgetExceededError(
            f"dense tensor of {elements} elements ((n+1)={size}, L={num_labels}) exceeds budget {budget}"
        )


def materialize(f: CpdFactors, budget: int = DEFAULT_DENSE_BUDGET) -> DenseFactor:
    """Build the order-5 tensor from its factors, refusing above ``budget`` elements."""
    m, L, R = f.size, f.num_labels, f.rank
    check_budget(m, L, budget)
    left = (f.I[:, None, :] * f.J[None, :, :]).reshape(m * m, R)
    right = (f.K[:, None, None, :] * f.A[None, :, None, :] * f.B[None, None, :, :]).reshape(m * L * L, R)
    s = (left @ right.T).reshape(m, m, m, L, L)
    return DenseFactor(f.relation, s)


def random_factors(n: int, L: int, R: int, scale: float = 1.0, seed=None,
                   relation: str = "sib") -> CpdFactors:
    """Factors with i.i.d. uniform(-scale, scale) entries, reproducible from ``seed``."""
    if n < 0 or L < 1 or R < 1 or scale < 0:
        raise ValueError("need n >= 0, L >= 1, R >= 1, scale >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shapes = [(n + 1, R)] * 3 + [(L, R)] * 2
    return CpdFactors(relation, *(rng.uniform(-scale, scale, size=shape) for shape in shapes))
