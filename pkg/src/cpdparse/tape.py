"""A small reverse-mode tape over numpy arrays.

Every primitive records one :class:`Node` holding its output value and a
closure mapping the output gradient to gradients of its parents. The graph
of one sentence is small and fixed, so each primitive carries a hand-written
backward rule instead of relying on a general autodiff engine.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cpd import CpdFactors
from .errors import TrainingDivergenceError
from .mean_field import cpd_expand, cpd_pool, cpd_update_backward, softmax

LEAKY_SLOPE = 0.1


@dataclass(eq=False)
class Node:
    name: str
    value: np.ndarray
    parents: tuple = ()
    backward: Callable | None = None
    param: str | None = None


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


@dataclass(eq=False)
class Tape:
    """Records one forward pass; :meth:`backward` replays it in reverse."""

    nodes: list = field(default_factory=list)

    def _record(self, name, value, parents=(), backward=None, param=None):
        node = Node(name, value, tuple(parents), backward, param)
        self.nodes.append(node)
        return node

    def param(self, name, value):
        return self._record(name, value, param=name)

    def const(self, value, name="const"):
        return self._record(name, np.asarray(value, dtype=np.float64))

    # -- elementwise --------------------------------------------------------

    def add(self, a, b, name="add"):
        def back(g):
            return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)
        return self._record(name, a.value + b.value, (a, b), back)

    def sum(self, nodes, name="sum"):
        nodes = list(nodes)
        value = nodes[0].value.copy()
        for n in nodes[1:]:
            value = value + n.value
        return self._record(name, value, nodes, lambda g: tuple(g for _ in nodes))

    def mul(self, a, b, name="mul"):
        def back(g):
            return (_unbroadcast(g * b.value, a.value.shape),
                    _unbroadcast(g * a.value, b.value.shape))
        return self._record(name, a.value * b.value, (a, b), back)

    def one_minus(self, a, name="one_minus"):
        return self._record(name, 1.0 - a.value, (a,), lambda g: (-g,))

    def scale(self, a, c, name="scale"):
        return self._record(name, a.value * c, (a,), lambda g: (g * c,))

    def sigmoid(self, a, name="sigmoid"):
        out = 1.0 / (1.0 + np.exp(-a.value))
        return self._record(name, out, (a,), lambda g: (g * out * (1.0 - out),))

    def leaky_relu(self, a, name="leaky_relu"):
        slope = np.where(a.value > 0, 1.0, LEAKY_SLOPE)
        node = self._record(name, a.value * slope, (a,), lambda g: (g * slope,))
        node.active = a.value > 0
        return node

    def activation_pattern(self) -> np.ndarray:
        """Concatenated sign pattern of every LeakyReLU input on the tape."""
        parts = [n.active.ravel() for n in self.nodes if hasattr(n, "active")]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=bool)

    # -- linear maps --------------------------------------------------------

    def gather(self, table, index, name="gather"):
        index = np.asarray(index)

        def back(g):
            grad = np.zeros_like(table.value)
            np.add.at(grad, index, g)
            return (grad,)
        return self._record(name, table.value[index], (table,), back)

    def left_matmul(self, M, x, name="left_matmul"):
        """Constant matrix times node: M @ x."""
        return self._record(name, M @ x.value, (x,), lambda g: (M.T @ g,))

    def matmul(self, x, W, name="matmul"):
        d, k = W.value.shape

        def back(g):
            return g @ W.value.T, x.value.reshape(-1, d).T @ g.reshape(-1, k)
        return self._record(name, x.value @ W.value, (x, W), back)

    def dense(self, x, W, b, name="dense"):
        return self.add(self.matmul(x, W, name + ".matmul"), b, name)

    def affine1(self, e, W, name="affine1"):
        """[e; 1] @ W with W of shape (k + 1, R)."""
        Wv = W.value

        def back(g):
            dW = np.vstack([e.value.T @ g, g.sum(axis=0, keepdims=True)])
            return g @ Wv[:-1].T, dW
        return self._record(name, e.value @ Wv[:-1] + Wv[-1], (e, W), back)

    def null_broadcast(self, v, num_labels, name="null_broadcast"):
        """Rows of an (L, R) label factor: row 0 zero, every other row equal to v (1, R)."""
        out = np.zeros((num_labels, v.value.shape[1]))
        out[1:] = v.value

        def back(g):
            return (g[1:].sum(axis=0, keepdims=True),)
        return self._record(name, out, (v,), back)

    def biaffine(self, head, W, child, name="biaffine"):
        """s[i, j, l] = [head_i; 1]^T W[l] [child_j; 1]."""
        h1 = np.hstack([head.value, np.ones((head.value.shape[0], 1))])
        c1 = np.hstack([child.value, np.ones((child.value.shape[0], 1))])
        X = np.matmul(h1[None], W.value)            # (L, m, k+1)
        out = np.matmul(X, c1.T).transpose(1, 2, 0)  # (m, m, L)

        def back(g):
            gT = np.ascontiguousarray(g.transpose(2, 0, 1))
            dX = np.matmul(gT, c1)
            dc1 = np.einsum("lij,lip->jp", gT, X)
            dW = np.matmul(h1.T[None], dX)
            dh1 = np.matmul(dX, W.value.transpose(0, 2, 1)).sum(axis=0)
            return dh1[:, :-1], dW, dc1[:, :-1]
        return self._record(name, out, (head, W, child), back)

    # -- inference primitives -------------------------------------------------

    def cpd_message(self, relation, roles, q, name=None):
        """Second-order message of one relation; ``roles`` are the I, J, K, A, B nodes."""
        f = CpdFactors(relation, *(r.value for r in roles))
        P, qB = cpd_pool(f, q.value)
        out = cpd_expand(f, P)

        def back(g):
            dq, d = cpd_update_backward(f, q.value, g, P, qB)
            return (d["I"], d["J"], d["K"], d["A"], d["B"], dq)
        return self._record(name or f"{relation}.message", out, (*roles, q), back)

    def softmax_clamped(self, negF, mask, name="softmax"):
        """Row softmax over labels with masked cells replaced by NULL one-hot."""
        q = softmax(negF.value.copy())
        q[mask] = 0.0
        q[mask, 0] = 1.0
        keep = ~mask[..., None]

        def back(g):
            return ((g - np.sum(g * q, axis=-1, keepdims=True)) * q * keep,)
        return self._record(name, q, (negF,), back)

    def cross_entropy(self, negF, tags, mask, name="loss"):
        """Summed label cross-entropy over unmasked cells."""
        x = negF.value
        z = x - x.max(axis=-1, keepdims=True)
        logZ = np.log(np.exp(z).sum(axis=-1))
        picked = np.take_along_axis(z, tags[..., None], axis=-1)[..., 0]
        keep = ~mask
        per_cell = (logZ - picked) * keep
        p = softmax(x.copy())

        def back(g):
            grad = p.copy()
            np.put_along_axis(grad, tags[..., None], np.take_along_axis(grad, tags[..., None], -1) - 1.0, -1)
            return (grad * keep[..., None] * g,)
        return self._record(name, np.array(per_cell.sum()), (negF,), back)

    # -- reverse pass ---------------------------------------------------------

    def backward(self, root: Node, check_finite: bool = True) -> dict:
        """Gradients of ``root`` for every parameter leaf, keyed by parameter name."""
        grads = {id(root): np.ones_like(root.value)}
        out = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.param is not None:
                out[node.param] = out[node.param] + g if node.param in out else g
                continue
            if node.backward is None:
                continue
            parent_grads = node.backward(g)
            for parent, pg in zip(node.parents, parent_grads):
                if check_finite and not np.all(np.isfinite(pg)):
                    raise TrainingDivergenceError("non-finite gradient", node=node.name)
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
        return out
