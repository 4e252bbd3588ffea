"""Reverse-mode gradients for the small computation graphs the models build.

A Tape records primitive operations in forward order; backward replays them
in exact reverse order, accumulating gradients additively into every tensor
that (transitively) depends on a trainable parameter. All storage is 64-bit
numpy; the first-layer feature product additionally accepts a constant
scipy CSR matrix so sparse bag-of-words inputs stay cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import NormalizedAdjacency


class NumericError(ArithmeticError):
    """A primitive produced NaN or Inf; the message names the primitive."""


def _checked(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by primitive '{name}'")
    return arr


class Tensor:
    """Value node on a tape. grad is allocated lazily on first accumulation."""

    __slots__ = ("data", "grad", "requires")

    def __init__(self, data, requires: bool = False):
        self.data = data if sp.issparse(data) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires = requires

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros(self.data.shape)
        self.grad += g


class Tape:
    """Ordered record of primitives; backward walks it strictly in reverse."""

    def __init__(self):
        self._ops: list[tuple[str, callable]] = []

    def _push(self, name: str, backward) -> None:
        self._ops.append((name, backward))

    def backward(self, loss: Tensor) -> None:
        if loss.data.shape != ():
            raise ValueError("backward expects a scalar loss")
        loss.accumulate(np.ones(()))
        for _name, bwd in reversed(self._ops):
            bwd()

    def gradients(self, loss: Tensor, params: list[Tensor]) -> list[np.ndarray]:
        """Return d(loss)/d(p) for each parameter, in order."""
        self.backward(loss)
        out = []
        for p in params:
            g = p.grad if p.grad is not None else np.zeros(p.data.shape)
            out.append(_checked("backward", g))
        return out

    # -- primitives --------------------------------------------------------

    def param(self, data: np.ndarray) -> Tensor:
        return Tensor(data, requires=True)

    def const(self, data) -> Tensor:
        return Tensor(data, requires=False)

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(_checked("matmul", a.data @ b.data), a.requires or b.requires)
        if sp.issparse(a.data) and a.requires:
            raise ValueError("sparse matmul operands must be constants")

        def backward():
            if out.grad is None:
                return
            if a.requires:
                a.accumulate(out.grad @ b.data.T)
            if b.requires:
                g = a.data.T @ out.grad
                b.accumulate(np.asarray(g))

        if out.requires:
            self._push("matmul", backward)
        return out

    def spmm(self, adj: NormalizedAdjacency, x: Tensor) -> Tensor:
        """Aggregate rows of x over the normalized adjacency operator."""
        if adj.num_vertices != x.data.shape[0]:
            raise ValueError(
                f"adjacency has {adj.num_vertices} vertices but input has {x.data.shape[0]} rows"
            )
        mat = adj.to_scipy()
        out = Tensor(_checked("spmm", np.asarray(mat @ x.data)), x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            # The operator is symmetric, so the adjoint is the same product.
            x.accumulate(np.asarray(mat @ out.grad))

        if out.requires:
            self._push("spmm", backward)
        return out

    def relu(self, x: Tensor) -> Tensor:
        out = Tensor(np.maximum(x.data, 0.0), x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            x.accumulate(out.grad * (x.data > 0.0))

        if out.requires:
            self._push("relu", backward)
        return out

    def dropout(self, x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
        """Inverted dropout; caller only invokes this during training passes."""
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")
        if p == 0.0:
            return x
        mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
        out = Tensor(x.data * mask, x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            x.accumulate(out.grad * mask)

        if out.requires:
            self._push("dropout", backward)
        return out

    def row_softmax(self, x: Tensor) -> Tensor:
        shifted = x.data - x.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = _checked("row_softmax", e / e.sum(axis=1, keepdims=True))
        out = Tensor(probs, x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            dot = (out.grad * probs).sum(axis=1, keepdims=True)
            x.accumulate(probs * (out.grad - dot))

        if out.requires:
            self._push("row_softmax", backward)
        return out

    def cross_entropy(self, scores: Tensor, labels: np.ndarray, rows: np.ndarray) -> Tensor:
        """Mean negative log softmax(scores)[v, labels[v]] over the given rows."""
        rows = np.asarray(rows, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if len(rows) == 0:
            raise ValueError("cross_entropy needs at least one row")
        sub = scores.data[rows]
        shifted = sub - sub.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        logp = shifted[np.arange(len(rows)), labels] - logz
        out = Tensor(_checked("cross_entropy", np.asarray(-logp.mean())), scores.requires)

        def backward():
            if out.grad is None or not scores.requires:
                return
            probs = np.exp(shifted - logz[:, None])
            probs[np.arange(len(rows)), labels] -= 1.0
            g = np.zeros(scores.data.shape)
            np.add.at(g, rows, probs * (float(out.grad) / len(rows)))
            scores.accumulate(g)

        if out.requires:
            self._push("cross_entropy", backward)
        return out

    def pairwise_distance(self, a: Tensor, b: Tensor) -> Tensor:
        """Euclidean distances D[i, j] = ||a_i - b_j||."""
        diff = a.data[:, None, :] - b.data[None, :, :]
        dist = _checked("euclidean_distance", np.sqrt((diff**2).sum(axis=2)))
        out = Tensor(dist, a.requires or b.requires)

        def backward():
            if out.grad is None:
                return
            # Subgradient 0 where the distance vanishes.
            safe = np.where(dist > 0.0, dist, 1.0)
            scaled = (out.grad / safe)[:, :, None] * diff * (dist > 0.0)[:, :, None]
            if a.requires:
                a.accumulate(scaled.sum(axis=1))
            if b.requires:
                b.accumulate(-scaled.sum(axis=0))

        if out.requires:
            self._push("euclidean_distance", backward)
        return out

    def exp(self, x: Tensor) -> Tensor:
        with np.errstate(over="ignore"):
            out = Tensor(_checked("exp", np.exp(x.data)), x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            x.accumulate(out.grad * out.data)

        if out.requires:
            self._push("exp", backward)
        return out

    def neg(self, x: Tensor) -> Tensor:
        out = Tensor(-x.data, x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            x.accumulate(-out.grad)

        if out.requires:
            self._push("neg", backward)
        return out

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise sum; b may be a (1, d) row broadcast over a's rows."""
        out = Tensor(_checked("add", a.data + b.data), a.requires or b.requires)

        def backward():
            if out.grad is None:
                return
            if a.requires:
                a.accumulate(out.grad)
            if b.requires:
                g = out.grad
                if b.data.shape != out.data.shape:
                    g = g.sum(axis=0, keepdims=True).reshape(b.data.shape)
                b.accumulate(g)

        if out.requires:
            self._push("add", backward)
        return out

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        return self.add(a, self.neg(b))

    def scale(self, x: Tensor, factor: float) -> Tensor:
        out = Tensor(x.data * factor, x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            x.accumulate(out.grad * factor)

        if out.requires:
            self._push("scale", backward)
        return out

    def add_scalar(self, x: Tensor, value: float) -> Tensor:
        out = Tensor(x.data + value, x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            x.accumulate(out.grad)

        if out.requires:
            self._push("add_scalar", backward)
        return out

    def add_const(self, x: Tensor, arr: np.ndarray) -> Tensor:
        return self.add_scalar(x, 0.0) if arr is None else self.add(x, self.const(arr))

    def weighted_sum(self, x: Tensor, weights: np.ndarray) -> Tensor:
        """Rows of `weights` (k, n) combine the n rows of x into k vectors."""
        return self.matmul(self.const(weights), x)

    def mean(self, x: Tensor) -> Tensor:
        size = x.data.size
        out = Tensor(np.asarray(x.data.mean()), x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            x.accumulate(np.full(x.data.shape, float(out.grad) / size))

        if out.requires:
            self._push("mean", backward)
        return out

    def mean_rows(self, x: Tensor) -> Tensor:
        """(k, d) -> (1, d) unweighted mean over rows."""
        k = x.data.shape[0]
        return self.weighted_sum(x, np.full((1, k), 1.0 / k))

    def max_over_rows(self, x: Tensor) -> Tensor:
        """Per-row maximum (k,) with subgradient routed to the first argmax."""
        idx = np.argmax(x.data, axis=1)
        out = Tensor(x.data[np.arange(x.data.shape[0]), idx], x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            g = np.zeros(x.data.shape)
            g[np.arange(x.data.shape[0]), idx] = out.grad
            x.accumulate(g)

        if out.requires:
            self._push("max_over_rows", backward)
        return out

    def row_normalize(self, x: Tensor) -> Tensor:
        """Rows scaled to unit norm; zero rows stay zero (subgradient 0)."""
        norms = np.linalg.norm(x.data, axis=1, keepdims=True)
        safe = np.where(norms > 0.0, norms, 1.0)
        unit = x.data / safe
        out = Tensor(unit, x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            dot = (out.grad * unit).sum(axis=1, keepdims=True)
            g = (out.grad - unit * dot) / safe
            g[norms[:, 0] == 0.0] = 0.0
            x.accumulate(g)

        if out.requires:
            self._push("row_normalize", backward)
        return out

    def gram(self, x: Tensor) -> Tensor:
        """x @ x.T — pairwise cosines when rows are unit vectors."""
        out = Tensor(_checked("cosine", x.data @ x.data.T), x.requires)

        def backward():
            if out.grad is None or not x.requires:
                return
            x.accumulate((out.grad + out.grad.T) @ x.data)

        if out.requires:
            self._push("cosine", backward)
        return out


@dataclass
class AdamState:
    """First/second moment buffers for one parameter matrix."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, data: np.ndarray) -> "AdamState":
        return cls(m=np.zeros(data.shape), v=np.zeros(data.shape))


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected Adam update; mutates state, returns new params."""
    if param.shape != grad.shape:
        raise ValueError("parameter/gradient shape mismatch")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad**2
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps)
