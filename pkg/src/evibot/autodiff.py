"""Dense float64 tensors with a reverse-mode differentiation tape.

Every `Tensor` doubles as a tape node: it remembers the operation that
produced it, the tensors it was produced from, and (after `backward`)
the gradient of the scalar root with respect to itself.  The tape is the
implicit graph formed by these parent links; it is acyclic by
construction because an op can only consume tensors that already exist.

All arithmetic is 64-bit: the finite-difference checks used throughout
the test-suite target a 1e-4 relative tolerance that single precision
cannot reliably meet.  Gradients propagate only through branches that
contain a differentiable leaf (`requires_grad=True`, the default for
user-created tensors); large constants such as adjacency operators are
created with `requires_grad=False` so no gradient buffers are allocated
for them.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import ContractError, DomainError, NumericError, ShapeError

_KL_EPS = 1e-12


class Tensor:
    """A dense float64 array recorded on the differentiation tape."""

    __slots__ = ("data", "grad", "op", "parents", "_vjps", "requires_grad")

    def __init__(
        self,
        data,
        *,
        requires_grad: bool = True,
        op: str = "leaf",
        parents: tuple["Tensor", ...] = (),
        vjps: tuple[Callable[[np.ndarray], np.ndarray] | None, ...] = (),
    ):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.grad: np.ndarray | None = None
        self.op = op
        self.parents = parents
        self._vjps = vjps
        if parents:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the stored values."""
        return self.data.reshape(-1)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> np.ndarray:
        """Copy of the values, disconnected from the tape."""
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.data.shape})"

    # Operator sugar; scalars and arrays are wrapped as constant tensors.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data) -> Tensor:
    """A tensor that never receives gradients (masks, adjacency, labels)."""
    return Tensor(data, requires_grad=False)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad=False)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by op '{op}'")
    return arr


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data
    return Tensor(
        out,
        op="add",
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(g, b.data.shape),
        ),
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data
    return Tensor(
        out,
        op="sub",
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(-g, b.data.shape),
        ),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor(-a.data, op="neg", parents=(a,), vjps=(lambda g: -g,))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data
    return Tensor(
        out,
        op="mul",
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if np.any(b.data == 0.0):
        raise DomainError("division by zero")
    out = a.data / b.data
    return Tensor(
        out,
        op="div",
        parents=(a, b),
        vjps=(
            lambda g: _unbroadcast(g / b.data, a.data.shape),
            lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes do not conform: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data
    return Tensor(
        out,
        op="matmul",
        parents=(a, b),
        vjps=(lambda g: g @ b.data.T, lambda g: a.data.T @ g),
    )


def sparse_matmul(a, x) -> Tensor:
    """Multiply a constant scipy sparse matrix by a dense 2-D tensor.

    The sparse operand is structural (e.g. a neighbor-aggregation
    operator) and never receives gradients.
    """
    x = _as_tensor(x)
    if x.data.ndim != 2 or a.shape[1] != x.data.shape[0]:
        raise ShapeError(f"sparse_matmul shapes do not conform: {a.shape} @ {x.data.shape}")
    a_t = a.T.tocsr()
    return Tensor(
        np.asarray(a @ x.data),
        op="sparse_matmul",
        parents=(x,),
        vjps=(lambda g: np.asarray(a_t @ g),),
    )


def linear(x, weight, bias) -> Tensor:
    """Affine map: rows of x times weight, plus bias (y = xW + b)."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(
            f"linear: input shape {x.data.shape} does not conform to weight shape {weight.data.shape}"
        )
    if bias.data.shape != (weight.data.shape[1],):
        raise ShapeError(
            f"linear: bias shape {bias.data.shape} does not match output width {(weight.data.shape[1],)}"
        )
    out = x.data @ weight.data + bias.data
    return Tensor(
        out,
        op="linear",
        parents=(x, weight, bias),
        vjps=(
            lambda g: g @ weight.data.T,
            lambda g: x.data.T @ g,
            lambda g: g.sum(axis=0),
        ),
    )


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along columns."""
    parts = [_as_tensor(p) for p in parts]
    n_rows = {p.data.shape[0] for p in parts}
    if len(n_rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ: {[p.data.shape for p in parts]}")
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)
    out = np.concatenate([p.data for p in parts], axis=1)

    def make_vjp(k):
        return lambda g: g[:, offsets[k] : offsets[k + 1]]

    return Tensor(
        out,
        op="concat_cols",
        parents=tuple(parts),
        vjps=tuple(make_vjp(k) for k in range(len(parts))),
    )


# ---------------------------------------------------------------------------
# reductions


def tensor_sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g_exp, a.data.shape).copy()

    return Tensor(out, op="sum", parents=(a,), vjps=(vjp,))


def tensor_mean(a) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size
    out = a.data.mean()
    return Tensor(
        out,
        op="mean",
        parents=(a,),
        vjps=(lambda g: np.broadcast_to(g / n, a.data.shape).copy(),),
    )


def masked_mean(a: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of the rows of a flat tensor selected by a boolean mask."""
    a = _as_tensor(a)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.shape[0] != a.data.reshape(-1).shape[0]:
        raise ShapeError(f"masked_mean: mask length {mask.shape} vs tensor shape {a.data.shape}")
    count = int(mask.sum())
    if count == 0:
        raise ContractError("masked_mean over an empty selection")
    weights = constant(mask.astype(np.float64).reshape(a.data.shape) / count)
    return tensor_sum(mul(a, weights))


# ---------------------------------------------------------------------------
# nonlinearities


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = _check_finite(np.exp(a.data), "exp")
    return Tensor(out, op="exp", parents=(a,), vjps=(lambda g: g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log of a non-positive value")
    out = np.log(a.data)
    return Tensor(out, op="log", parents=(a,), vjps=(lambda g: g / a.data,))


def softplus(a) -> Tensor:
    a = _as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    sig = special.expit(a.data)  # stable sigmoid, no overflow for large |a|
    return Tensor(out, op="softplus", parents=(a,), vjps=(lambda g: g * sig,))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = _as_tensor(a)
    pos = a.data > 0
    out = np.where(pos, a.data, slope * a.data)
    local = np.where(pos, 1.0, slope)
    return Tensor(out, op="leaky_relu", parents=(a,), vjps=(lambda g: g * local,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, op="tanh", parents=(a,), vjps=(lambda g: g * (1.0 - out * out),))


def softmax_rows(a) -> Tensor:
    """Row-wise softmax of a 2-D tensor; rows sum to one."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D tensor, got shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return out * (g - inner)

    return Tensor(out, op="softmax_rows", parents=(a,), vjps=(vjp,))


def minimum_const(a, cap: float) -> Tensor:
    """Elementwise min(a, cap); gradient is zero where the cap binds."""
    a = _as_tensor(a)
    keep = a.data <= cap
    out = np.where(keep, a.data, cap)
    return Tensor(out, op="minimum_const", parents=(a,), vjps=(lambda g: g * keep,))


_ACTIVATIONS = ("leaky_relu", "relu", "softplus", "exp", "log", "softmax_rows", "tanh")


def activation(kind: str, x, slope: float = 0.01) -> Tensor:
    """Dispatch an activation by name; `relu` is leaky_relu with slope 0."""
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "relu":
        return leaky_relu(x, 0.0)
    if kind == "softplus":
        return softplus(x)
    if kind == "exp":
        return exp(x)
    if kind == "log":
        return log(x)
    if kind == "softmax_rows":
        return softmax_rows(x)
    if kind == "tanh":
        return tanh(x)
    raise ContractError(f"unknown activation '{kind}'; expected one of {_ACTIVATIONS}")


# ---------------------------------------------------------------------------
# classification losses


def cross_entropy_rows(logits: Tensor, onehot: np.ndarray) -> Tensor:
    """Per-row cross-entropy of a 2-D logit tensor against one-hot targets."""
    logits = _as_tensor(logits)
    onehot = np.asarray(onehot, dtype=np.float64)
    if logits.data.shape != onehot.shape:
        raise ShapeError(
            f"cross_entropy_rows: logits shape {logits.data.shape} vs targets shape {onehot.shape}"
        )
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + logits.data.max(
        axis=1, keepdims=True
    )
    out = (lse - (onehot * logits.data).sum(axis=1, keepdims=True)).reshape(-1)
    probs = np.exp(logits.data - lse)

    def vjp(g):
        return (probs - onehot) * g.reshape(-1, 1)

    return Tensor(out, op="cross_entropy_rows", parents=(logits,), vjps=(vjp,))


def kl_div_rows(p: Tensor, q: Tensor, eps: float = _KL_EPS) -> Tensor:
    """Per-row KL divergence sum_k p_k log(p_k / q_k) for row-stochastic inputs.

    Zero entries of p contribute zero (0*log 0 convention); q is clamped
    below at `eps` before the division.
    """
    p, q = _as_tensor(p), _as_tensor(q)
    if p.data.shape != q.data.shape:
        raise ShapeError(f"kl_div_rows: shapes differ: {p.data.shape} vs {q.data.shape}")
    qc = np.maximum(q.data, eps)
    pos = p.data > 0.0
    ratio_log = np.where(pos, np.log(np.where(pos, p.data, 1.0)) - np.log(qc), 0.0)
    out = (np.where(pos, p.data, 0.0) * ratio_log).sum(axis=1)

    def vjp_p(g):
        return np.where(pos, ratio_log + 1.0, 0.0) * g.reshape(-1, 1)

    def vjp_q(g):
        local = np.where(q.data > eps, -p.data / qc, 0.0)
        return local * g.reshape(-1, 1)

    return Tensor(out, op="kl_div_rows", parents=(p, q), vjps=(vjp_p, vjp_q))


def _validate_stochastic(arr: np.ndarray, name: str) -> None:
    from .errors import ValidationError

    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if np.any(arr < 0.0):
        row = int(np.argwhere(arr < 0.0)[0][0])
        raise ValidationError(f"{name} has a negative entry in row {row}")
    sums = arr.sum(axis=1)
    bad = np.abs(sums - 1.0) > 1e-9
    if np.any(bad):
        row = int(np.argmax(bad))
        raise ValidationError(f"{name} row {row} sums to {sums[row]!r}, expected 1")


def categorical_kl(p, q) -> Tensor:
    """Mean over rows of KL(p_row || q_row); validates row-stochasticity."""
    p, q = _as_tensor(p), _as_tensor(q)
    _validate_stochastic(p.data, "p")
    _validate_stochastic(q.data, "q")
    return tensor_mean(kl_div_rows(p, q))


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return mul(x, constant(mask))


# ---------------------------------------------------------------------------
# reverse pass


def backward(root: Tensor) -> None:
    """Populate `.grad` on every tensor that influences the scalar `root`.

    Gradients accumulate across fan-out; branches with no differentiable
    leaf are skipped.
    """
    if root.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.data.shape}")

    # Iterative topological order (post-order DFS) over grad-requiring nodes.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node.grad is None:
            continue
        for parent, vjp in zip(node.parents, node._vjps):
            if not parent.requires_grad or vjp is None:
                continue
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += contrib


def finite_diff_check(
    f: Callable[[Tensor], Tensor], x0, h: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    The relative error at each coordinate is
    |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    """
    if not 1e-7 <= h <= 1e-3:
        raise ContractError(f"step h must lie in [1e-7, 1e-3], got {h}")
    x = Tensor(np.asarray(x0, dtype=np.float64))
    out = f(x)
    if out.data.size != 1:
        raise ContractError("finite_diff_check needs a scalar-valued function")
    backward(out)
    analytic = (x.grad if x.grad is not None else np.zeros_like(x.data)).reshape(-1)

    base = x.data.reshape(-1)
    worst = 0.0
    for i in range(base.size):
        for sign, store in ((+1.0, 0), (-1.0, 1)):
            perturbed = base.copy()
            perturbed[i] += sign * h
            val = f(constant(perturbed.reshape(x.data.shape))).item()
            if not np.isfinite(val):
                raise DomainError(f"function not finite near x0 (coordinate {i})")
            if store == 0:
                f_plus = val
            else:
                f_minus = val
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = abs(analytic[i] - numeric) / (abs(analytic[i]) + abs(numeric) + 1e-12)
        worst = max(worst, err)
    return worst


class Adam:
    """Adaptive-moment gradient descent over a list of parameter tensors."""

    def __init__(self, params: Sequence[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ContractError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self._m[i] = self.beta1 * self._m[i] + (1 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1 - self.beta2) * (g * g)
            m_hat = self._m[i] / (1 - self.beta1**self.t)
            v_hat = self._v[i] / (1 - self.beta2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
