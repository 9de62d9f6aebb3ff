"""Dense float64 tensor kernels with reverse-mode differentiation.

Every value is a 2-D float64 array wrapped in a :class:`Tensor` graph node;
vectors are 1xN rows. Operations record a backward closure, and
:func:`backward` walks the graph in reverse topological order accumulating
gradients, so fan-out (a tensor consumed by several ops) is handled by
summation. :func:`finite_diff_check` verifies any scalar loss against
central finite differences.

All kernels are deterministic and never mutate their inputs, so forward
passes are safe to run from multiple threads; each graph is private to the
call that built it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import (
    ConfigError,
    DeterminismError,
    InsufficientDataError,
    DegenerateInputError,
    ShapeError,
)

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Node in a reverse-mode differentiation graph over 2-D float64 arrays."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_grad_fn")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _grad_fn: Callable[[np.ndarray], None] | None = None,
    ):
        arr = np.atleast_2d(np.asarray(data, dtype=np.float64))
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._grad_fn = _grad_fn

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"


def param(data, name: str) -> Tensor:
    """Trainable leaf tensor identified by ``name``."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def const(data) -> Tensor:
    """Frozen leaf tensor; never receives a gradient."""
    return Tensor(data, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else const(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=needs,
        _parents=parents if needs else (),
        _grad_fn=grad_fn if needs else None,
    )


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g)

    return _node(a.data + b.data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -g)

    return _node(a.data - b.data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return _node(a.data * b.data, (a, b), grad_fn)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"div: {a.shape} vs {b.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g / b.data)
        if b.requires_grad:
            _accum(b, -g * a.data / (b.data * b.data))

    return _node(a.data / b.data, (a, b), grad_fn)


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g * s)

    return _node(a.data * s, (a,), grad_fn)


def add_scalar(a, s: float) -> Tensor:
    a = _as_tensor(a)

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g)

    return _node(a.data + float(s), (a,), grad_fn)


def add_row(m, row) -> Tensor:
    """Broadcast-add a 1xC row to every row of an RxC matrix."""
    m, row = _as_tensor(m), _as_tensor(row)
    if row.shape != (1, m.shape[1]):
        raise ShapeError(f"add_row: row {row.shape} vs matrix {m.shape}")

    def grad_fn(g):
        if m.requires_grad:
            _accum(m, g)
        if row.requires_grad:
            _accum(row, g.sum(axis=0, keepdims=True))

    return _node(m.data + row.data, (m, row), grad_fn)


def add_col(m, col) -> Tensor:
    """Broadcast-add an Rx1 column to every column of an RxC matrix."""
    m, col = _as_tensor(m), _as_tensor(col)
    if col.shape != (m.shape[0], 1):
        raise ShapeError(f"add_col: column {col.shape} vs matrix {m.shape}")

    def grad_fn(g):
        if m.requires_grad:
            _accum(m, g)
        if col.requires_grad:
            _accum(col, g.sum(axis=1, keepdims=True))

    return _node(m.data + col.data, (m, col), grad_fn)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _node(a.data @ b.data, (a, b), grad_fn)


def transpose(a) -> Tensor:
    a = _as_tensor(a)

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g.T)

    return _node(a.data.T.copy(), (a,), grad_fn)


def concat_rows(parts: Sequence) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows: empty input")
    cols = parts[0].shape[1]
    if any(p.shape[1] != cols for p in parts):
        raise ShapeError("concat_rows: column counts differ")
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def grad_fn(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _accum(p, g[lo:hi])

    return _node(np.concatenate([p.data for p in parts], axis=0), tuple(parts), grad_fn)


def pick(a, i: int, j: int) -> Tensor:
    a = _as_tensor(a)

    def grad_fn(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[i, j] = g[0, 0]
            _accum(a, full)

    return _node(np.array([[a.data[i, j]]]), (a,), grad_fn)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum_all(a) -> Tensor:
    a = _as_tensor(a)

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, np.full_like(a.data, g[0, 0]))

    return _node(np.array([[a.data.sum()]]), (a,), grad_fn)


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, np.full_like(a.data, g[0, 0] / n))

    return _node(np.array([[a.data.mean()]]), (a,), grad_fn)


def mean_rows(a) -> Tensor:
    """Column means: RxC -> 1xC."""
    a = _as_tensor(a)
    r = a.shape[0]

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, np.repeat(g / r, r, axis=0))

    return _node(a.data.mean(axis=0, keepdims=True), (a,), grad_fn)


def rowwise_dot(a, b) -> Tensor:
    """Per-row inner products: two RxC inputs -> Rx1."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"rowwise_dot: {a.shape} vs {b.shape}")

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return _node((a.data * b.data).sum(axis=1, keepdims=True), (a, b), grad_fn)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g * mask)

    return _node(np.where(mask, a.data, 0.0), (a,), grad_fn)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU; smooth everywhere, so finite differences apply."""
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))

    def grad_fn(g):
        if a.requires_grad:
            pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
            _accum(a, g * (cdf + x * pdf))

    return _node(x * cdf, (a,), grad_fn)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.data)

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, g / (2.0 * out))

    return _node(out, (a,), grad_fn)


# ---------------------------------------------------------------------------
# normalization and attention kernels
# ---------------------------------------------------------------------------


def softmax_rows(m, temperature: float = 1.0) -> Tensor:
    """Row-wise softmax of ``m / temperature`` with max-subtraction."""
    if temperature <= 0:
        raise ConfigError(f"softmax temperature must be positive, got {temperature}")
    m = _as_tensor(m)
    if not np.isfinite(m.data).all():
        raise DegenerateInputError("softmax input contains non-finite entries")
    x = m.data / temperature
    x = x - x.max(axis=1, keepdims=True)
    e = np.exp(x)
    y = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        if m.requires_grad:
            inner = (g * y).sum(axis=1, keepdims=True)
            _accum(m, (y * (g - inner)) / temperature)

    return _node(y, (m,), grad_fn)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalization with affine parameters (1xC each)."""
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be positive, got {eps}")
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[1]
    if gain.shape != (1, d) or bias.shape != (1, d):
        raise ShapeError(f"layer_norm: gain {gain.shape}, bias {bias.shape}, rows of width {d}")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)  # population variance
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def grad_fn(g):
        if gain.requires_grad:
            _accum(gain, (g * xhat).sum(axis=0, keepdims=True))
        if bias.requires_grad:
            _accum(bias, g.sum(axis=0, keepdims=True))
        if x.requires_grad:
            gh = g * gain.data
            m1 = gh.mean(axis=1, keepdims=True)
            m2 = (gh * xhat).mean(axis=1, keepdims=True)
            _accum(x, inv * (gh - m1 - xhat * m2))

    return _node(gain.data * xhat + bias.data, (x, gain, bias), grad_fn)


def normalize_rows(x, min_norm: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm; zero rows are an error, not a silent fix."""
    x = _as_tensor(x)
    norms = np.linalg.norm(x.data, axis=1, keepdims=True)
    if (norms < min_norm).any():
        bad = int(np.argmin(norms))
        raise DegenerateInputError(f"row {bad} has near-zero norm {norms[bad, 0]:.3e}")
    y = x.data / norms

    def grad_fn(g):
        if x.requires_grad:
            inner = (g * y).sum(axis=1, keepdims=True)
            _accum(x, (g - y * inner) / norms)

    return _node(y, (x,), grad_fn)


def unit_rows(a: np.ndarray, min_norm: float = 1e-12) -> np.ndarray:
    """Plain-array row normalization with the same zero-norm contract."""
    a = np.asarray(a, dtype=np.float64)
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    if (norms < min_norm).any():
        bad = int(np.argmin(norms))
        raise DegenerateInputError(f"row {bad} has near-zero norm {norms.reshape(-1)[bad]:.3e}")
    return a / norms


def attention(query, keys, values) -> Tensor:
    """Scaled dot-product attention; one or more query rows against a bank.

    weights = softmax(query @ keys.T / sqrt(d)), output = weights @ values.
    """
    query, keys, values = _as_tensor(query), _as_tensor(keys), _as_tensor(values)
    if keys.shape[0] == 0:
        raise InsufficientDataError("attention over an empty prototype bank")
    if keys.shape[0] != values.shape[0]:
        raise ShapeError(f"attention: {keys.shape[0]} keys vs {values.shape[0]} values")
    if query.shape[1] != keys.shape[1]:
        raise ShapeError(f"attention: query width {query.shape[1]} vs key width {keys.shape[1]}")
    d = keys.shape[1]
    scores = scale(matmul(query, transpose(keys)), 1.0 / math.sqrt(d))
    return matmul(softmax_rows(scores), values)


def cross_entropy_rows(logits, labels) -> Tensor:
    """Mean negative log softmax probability of each row's label; returns 1x1."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n, c = logits.shape
    if labels.shape[0] != n:
        raise ShapeError(f"cross_entropy: {n} rows vs {labels.shape[0]} labels")
    if (labels < 0).any() or (labels >= c).any():
        raise IndexError(f"label out of range [0, {c})")
    x = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(x).sum(axis=1, keepdims=True))
    logp = x - logz
    nll = -logp[np.arange(n), labels].mean()

    def grad_fn(g):
        if logits.requires_grad:
            sm = np.exp(logp)
            sm[np.arange(n), labels] -= 1.0
            _accum(logits, g[0, 0] * sm / n)

    return _node(np.array([[nll]]), (logits,), grad_fn)


# ---------------------------------------------------------------------------
# reverse pass and gradient checking
# ---------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate dloss/dt into ``t.grad`` for every tensor on the loss path."""
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a 1x1 loss, got {loss.shape}")
    if not loss.requires_grad:
        return
    loss.grad = np.ones((1, 1))
    for node in reversed(_topo_order(loss)):
        if node._grad_fn is not None:
            node._grad_fn(node.grad)


def gradients(loss: Tensor, params: Iterable[Tensor]) -> dict[str, np.ndarray]:
    """Run backward and collect per-parameter gradients by name.

    Parameters that do not influence the loss get exact zeros.
    """
    params = list(params)
    for p in params:
        p.grad = None
    backward(loss)
    out: dict[str, np.ndarray] = {}
    for p in params:
        name = p.name if p.name is not None else f"param@{id(p):x}"
        out[name] = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
    return out


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


@dataclass
class FiniteDiffEntry:
    name: str
    max_rel_err: float
    checked: int
    passed: bool


@dataclass
class FiniteDiffReport:
    tolerance: float
    step: float
    entries: list[FiniteDiffEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def summary(self) -> str:
        lines = [
            f"{'PASS' if e.passed else 'FAIL'}  {e.name:<28} "
            f"max_rel_err={e.max_rel_err:.3e}  coords={e.checked}"
            for e in self.entries
        ]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (tolerance {self.tolerance:g})")
        return "\n".join(lines)


# Floor for the relative-error denominator. Central differences at step h
# carry roundoff noise of roughly |loss| * eps / (2h); at h = 1e-5 and loss
# values of order 1..10 that is a few times 1e-10, so entries where both
# gradients sit below 1e-5 are compared against the floor (absolute scale
# 1e-9 at the default tolerance) instead of drowning in quantization noise.
_REL_ERR_FLOOR = 1e-5


def _rel_err(a: float, f: float) -> float:
    return abs(a - f) / max(abs(a), abs(f), _REL_ERR_FLOOR)


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> FiniteDiffReport:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must rebuild the graph from the current parameter data on
    every call and be deterministic; the check evaluates it twice up front
    and refuses to proceed on a mismatch. ``max_coords`` limits how many
    coordinates per parameter are probed (all by default).
    """
    if step <= 0:
        raise ConfigError(f"finite difference step must be positive, got {step}")
    base_a = loss_fn().item()
    base_b = loss_fn().item()
    if base_a != base_b:
        raise DeterminismError(f"loss function is not deterministic: {base_a!r} != {base_b!r}")

    grads = gradients(loss_fn(), params)
    report = FiniteDiffReport(tolerance=tolerance, step=step)
    for p in params:
        name = p.name if p.name is not None else f"param@{id(p):x}"
        analytic = grads[name]
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            gen = rng if rng is not None else np.random.default_rng(0)
            idx = gen.choice(flat.size, size=max_coords, replace=False)
        worst = 0.0
        for i in idx:
            keep = flat[i]
            flat[i] = keep + step
            hi = loss_fn().item()
            flat[i] = keep - step
            lo = loss_fn().item()
            flat[i] = keep
            fd = (hi - lo) / (2.0 * step)
            worst = max(worst, _rel_err(analytic.reshape(-1)[i], fd))
        report.entries.append(
            FiniteDiffEntry(name=name, max_rel_err=worst, checked=len(idx), passed=worst <= tolerance)
        )
    return report
