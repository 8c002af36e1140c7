"""Reverse-mode differentiation on an explicit operation tape.

Every value is a 2-D float64 array; scalars live in shape (1, 1) tensors.
Operations compute eagerly and, when a tape is active and any input is
tracked, append a record with a backward rule. ``Tape.backward`` walks the
records in reverse, accumulating (never overwriting) gradients, so shared
inputs receive the sum of all path gradients.

Sparse matrices enter only as constants: graph structure carries no
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .sparse import CsrMatrix


@dataclass(eq=False)
class Tensor:
    """Dense 2-D array with an accumulated-gradient slot."""

    values: np.ndarray
    requires_grad: bool = False
    grad: np.ndarray | None = None
    tape_id: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {self.values.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError("item() requires a single-element tensor")
        return float(self.values.reshape(())[()])


def tensor(values, requires_grad: bool = False) -> Tensor:
    """Coerce nested lists / 1-D arrays to a 2-D Tensor (row vector for 1-D)."""
    return Tensor(np.atleast_2d(np.asarray(values, dtype=np.float64)),
                  requires_grad=requires_grad)


class TapeRecord(NamedTuple):
    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], tuple]


_ACTIVE_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of executed operations, usable as a context manager.

    Records are appended in execution order, which makes the list
    topologically sorted by construction; the backward pass is a single
    reverse sweep that touches each record once.
    """

    def __init__(self):
        self.records: list[TapeRecord] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        popped = _ACTIVE_TAPES.pop()
        assert popped is self

    def op_names(self) -> list[str]:
        return [r.name for r in self.records]

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into .grad of every tracked tensor."""
        if loss.values.size != 1:
            raise ValueError("backward requires a scalar loss")
        if loss.tape_id is None or loss.tape_id >= len(self.records) \
                or self.records[loss.tape_id].output is not loss:
            raise ValueError("loss was not produced on this tape")
        loss.grad = np.ones_like(loss.values)
        for rec in reversed(self.records[:loss.tape_id + 1]):
            g = rec.output.grad
            if g is None:
                continue
            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.zeros_like(t.values)
                t.grad += gi


def _record(name: str, inputs: tuple[Tensor, ...], out_values: np.ndarray,
            backward: Callable[[np.ndarray], tuple]) -> Tensor:
    """Create the output tensor for an op, recording it if a tape is live."""
    tape = _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_values, requires_grad=tracked)
    if tracked:
        out.tape_id = len(tape.records)
        tape.records.append(TapeRecord(name, inputs, out, backward))
    return out


def apply_op(name: str, inputs: tuple[Tensor, ...], out_values: np.ndarray,
             backward: Callable[[np.ndarray], tuple]) -> Tensor:
    """Extension hook for custom differentiable operations."""
    return _record(name, inputs, out_values, backward)


# -- primitive operations ------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.values.T, a.values.T @ g

    return _record("matmul", (a, b), a.values @ b.values, backward)


def spmm(a: CsrMatrix, h: Tensor) -> Tensor:
    """Sparse constant times dense tensor; gradient flows to the dense side only."""
    if a.n_cols != h.shape[0]:
        raise ValueError(f"spmm dimension mismatch: {a.n_rows}x{a.n_cols} @ {h.shape}")

    def backward(g):
        return (a.transpose.matmat(g),)

    return _record("spmm", (h,), a.matmat(h.values), backward)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")

    def backward(g):
        return g * b.values, g * a.values

    return _record("hadamard", (a, b), a.values * b.values, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _record("add", (a, b), a.values + b.values, lambda g: (g, g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record("scale", (a,), a.values * c, lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.values > 0  # subgradient 0 at exactly 0
    return _record("relu", (a,), np.where(mask, a.values, 0.0),
                   lambda g: (g * mask,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is stable for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.values)
    return _record("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


def dropout(a: Tensor, p: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p); identity at inference."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = rng.random(a.shape) >= p
    scale_ = 1.0 / (1.0 - p)
    return _record("dropout", (a,), a.values * keep * scale_,
                   lambda g: (g * keep * scale_,))


def masked_softmax_cross_entropy(logits: Tensor, labels: np.ndarray,
                                 mask: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the true class over masked rows."""
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("empty mask")
    n_classes = logits.shape[1]
    picked = labels[idx]
    if picked.min() < 0 or picked.max() >= n_classes:
        raise ValueError("label out of range under mask")
    z = logits.values[idx]
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(np.mean(log_norm[:, 0] - z[np.arange(idx.size), picked]))

    def backward(g):
        probs = np.exp(z - log_norm)
        probs[np.arange(idx.size), picked] -= 1.0
        full = np.zeros_like(logits.values)
        full[idx] = probs / idx.size
        return (full * g[0, 0],)

    return _record("masked_softmax_cross_entropy", (logits,),
                   np.array([[loss]]), backward)


def bce_with_logits(scores: Tensor, targets: np.ndarray,
                    pos_weight: float = 1.0) -> Tensor:
    """Mean binary cross-entropy on raw scores, positives weighted by pos_weight.

    Uses the softplus form pw*t*softplus(-x) + (1-t)*softplus(x), which is
    stable for large |x|.
    """
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    x = scores.values.reshape(-1)
    if x.shape != targets.shape:
        raise ValueError(f"bce length mismatch: {x.shape} vs {targets.shape}")
    softplus_neg = np.logaddexp(0.0, -x)
    softplus_pos = np.logaddexp(0.0, x)
    loss = float(np.mean(pos_weight * targets * softplus_neg
                         + (1.0 - targets) * softplus_pos))

    def backward(g):
        grad = (-pos_weight * targets * _sigmoid(-x)
                + (1.0 - targets) * _sigmoid(x)) / x.size
        return (grad.reshape(scores.shape) * g[0, 0],)

    return _record("bce_with_logits", (scores,), np.array([[loss]]), backward)


def pair_dot(z: Tensor, pairs: np.ndarray) -> Tensor:
    """Row dot products z[i] . z[j] for each (i, j) pair; shape (P, 1)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) and (pairs.min() < 0 or pairs.max() >= z.shape[0]):
        raise ValueError("pair index out of range")
    left, right = pairs[:, 0], pairs[:, 1]
    scores = np.einsum("ij,ij->i", z.values[left], z.values[right])[:, None]

    def backward(g):
        out = np.zeros_like(z.values)
        np.add.at(out, left, g * z.values[right])
        np.add.at(out, right, g * z.values[left])
        return (out,)

    return _record("pair_dot", (z,), scores, backward)


# -- initialization and optimization --------------------------------------


def glorot_init(fan_in: int, fan_out: int, rng) -> Tensor:
    """Uniform init on [-L, L] with L = sqrt(6 / (fan_in + fan_out))."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fans must be positive")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                  requires_grad=True)


@dataclass
class AdamState:
    """Adam with bias correction; weight decay enters as an L2 gradient term."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, Tensor], AdamState]:
    """One optimizer step, updating parameter values and moments in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.values.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        if state.weight_decay:
            g = g + state.weight_decay * p.values
        m = state.m.setdefault(name, np.zeros_like(p.values))
        v = state.v.setdefault(name, np.zeros_like(p.values))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.values -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# -- gradient checking -----------------------------------------------------


def gradcheck(fn: Callable[[], Tensor], params: list[Tensor],
              eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` must be deterministic (dropout off) and return a scalar tensor;
    it is re-evaluated twice per parameter coordinate. The default step
    balances truncation against float64 roundoff for O(1) values.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        out = fn()
        tape.backward(out)
    if not np.isfinite(out.values).all():
        raise ValueError("non-finite loss in gradcheck")
    analytic = [np.zeros_like(p.values) if p.grad is None else p.grad.copy()
                for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.values.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = fn().item()
            flat[i] = saved - eps
            f_minus = fn().item()
            flat[i] = saved
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError("non-finite value in finite-difference probe")
            fd = (f_plus - f_minus) / (2.0 * eps)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst
