"""Dense float64 tensors with tape-based reverse-mode differentiation.

The engine is define-by-run: while a `Tape` is active (see `use_tape`),
every operation whose inputs require gradients appends a node to it.
`backward` replays the tape in reverse and accumulates gradients onto the
participating tensors. Tensors are thin wrappers around contiguous numpy
arrays; everything is float64.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

GELU_C0 = math.sqrt(2.0 / math.pi)
GELU_C1 = 0.044715

MASKED_SCORE = -1e30  # finite stand-in for the -inf score sentinel


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class EmptyCandidateError(ValueError):
    """Masked softmax received a mask with no unmasked entry."""


class Tape:
    """Ordered operation record; append order is topological order."""

    __slots__ = ("nodes",)

    def __init__(self) -> None:
        self.nodes: list[_Node] = []


class _Node:
    __slots__ = ("parents", "outputs", "bwd")

    def __init__(self, parents, outputs, bwd):
        self.parents = parents
        self.outputs = outputs
        self.bwd = bwd


_TAPES: list[Tape] = []


class use_tape:
    """Context manager activating a tape for the operations inside it."""

    def __init__(self, tape: Tape) -> None:
        self.tape = tape

    def __enter__(self) -> Tape:
        _TAPES.append(self.tape)
        return self.tape

    def __exit__(self, *exc) -> None:
        _TAPES.pop()


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


class Tensor:
    __slots__ = ("data", "requires_grad", "_grad")

    def __init__(self, data, requires_grad: bool = False) -> None:
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to 1-d; keep them 0-d
        self.data = arr if arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self._grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def grad(self) -> np.ndarray | None:
        """Accumulated gradient; zeros if the tensor was not on the path."""
        if not self.requires_grad:
            return None
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(parents: Sequence[Tensor], out_data, bwd) -> Tensor:
    """Wrap `out_data`, appending a tape node when gradients are needed."""
    tape = active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.nodes.append(_Node(tuple(parents), (out,), bwd))
    return out


def _record_multi(parents: Sequence[Tensor], outs_data, bwd) -> tuple[Tensor, ...]:
    tape = active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    outs = tuple(Tensor(d, requires_grad=needs) for d in outs_data)
    if needs:
        tape.nodes.append(_Node(tuple(parents), outs, bwd))
    return outs


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; a 1-D `b` broadcasts over the rows of a 2-D `a`."""
    if a.data.shape == b.data.shape:
        def bwd(gs):
            g = gs[0]
            return (g, g)
        return _record((a, b), a.data + b.data, bwd)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        def bwd(gs):
            g = gs[0]
            return (g, g.sum(axis=0))
        return _record((a, b), a.data + b.data, bwd)
    raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub: incompatible shapes {a.data.shape} and {b.data.shape}")

    def bwd(gs):
        g = gs[0]
        return (g, -g)

    return _record((a, b), a.data - b.data, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")
    ad, bd = a.data, b.data

    def bwd(gs):
        g = gs[0]
        return (g * bd, g * ad)

    return _record((a, b), ad * bd, bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def bwd(gs):
        return (gs[0] * s,)

    return _record((a,), a.data * s, bwd)


def add_const(a: Tensor, c: float) -> Tensor:
    def bwd(gs):
        return (gs[0],)

    return _record((a,), a.data + float(c), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(gs):
        return (-gs[0],)

    return _record((a,), -a.data, bwd)


def log(a: Tensor) -> Tensor:
    ad = a.data

    def bwd(gs):
        return (gs[0] / ad,)

    return _record((a,), np.log(ad), bwd)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient goes to `a`."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"maximum: incompatible shapes {a.data.shape} and {b.data.shape}")
    take_a = a.data >= b.data

    def bwd(gs):
        g = gs[0]
        return (np.where(take_a, g, 0.0), np.where(take_a, 0.0, g))

    return _record((a, b), np.where(take_a, a.data, b.data), bwd)


def vec_minus_scalar(v: np.ndarray, s: Tensor) -> Tensor:
    """Constant vector minus a scalar tensor, broadcast over entries."""
    v = np.asarray(v, dtype=np.float64)

    def bwd(gs):
        return (-gs[0].sum(),)

    return _record((s,), v - s.data, bwd)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    """Matrix product; also accepts 1-D operands as vectors."""
    ad, bd = a.data, b.data
    bm = bd.T if transpose_b else bd
    inner_a = ad.shape[-1]
    inner_b = bm.shape[0] if bm.ndim > 0 else 0
    if inner_a != inner_b:
        raise ShapeError(
            f"matmul: inner dimensions disagree: {ad.shape} x "
            f"{bd.shape}{' (transposed)' if transpose_b else ''}"
        )
    out = ad @ bm

    def bwd(gs):
        g = gs[0]
        if ad.ndim == 1 and bm.ndim == 2:
            ga = g @ bm.T
            gb = np.outer(ad, g)
        elif ad.ndim == 2 and bm.ndim == 1:
            ga = np.outer(g, bm)
            gb = ad.T @ g
        else:
            ga = g @ bm.T
            gb = ad.T @ g
        if transpose_b:
            gb = gb.T
        return (ga, gb)

    return _record((a, b), out, bwd)


def transpose(a: Tensor) -> Tensor:
    def bwd(gs):
        return (gs[0].T,)

    return _record((a,), a.data.T.copy(), bwd)


# ---------------------------------------------------------------------------
# shape manipulation


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors with equal row counts along columns."""
    widths = [p.data.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def bwd(gs):
        return tuple(np.ascontiguousarray(g) for g in np.split(gs[0], splits, axis=1))

    return _record(tuple(parts), np.concatenate([p.data for p in parts], axis=1), bwd)


def concat_vec(parts: Sequence[Tensor]) -> Tensor:
    lengths = [p.data.shape[0] for p in parts]
    splits = np.cumsum(lengths)[:-1]

    def bwd(gs):
        return tuple(np.split(gs[0], splits))

    return _record(tuple(parts), np.concatenate([p.data for p in parts]), bwd)


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    n_cols = a.data.shape[1]

    def bwd(gs):
        g = np.zeros((a.data.shape[0], n_cols))
        g[:, j0:j1] = gs[0]
        return (g,)

    return _record((a,), a.data[:, j0:j1].copy(), bwd)


def row(a: Tensor, i: int) -> Tensor:
    """Row `i` of a 2-D tensor as a vector."""
    shape = a.data.shape

    def bwd(gs):
        g = np.zeros(shape)
        g[i] = gs[0]
        return (g,)

    return _record((a,), a.data[i].copy(), bwd)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.data.shape

    def bwd(gs):
        g = np.zeros(shape)
        np.add.at(g, idx, gs[0])
        return (g,)

    return _record((a,), a.data[idx], bwd)


def aggregate_rows(msg: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """Scatter-sum of message rows into `n_rows` output rows keyed by idx."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((n_rows, msg.data.shape[1]))
    np.add.at(out, idx, msg.data)

    def bwd(gs):
        return (gs[0][idx],)

    return _record((msg,), out, bwd)


def stack_scalars(parts: Sequence[Tensor]) -> Tensor:
    def bwd(gs):
        g = gs[0]
        return tuple(np.asarray(g[i]) for i in range(len(parts)))

    return _record(tuple(parts), np.array([p.data.reshape(()) for p in parts]), bwd)


def pick(v: Tensor, i: int) -> Tensor:
    """Scalar entry `i` of a vector."""
    n = v.data.shape[0]

    def bwd(gs):
        g = np.zeros(n)
        g[i] = gs[0]
        return (g,)

    return _record((v,), np.asarray(v.data[i]), bwd)


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace masked entries with a constant; no gradient flows there."""
    mask = np.asarray(mask, dtype=bool)
    out = a.data.copy()
    out[mask] = float(value)

    def bwd(gs):
        g = gs[0].copy()
        g[mask] = 0.0
        return (g,)

    return _record((a,), out, bwd)


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape

    def bwd(gs):
        return (np.full(shape, float(gs[0])),)

    return _record((a,), np.asarray(a.data.sum()), bwd)


def mean_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    size = a.data.size

    def bwd(gs):
        return (np.full(shape, float(gs[0]) / size),)

    return _record((a,), np.asarray(a.data.mean()), bwd)


# ---------------------------------------------------------------------------
# nonlinearities


def _gelu_forward(x: np.ndarray) -> np.ndarray:
    inner = GELU_C0 * (x + GELU_C1 * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = GELU_C0 * (x + GELU_C1 * x ** 3)
    t = np.tanh(inner)
    dinner = GELU_C0 * (1.0 + 3.0 * GELU_C1 * x ** 2)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner


def gelu(a: Tensor) -> Tensor:
    """GeLU, tanh approximation; the gradient differentiates the same form."""
    ad = a.data

    def bwd(gs):
        return (gs[0] * _gelu_grad(ad),)

    return _record((a,), _gelu_forward(ad), bwd)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, stabilized by max subtraction."""
    x = a.data
    e = np.exp(x - x.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)

    def bwd(gs):
        g = gs[0]
        dot = (g * p).sum(axis=1, keepdims=True)
        return (p * (g - dot),)

    return _record((a,), p, bwd)


def softmax_masked(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over unmasked entries only; masked outputs are exactly 0.

    `mask` is boolean with True meaning masked out. Raises
    EmptyCandidateError when every entry is masked.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.data.shape:
        raise ShapeError(
            f"softmax_masked: mask shape {mask.shape} != logits shape {logits.data.shape}")
    if mask.all():
        raise EmptyCandidateError("softmax_masked: every entry is masked")
    keep = ~mask
    x = logits.data[keep]
    e = np.exp(x - x.max())
    p = np.zeros_like(logits.data)
    p[keep] = e / e.sum()

    def bwd(gs):
        g = gs[0]
        dot = float((g * p).sum())
        gl = p * (g - dot)
        gl[mask] = 0.0
        return (gl,)

    return _record((logits,), p, bwd)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise layer normalization with learned gain and bias."""
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    gd = gain.data

    def bwd(gs):
        g = gs[0]
        d = x.shape[1]
        gxn = g * gd
        # d/dx of (x - mu) * inv with mu, inv functions of the row
        term = gxn - gxn.mean(axis=1, keepdims=True) - xn * (gxn * xn).mean(axis=1, keepdims=True)
        ga = term * inv
        ggain = (g * xn).sum(axis=0)
        gbias = g.sum(axis=0)
        return (ga, ggain, gbias)

    return _record((a, gain, bias), xn * gd + bias.data, bwd)


# ---------------------------------------------------------------------------
# recurrent cell


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor,
              b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step on vectors; gate layout along the weight columns is
    [input, forget, candidate, output]."""
    d_h = h.data.shape[0]
    if w_ih.data.shape != (x.data.shape[0], 4 * d_h) or w_hh.data.shape != (d_h, 4 * d_h):
        raise ShapeError(
            f"lstm_cell: weights {w_ih.data.shape}/{w_hh.data.shape} do not match "
            f"input {x.data.shape} and hidden {h.data.shape}")
    z = x.data @ w_ih.data + h.data @ w_hh.data + b.data
    zi, zf, zg, zo = z[:d_h], z[d_h:2 * d_h], z[2 * d_h:3 * d_h], z[3 * d_h:]
    i = 1.0 / (1.0 + np.exp(-zi))
    f = 1.0 / (1.0 + np.exp(-zf))
    g = np.tanh(zg)
    o = 1.0 / (1.0 + np.exp(-zo))
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    xd, hd, cd = x.data, h.data, c.data
    w_ih_d, w_hh_d = w_ih.data, w_hh.data

    def bwd(gs):
        gh, gc = gs
        go = gh * tc
        gc_total = gc + gh * o * (1.0 - tc ** 2)
        gf = gc_total * cd
        gc_prev = gc_total * f
        gi = gc_total * g
        gg = gc_total * i
        dz = np.concatenate([
            gi * i * (1.0 - i),
            gf * f * (1.0 - f),
            gg * (1.0 - g ** 2),
            go * o * (1.0 - o),
        ])
        gx = w_ih_d @ dz
        gh_prev = w_hh_d @ dz
        g_w_ih = np.outer(xd, dz)
        g_w_hh = np.outer(hd, dz)
        return (gx, gh_prev, gc_prev, g_w_ih, g_w_hh, dz)

    return _record_multi((x, h, c, w_ih, w_hh, b), (h_new, c_new), bwd)


# ---------------------------------------------------------------------------
# losses


def quantile_pinball(pred: Tensor, target: np.ndarray) -> Tensor:
    """Pinball loss summed over the nine deciles, averaged over steps.

    For each step z the nine-quantile sum is evaluated literally; the grid
    is symmetric, so the per-step subgradient is +-0.5/m.
    """
    target = np.asarray(target, dtype=np.float64)
    if pred.data.shape != target.shape:
        raise ShapeError(
            f"quantile_pinball: prediction {pred.data.shape} vs target {target.shape}")
    m = target.shape[0]
    diff = target - pred.data  # positive when under-predicted
    total = 0.0
    for k in range(1, 10):
        gamma = k / 10.0
        total += np.where(diff <= 0.0, (1.0 - gamma) * (-diff), gamma * diff).sum()
    over = pred.data >= target

    def bwd(gs):
        g = float(gs[0]) / (9.0 * m)
        return (np.where(over, 4.5, -4.5) * g,)

    return _record((pred,), np.asarray(total / (9.0 * m)), bwd)


# ---------------------------------------------------------------------------
# backward pass


def backward(output: Tensor, tape: Tape) -> None:
    """Populate gradients of every tensor that `output` depends on.

    `output` must be scalar (a single element). Gradients accumulate into
    `Tensor._grad`; leaves keep whatever was there before, so call
    `zero_grad` between optimization steps.
    """
    if output.data.size != 1:
        raise ShapeError(f"backward: output must be scalar, got shape {output.data.shape}")
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    if output.requires_grad and output._grad is None:
        pass  # leaf outputs handled after the walk
    for node in reversed(tape.nodes):
        out_grads = []
        any_grad = False
        for out in node.outputs:
            g = grads.get(id(out))
            if g is None:
                g = np.zeros_like(out.data)
            else:
                any_grad = True
            out_grads.append(g)
        if not any_grad:
            continue
        parent_grads = node.bwd(out_grads)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            acc = grads.get(id(p))
            if acc is None:
                grads[id(p)] = np.asarray(pg, dtype=np.float64).reshape(p.data.shape)
            else:
                grads[id(p)] = acc + np.asarray(pg, dtype=np.float64).reshape(p.data.shape)
        # interior results will not be revisited
        for out in node.outputs:
            grads.pop(id(out), None)
    # remaining entries belong to leaves (tensors produced outside this tape)
    _assign_leaf_grads(tape, grads, output)


def _assign_leaf_grads(tape: Tape, grads: dict[int, np.ndarray], output: Tensor) -> None:
    seen: set[int] = set()
    for node in tape.nodes:
        for p in node.parents:
            if p.requires_grad and id(p) in grads and id(p) not in seen:
                seen.add(id(p))
                if p._grad is None:
                    p._grad = grads[id(p)]
                else:
                    p._grad = p._grad + grads[id(p)]
    if output.requires_grad and id(output) in grads and id(output) not in seen:
        if output._grad is None:
            output._grad = grads[id(output)]
        else:
            output._grad = output._grad + grads[id(output)]


# ---------------------------------------------------------------------------
# gradient verification


def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor,
                            eps: float = 1e-5) -> float:
    """Worst relative error of the analytic gradient of `f` at `x` against
    central finite differences, checked coordinate by coordinate.

    `f` must return a scalar tensor. The relative error of a coordinate is
    |a - n| / max(|a|, |n|, 1e-6).
    """
    x_ad = Tensor(x.data.copy(), requires_grad=True)
    tape = Tape()
    with use_tape(tape):
        out = f(x_ad)
    backward(out, tape)
    analytic = x_ad.grad.reshape(-1).copy()

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    probe = Tensor(x.data.copy())
    pf = probe.data.reshape(-1)
    for i in range(flat.size):
        orig = pf[i]
        pf[i] = orig + eps
        hi = f(probe).item()
        pf[i] = orig - eps
        lo = f(probe).item()
        pf[i] = orig
        numeric[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))
