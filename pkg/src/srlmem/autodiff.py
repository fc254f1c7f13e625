"""Dense-tensor reverse-mode differentiation core.

A Tensor wraps a 2-D (occasionally 1-D) numpy array; operations build a
tape of backward closures that `Tensor.backward` replays in reverse
topological order. The module also carries the LSTM machinery, dropout,
cross-entropy, the Adam optimizer, and a finite-difference gradient
checker: just enough to express the tagger and verify its gradients.

Double precision is the default so gradient checks have headroom;
`set_dtype(np.float32)` switches to a fast single-precision mode.
Tapes are single-threaded; independent tapes may run in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_DTYPE = np.dtype(np.float64)
_GRAD_ENABLED = True


def set_dtype(dt) -> None:
    global _DTYPE
    dt = np.dtype(dt)
    if dt not in (np.dtype(np.float64), np.dtype(np.float32)):
        raise ValueError(f"unsupported dtype {dt}")
    _DTYPE = dt


def default_dtype() -> np.dtype:
    return _DTYPE


class no_grad:
    """Context manager that disables tape recording (forward-only mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        """Accumulate d(self)/d(param) into .grad of every reachable tensor.

        Grads add onto any existing .grad, so calling backward on several
        scalar losses accumulates their gradients (used for batching).
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        _accum(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Convenience arithmetic used mainly by tests.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return mul_scalar(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)  # own the buffer before +=
    else:
        t.grad += g


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def zero_grads(params) -> None:
    for t in params.values() if isinstance(params, dict) else params:
        t.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and structural operations


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bw():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(out.grad, b.data.shape))

    out = _make(out_data, (a, b), bw)
    return out


def neg(a: Tensor) -> Tensor:
    def bw():
        _accum(a, -out.grad)

    out = _make(-a.data, (a,), bw)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bw():
        _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))

    out = _make(out_data, (a, b), bw)
    return out


def mul_scalar(a: Tensor, c: float) -> Tensor:
    def bw():
        _accum(a, out.grad * c)

    out = _make(a.data * c, (a,), bw)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {a.data.shape} x {b.data.shape}"
        )
    out_data = a.data @ b.data

    def bw():
        _accum(a, out.grad @ b.data.T)
        _accum(b, a.data.T @ out.grad)

    out = _make(out_data, (a, b), bw)
    return out


def transpose(a: Tensor) -> Tensor:
    def bw():
        _accum(a, out.grad.T)

    out = _make(a.data.T, (a,), bw)
    return out


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ValueError("concat of zero tensors")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if axis == 0:
                _accum(t, out.grad[lo:hi])
            else:
                _accum(t, out.grad[:, lo:hi])

    out = _make(out_data, tuple(tensors), bw)
    return out


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows of a 2-D tensor; the backward pass scatter-adds."""
    index = np.asarray(idx, dtype=np.intp)
    out_data = a.data[index]

    def bw():
        ga = np.zeros_like(a.data)
        np.add.at(ga, index, out.grad)
        _accum(a, ga)

    out = _make(out_data, (a,), bw)
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def bw():
        ga = np.zeros_like(a.data)
        ga[:, start:stop] = out.grad
        _accum(a, ga)

    out = _make(a.data[:, start:stop], (a,), bw)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))

    def bw():
        _accum(a, out.grad * s * (1.0 - s))

    out = _make(s, (a,), bw)
    return out


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def bw():
        _accum(a, out.grad * (1.0 - t * t))

    out = _make(t, (a,), bw)
    return out


def sum_all(a: Tensor) -> Tensor:
    def bw():
        _accum(a, np.full_like(a.data, out.grad[0, 0]))

    out = _make(a.data.sum().reshape(1, 1), (a,), bw)
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bw():
        _accum(a, np.full_like(a.data, out.grad[0, 0] / n))

    out = _make(a.data.mean().reshape(1, 1), (a,), bw)
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction; rejects non-finite inputs."""
    if not np.isfinite(a.data).all():
        raise ValueError("softmax_rows over non-finite values")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bw():
        g = out.grad
        dot = (g * y).sum(axis=1, keepdims=True)
        _accum(a, (g - dot) * y)

    out = _make(y, (a,), bw)
    return out


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: scales by 1/(1-rate) at train time so inference
    needs no rescaling. Identity when not training or rate == 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(a.data.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)

    def bw():
        _accum(a, out.grad * mask)

    out = _make(a.data * mask, (a,), bw)
    return out


def cross_entropy(logits: Tensor, gold) -> Tensor:
    """Mean over positions of -log softmax(logits)[gold]; returns a 1x1 tensor."""
    gold_ids = np.asarray(gold, dtype=np.intp)
    n, n_classes = logits.data.shape
    if gold_ids.shape != (n,):
        raise ValueError(f"gold ids shape {gold_ids.shape} does not match {n} rows")
    if gold_ids.min(initial=0) < 0 or gold_ids.max(initial=-1) >= n_classes:
        raise ValueError(f"gold id out of range for {n_classes} classes")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    loss = -logp[np.arange(n), gold_ids].mean()

    def bw():
        soft = np.exp(logp)
        soft[np.arange(n), gold_ids] -= 1.0
        _accum(logits, out.grad[0, 0] * soft / n)

    out = _make(np.array(loss).reshape(1, 1), (logits,), bw)
    return out


# ---------------------------------------------------------------------------
# LSTM machinery

# Gate order inside the 4h-wide parameter blocks: input, forget, cell, output.
# The forget slice [h:2h] of each bias starts at 1.0.


@dataclass
class LstmDirection:
    W: Tensor  # input weights, d_in x 4h
    U: Tensor  # recurrent weights, h x 4h
    b: Tensor  # bias, 1 x 4h


@dataclass
class LstmLayer:
    fwd: LstmDirection
    bwd: LstmDirection


@dataclass
class LstmParams:
    layers: list[LstmLayer]
    input_size: int
    hidden_size: int  # per direction

    @property
    def output_size(self) -> int:
        return 2 * self.hidden_size

    def named(self, prefix: str):
        for li, layer in enumerate(self.layers):
            for dname, d in (("fwd", layer.fwd), ("bwd", layer.bwd)):
                yield f"{prefix}.l{li}.{dname}.W", d.W
                yield f"{prefix}.l{li}.{dname}.U", d.U
                yield f"{prefix}.l{li}.{dname}.b", d.b


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_lstm(
    input_size: int,
    hidden_size: int,
    num_layers: int,
    rng: np.random.Generator,
    forget_bias: float = 1.0,
) -> LstmParams:
    """Uniform fan-in input weights, orthogonal recurrent blocks, forget
    bias pinned to `forget_bias`."""
    layers = []
    d_in = input_size
    for _ in range(num_layers):
        dirs = []
        for _ in range(2):
            k = 1.0 / np.sqrt(d_in)
            w = rng.uniform(-k, k, size=(d_in, 4 * hidden_size))
            u = np.concatenate([_orthogonal(rng, hidden_size) for _ in range(4)], axis=1)
            b = np.zeros((1, 4 * hidden_size))
            b[0, hidden_size : 2 * hidden_size] = forget_bias
            dirs.append(
                LstmDirection(
                    W=Tensor(w, requires_grad=True),
                    U=Tensor(u, requires_grad=True),
                    b=Tensor(b, requires_grad=True),
                )
            )
        layers.append(LstmLayer(fwd=dirs[0], bwd=dirs[1]))
        d_in = 2 * hidden_size
    return LstmParams(layers=layers, input_size=input_size, hidden_size=hidden_size)


def _run_direction(p: LstmDirection, xs: Tensor, reverse: bool) -> list[Tensor]:
    n = xs.data.shape[0]
    h = p.U.data.shape[0]
    xw = matmul(xs, p.W)  # precompute the input contribution for all steps
    hstate = Tensor(np.zeros((1, h)))
    cstate = Tensor(np.zeros((1, h)))
    outs: list[Tensor | None] = [None] * n
    order = range(n - 1, -1, -1) if reverse else range(n)
    for t in order:
        z = add(add(take_rows(xw, [t]), matmul(hstate, p.U)), p.b)
        i = sigmoid(slice_cols(z, 0, h))
        f = sigmoid(slice_cols(z, h, 2 * h))
        g = tanh(slice_cols(z, 2 * h, 3 * h))
        o = sigmoid(slice_cols(z, 3 * h, 4 * h))
        cstate = add(mul(f, cstate), mul(i, g))
        hstate = mul(o, tanh(cstate))
        outs[t] = hstate
    return outs  # type: ignore[return-value]


def bilstm_apply(
    params: LstmParams,
    xs: Tensor,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Stacked bidirectional LSTM over a sequence of row vectors.

    Output row i is the concatenation of the forward state after reading
    x_0..x_i and the backward state after reading x_{n-1}..x_i. Each layer
    consumes the previous layer's full output; dropout sits between layers
    only (callers own input dropout).
    """
    if xs.data.ndim != 2 or xs.data.shape[1] != params.input_size:
        raise ValueError(
            f"bilstm input shape {xs.data.shape} does not match "
            f"declared input size {params.input_size}"
        )
    if xs.data.shape[0] < 1:
        raise ValueError("bilstm needs at least one step")
    inp = xs
    out = xs
    for li, layer in enumerate(params.layers):
        if li > 0:
            inp = dropout(inp, dropout_rate, training, rng)
        f_rows = _run_direction(layer.fwd, inp, reverse=False)
        b_rows = _run_direction(layer.bwd, inp, reverse=True)
        out = concat([concat(f_rows, axis=0), concat(b_rows, axis=0)], axis=1)
        inp = out
    return out


# ---------------------------------------------------------------------------
# Optimizer


class AdamState:
    """Bias-corrected Adam over a named parameter dict."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}


def adam_step(state: AdamState, params: dict[str, Tensor]) -> None:
    """One update; parameters without a recorded gradient are skipped."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name in sorted(params):
        p = params[name]
        if p.grad is None:
            continue
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Global-norm gradient clipping; returns the pre-clip norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    per_param: dict[str, float]  # max relative error per parameter
    tol: float

    @property
    def max_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def worst_param(self) -> str | None:
        if not self.per_param:
            return None
        return max(self.per_param, key=self.per_param.get)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol


def grad_check(
    f,
    params: dict[str, Tensor],
    step: float = 1e-3,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare recorded gradients of the scalar `f()` against central
    finite differences.

    `f` must be deterministic across calls (seed any rng inside it).
    Relative error uses max(|analytic|, |numeric|, 0.1) as denominator so
    tiny gradients are compared absolutely. Requires float64 mode.
    """
    if _DTYPE != np.dtype(np.float64):
        raise RuntimeError("grad_check requires float64 mode")
    zero_grads(params)
    loss = f()
    loss.backward()
    analytic = {
        k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for k, t in params.items()
    }
    report: dict[str, float] = {}
    with no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            ga = analytic[name].reshape(-1)
            worst = 0.0
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = f().item()
                flat[i] = orig - step
                down = f().item()
                flat[i] = orig
                fd = (up - down) / (2.0 * step)
                err = abs(ga[i] - fd) / max(abs(ga[i]), abs(fd), 0.1)
                if err > worst:
                    worst = err
            report[name] = worst
    return GradCheckReport(per_param=report, tol=tol)
